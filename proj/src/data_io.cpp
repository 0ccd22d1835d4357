#include "mrb/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "mrb/errors.hpp"
#include "mrb/rng.hpp"

namespace mrb {

namespace {
constexpr char kEmbMagic[4] = {'M', 'R', 'E', 'B'};
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  if (m.values.size() != m.rows * m.dim) {
    throw DimensionError("embedding matrix holds " + std::to_string(m.values.size()) +
                         " values, expected " + std::to_string(m.rows) + "x" +
                         std::to_string(m.dim));
  }
  detail::ByteWriter w;
  w.raw(kEmbMagic, 4);
  w.u32(kEmbVersion);
  w.u32(detail::ByteWriter::checked_u32(m.rows, "record count"));
  w.u32(detail::ByteWriter::checked_u32(m.dim, "dimension"));
  w.f32s(m.values.data(), m.values.size());
  w.save(path);
}

EmbeddingMatrix read_embeddings(const std::string& path) {
  auto r = detail::ByteReader::open(path);
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string(kEmbMagic, 4)) {
    throw BadMagicError("'" + path + "' is not an embedding file (bad magic)");
  }
  const auto version = r.u32("version");
  if (version != kEmbVersion) {
    throw VersionError("'" + path + "' has embedding format version " + std::to_string(version) +
                       ", expected " + std::to_string(kEmbVersion));
  }
  EmbeddingMatrix m;
  m.rows = r.u32("record count");
  m.dim = r.u32("dimension");
  const std::size_t n = m.rows * m.dim;
  r.need(n * sizeof(float), "payload");
  m.values.resize(n);
  r.f32s(m.values.data(), n, "payload");
  r.expect_end();
  return m;
}

// ---------------------------------------------------------------------------
// Labels CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw DataError(where + ": unterminated quoted field");
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

LabelTable read_labels(const std::string& path, const std::vector<std::string>* allowed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw DataError("'" + path + "' is empty (expected header id,label)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line, path + ":1");
  if (header.size() != 2 || trim(header[0]) != "id" || trim(header[1]) != "label") {
    throw DataError("'" + path + "' header must be id,label");
  }

  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::set<std::string> seen;
  while (next_line()) {
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = split_csv_line(line, where);
    if (f.size() != 2) {
      throw DataError(where + ": expected 2 fields, got " + std::to_string(f.size()));
    }
    const std::string id = trim(f[0]);
    const std::string label = trim(f[1]);
    if (id.empty()) throw DataError(where + ": blank id");
    if (label.empty()) throw DataError(where + ": blank label for id '" + id + "'");
    if (allowed && std::find(allowed->begin(), allowed->end(), label) == allowed->end()) {
      throw DataError(where + ": unknown label '" + label + "'");
    }
    if (!seen.insert(id).second) throw DataError(where + ": duplicate id '" + id + "'");
    ids.push_back(id);
    names.push_back(label);
  }

  LabelTable table;
  std::set<std::string> classes(names.begin(), names.end());
  if (allowed) classes.insert(allowed->begin(), allowed->end());
  table.class_names.assign(classes.begin(), classes.end());
  table.ids = std::move(ids);
  for (const auto& n : names) {
    const auto it = std::lower_bound(table.class_names.begin(), table.class_names.end(), n);
    table.labels.push_back(static_cast<std::size_t>(it - table.class_names.begin()));
  }
  return table;
}

void write_labels(const std::string& path, const LabelTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "id,label\n";
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    out << csv_field(table.ids.at(i)) << ',' << csv_field(table.class_names.at(table.labels[i]))
        << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Datasets

EmbeddingDataset make_dataset(EmbeddingMatrix bart, EmbeddingMatrix roberta,
                              std::vector<std::size_t> labels,
                              std::vector<std::string> class_names) {
  if (bart.rows != roberta.rows || bart.rows != labels.size()) {
    throw DataError("record counts disagree: bart " + std::to_string(bart.rows) + ", roberta " +
                    std::to_string(roberta.rows) + ", labels " + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_names.size()) {
      throw DataError("label " + std::to_string(labels[i]) + " at record " + std::to_string(i) +
                      " is outside the " + std::to_string(class_names.size()) + "-class table");
    }
  }
  return {std::move(bart), std::move(roberta), std::move(labels), std::move(class_names)};
}

EmbeddingDataset load_dataset(const std::string& bart_path, const std::string& roberta_path,
                              const std::string& labels_path) {
  auto labels = read_labels(labels_path);
  return make_dataset(read_embeddings(bart_path), read_embeddings(roberta_path),
                      std::move(labels.labels), std::move(labels.class_names));
}

namespace {

std::vector<double> random_direction(SeededRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

EmbeddingDataset gen_synthetic(const SynthSpec& spec) {
  if (spec.n_classes < 1 || spec.bart_dim < 1 || spec.roberta_dim < 1) {
    throw ConfigError("synthetic spec needs n_classes, bart_dim and roberta_dim >= 1");
  }
  if (!(spec.separation >= 0.0) || !(spec.sigma > 0.0)) {
    throw ConfigError("synthetic spec needs separation >= 0 and sigma > 0");
  }
  SeededRng root(spec.seed);
  SeededRng mean_rng = root.fork(1);
  SeededRng noise_rng = root.fork(2);
  SeededRng order_rng = root.fork(3);

  const double scale = spec.separation * spec.sigma;
  std::vector<std::vector<double>> bart_means;
  std::vector<std::vector<double>> roberta_means;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    bart_means.push_back(random_direction(mean_rng, spec.bart_dim));
    roberta_means.push_back(random_direction(mean_rng, spec.roberta_dim));
  }

  const std::size_t n = spec.n_classes * spec.per_class;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % spec.n_classes;
  order_rng.shuffle(std::span<std::size_t>(labels));

  auto fill = [&](EmbeddingMatrix& m, std::size_t dim,
                  const std::vector<std::vector<double>>& means) {
    m.rows = n;
    m.dim = dim;
    m.values.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& mu = means[labels[i]];
      for (std::size_t d = 0; d < dim; ++d) {
        m.values[i * dim + d] = static_cast<float>(scale * mu[d] + spec.sigma * noise_rng.normal());
      }
    }
  };
  EmbeddingDataset ds;
  fill(ds.bart, spec.bart_dim, bart_means);
  fill(ds.roberta, spec.roberta_dim, roberta_means);
  ds.labels = std::move(labels);
  const int width = spec.n_classes > 1 ? static_cast<int>(std::to_string(spec.n_classes - 1).size())
                                       : 1;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::string digits = std::to_string(c);
    ds.class_names.push_back("class_" + std::string(width - digits.size(), '0') + digits);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// JSONL corpus

std::vector<Document> read_jsonl_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed JSON (line " + std::to_string(lineno) +
                      "): " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    auto field = [&](const char* key, bool allow_int) {
      if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
      const auto& v = j.at(key);
      if (v.is_string()) return v.get<std::string>();
      if (allow_int && v.is_number_integer()) return std::to_string(v.get<long long>());
      throw DataError(where + ": field '" + key + "' must be a string");
    };
    Document d{field("id", true), field("text", false), field("label", true)};
    if (d.id.empty()) throw DataError(where + ": empty id");
    docs.push_back(std::move(d));
  }
  return docs;
}

void write_jsonl_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& d : docs) {
    out << nlohmann::json{{"id", d.id}, {"text", d.text}, {"label", d.label}}.dump() << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace mrb
