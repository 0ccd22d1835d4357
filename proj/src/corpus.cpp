#include "mrb/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mrb/errors.hpp"

namespace mrb {

const StopwordSet& default_stopwords() {
  static const StopwordSet words{
      "i",          "me",       "my",       "myself",     "we",        "our",      "ours",
      "ourselves",  "you",      "you're",   "you've",     "you'll",    "you'd",    "your",
      "yours",      "yourself", "yourselves", "he",       "him",       "his",      "himself",
      "she",        "she's",    "her",      "hers",       "herself",   "it",       "it's",
      "its",        "itself",   "they",     "them",       "their",     "theirs",   "themselves",
      "what",       "which",    "who",      "whom",       "this",      "that",     "that'll",
      "these",      "those",    "am",       "is",         "are",       "was",      "were",
      "be",         "been",     "being",    "have",       "has",       "had",      "having",
      "do",         "does",     "did",      "doing",      "a",         "an",       "the",
      "and",        "but",      "if",       "or",         "because",   "as",       "until",
      "while",      "of",       "at",       "by",         "for",       "with",     "about",
      "against",    "between",  "into",     "through",    "during",    "before",   "after",
      "above",      "below",    "to",       "from",       "up",        "down",     "in",
      "out",        "on",       "off",      "over",       "under",     "again",    "further",
      "then",       "once",     "here",     "there",      "when",      "where",    "why",
      "how",        "all",      "any",      "both",       "each",      "few",      "more",
      "most",       "other",    "some",     "such",       "no",        "nor",      "not",
      "only",       "own",      "same",     "so",         "than",      "too",      "very",
      "s",          "t",        "can",      "will",       "just",      "don",      "don't",
      "should",     "should've", "now",     "d",          "ll",        "m",        "o",
      "re",         "ve",       "y",        "ain",        "aren",      "aren't",   "couldn",
      "couldn't",   "didn",     "didn't",   "doesn",      "doesn't",   "hadn",     "hadn't",
      "hasn",       "hasn't",   "haven",    "haven't",    "isn",       "isn't",    "ma",
      "mightn",     "mightn't", "mustn",    "mustn't",    "needn",     "needn't",  "shan",
      "shan't",     "shouldn",  "shouldn't", "wasn",      "wasn't",    "weren",    "weren't",
      "won",        "won't",    "wouldn",   "wouldn't"};
  return words;
}

namespace {

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string lower_ascii(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenStage stage,
                                  const StopwordSet& stopwords) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      std::string tok(text.substr(i, j - i));
      if (stage == TokenStage::stats) {
        out.push_back(std::move(tok));
      } else {
        tok = lower_ascii(std::move(tok));
        if (!stopwords.contains(tok)) out.push_back(std::move(tok));
      }
      i = j;
    } else {
      if (stage == TokenStage::stats) out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token statistics

namespace {

struct SummaryBuilder {
  std::vector<std::size_t> lengths;
  std::unordered_set<std::string> vocab;

  void add(const std::vector<std::string>& tokens) {
    lengths.push_back(tokens.size());
    vocab.insert(tokens.begin(), tokens.end());
  }

  TokenSummary finish() const {
    TokenSummary s;
    s.documents = lengths.size();
    if (lengths.empty()) return s;
    s.total_tokens = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    s.mean = static_cast<double>(s.total_tokens) / static_cast<double>(lengths.size());
    s.min = *std::min_element(lengths.begin(), lengths.end());
    s.max = *std::max_element(lengths.begin(), lengths.end());
    double ss = 0.0;
    for (auto n : lengths) ss += (static_cast<double>(n) - s.mean) * (static_cast<double>(n) - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(lengths.size()));
    s.unique_tokens = vocab.size();
    return s;
  }
};

std::vector<TermCount> rank_counts(const std::unordered_map<std::string, std::size_t>& counts,
                                   std::size_t n) {
  std::vector<TermCount> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const TermCount& a, const TermCount& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > n) ranked.resize(n);
  return ranked;
}

}  // namespace

TokenStats token_stats(const std::vector<Document>& docs) {
  if (docs.empty()) throw DataError("token_stats: corpus is empty");
  SummaryBuilder global;
  std::map<std::string, SummaryBuilder> classes;
  for (const auto& d : docs) {
    const auto tokens = tokenize(d.text, TokenStage::stats);
    global.add(tokens);
    classes[d.label].add(tokens);
  }
  TokenStats out;
  out.global = global.finish();
  for (const auto& [label, b] : classes) out.per_class.emplace(label, b.finish());
  return out;
}

std::vector<TermCount> top_unigrams(const std::vector<Document>& docs, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (auto& t : tokenize(d.text, TokenStage::modeling)) ++counts[std::move(t)];
  }
  return rank_counts(counts, n);
}

std::map<std::string, std::vector<TermCount>> top_unigrams_by_class(
    const std::vector<Document>& docs, std::size_t n) {
  std::map<std::string, std::unordered_map<std::string, std::size_t>> counts;
  for (const auto& d : docs) {
    auto& c = counts[d.label];
    for (auto& t : tokenize(d.text, TokenStage::modeling)) ++c[std::move(t)];
  }
  std::map<std::string, std::vector<TermCount>> out;
  for (const auto& [label, c] : counts) out.emplace(label, rank_counts(c, n));
  return out;
}

// ---------------------------------------------------------------------------
// TFIDF

std::ptrdiff_t TfidfModel::column(const std::string& term) const {
  const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
  if (it == vocabulary.end() || *it != term) return -1;
  return it - vocabulary.begin();
}

TfidfModel tfidf(const std::vector<std::vector<std::string>>& token_docs,
                 const TfidfOptions& options) {
  std::map<std::string, std::size_t> total;
  for (const auto& doc : token_docs) {
    for (const auto& t : doc) ++total[t];
  }
  if (total.empty()) throw DataError("tfidf: vocabulary is empty");

  TfidfModel m;
  if (options.max_features && total.size() > options.max_features) {
    std::unordered_map<std::string, std::size_t> counts(total.begin(), total.end());
    for (auto& [term, count] : rank_counts(counts, options.max_features)) {
      m.vocabulary.push_back(term);
    }
    std::sort(m.vocabulary.begin(), m.vocabulary.end());
  } else {
    for (const auto& [term, count] : total) m.vocabulary.push_back(term);
  }

  const std::size_t n_docs = token_docs.size();
  const std::size_t n_terms = m.vocabulary.size();
  std::vector<std::map<std::size_t, double>> tf(n_docs);
  std::vector<std::size_t> df(n_terms, 0);
  for (std::size_t d = 0; d < n_docs; ++d) {
    for (const auto& t : token_docs[d]) {
      const auto col = m.column(t);
      if (col < 0) continue;
      auto [it, first] = tf[d].try_emplace(static_cast<std::size_t>(col), 0.0);
      if (first) ++df[static_cast<std::size_t>(col)];
      it->second += 1.0;
    }
  }

  m.idf.resize(static_cast<Eigen::Index>(n_terms));
  for (std::size_t j = 0; j < n_terms; ++j) {
    m.idf[static_cast<Eigen::Index>(j)] =
        std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df[j]))) + 1.0;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t d = 0; d < n_docs; ++d) {
    double norm = 0.0;
    for (auto& [col, w] : tf[d]) {
      w *= m.idf[static_cast<Eigen::Index>(col)];
      norm += w * w;
    }
    norm = std::sqrt(norm);
    for (const auto& [col, w] : tf[d]) {
      triplets.emplace_back(static_cast<int>(d), static_cast<int>(col), w / norm);
    }
  }
  m.weights.resize(static_cast<Eigen::Index>(n_docs), static_cast<Eigen::Index>(n_terms));
  m.weights.setFromTriplets(triplets.begin(), triplets.end());
  m.weights.makeCompressed();
  return m;
}

TfidfModel tfidf(const std::vector<Document>& docs, const TfidfOptions& options) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(tokenize(d.text, TokenStage::modeling));
  return tfidf(tokens, options);
}

// ---------------------------------------------------------------------------
// NMF

namespace {

constexpr double kNmfFloor = 1e-12;
// Above this many entries the residual is computed from the trace expansion
// instead of materialising W*H.
constexpr double kDenseResidualLimit = 4e6;

template <typename Mat>
double residual(const Mat& v, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                double v_sq) {
  if (static_cast<double>(v.rows()) * static_cast<double>(v.cols()) <= kDenseResidualLimit) {
    if constexpr (std::is_same_v<Mat, SparseMatrix>) {
      return (Eigen::MatrixXd(v) - w * h).norm();
    } else {
      return (v - w * h).norm();
    }
  }
  const Eigen::MatrixXd wtv = w.transpose() * v;
  const double cross = (wtv.array() * h.array()).sum();
  const double quad = ((w.transpose() * w).array() * (h * h.transpose()).array()).sum();
  return std::sqrt(std::max(0.0, v_sq - 2.0 * cross + quad));
}

template <typename Mat>
NmfModel nmf_impl(const Mat& v, const NmfOptions& options, SeededRng& rng) {
  if (options.k == 0) throw ConfigError("nmf: k must be >= 1");
  if (v.rows() == 0 || v.cols() == 0) throw DataError("nmf: input matrix is empty");
  double sum = 0.0;
  if constexpr (std::is_same_v<Mat, SparseMatrix>) {
    for (Eigen::Index r = 0; r < v.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(v, r); it; ++it) {
        if (!(it.value() >= 0.0)) throw DataError("nmf: input has a negative or NaN entry");
        sum += it.value();
      }
    }
  } else {
    if (!((v.array() >= 0.0).all())) throw DataError("nmf: input has a negative or NaN entry");
    sum = v.sum();
  }

  const auto k = static_cast<Eigen::Index>(options.k);
  const double mean = sum / (static_cast<double>(v.rows()) * static_cast<double>(v.cols()));
  const double scale = std::sqrt(mean / static_cast<double>(options.k));
  NmfModel m;
  m.k = options.k;
  m.h.resize(k, v.cols());
  m.w.resize(v.rows(), k);
  for (Eigen::Index i = 0; i < m.h.size(); ++i) {
    m.h.data()[i] = std::max(kNmfFloor, scale * std::abs(rng.normal()));
  }
  for (Eigen::Index i = 0; i < m.w.size(); ++i) {
    m.w.data()[i] = std::max(kNmfFloor, scale * std::abs(rng.normal()));
  }

  const double v_sq = v.squaredNorm();
  m.objective.push_back(residual(v, m.w, m.h, v_sq));
  for (int it = 0; it < options.max_iter; ++it) {
    {
      const Eigen::MatrixXd num = m.w.transpose() * v;
      const Eigen::MatrixXd den = (m.w.transpose() * m.w) * m.h;
      for (Eigen::Index i = 0; i < m.h.size(); ++i) {
        const double d = den.data()[i];
        if (d > 0.0) m.h.data()[i] = std::max(kNmfFloor, m.h.data()[i] * num.data()[i] / d);
      }
    }
    {
      const Eigen::MatrixXd num = v * m.h.transpose();
      const Eigen::MatrixXd den = m.w * (m.h * m.h.transpose());
      for (Eigen::Index i = 0; i < m.w.size(); ++i) {
        const double d = den.data()[i];
        if (d > 0.0) m.w.data()[i] = std::max(kNmfFloor, m.w.data()[i] * num.data()[i] / d);
      }
    }
    const double prev = m.objective.back();
    m.objective.push_back(residual(v, m.w, m.h, v_sq));
    if (options.tol > 0.0 && prev > 0.0 && (prev - m.objective.back()) / prev < options.tol) {
      break;
    }
  }
  return m;
}

}  // namespace

NmfModel nmf_fit(const SparseMatrix& v, const NmfOptions& options, SeededRng& rng) {
  return nmf_impl(v, options, rng);
}

NmfModel nmf_fit(const Eigen::MatrixXd& v, const NmfOptions& options, SeededRng& rng) {
  return nmf_impl(v, options, rng);
}

std::size_t dominant_topic(const NmfModel& m) {
  const Eigen::VectorXd mass = m.w.colwise().sum();
  std::size_t best = 0;
  for (Eigen::Index t = 1; t < mass.size(); ++t) {
    if (mass[t] > mass[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(t);
  }
  return best;
}

std::vector<std::string> top_topic_terms(const NmfModel& m,
                                         const std::vector<std::string>& vocabulary,
                                         std::size_t n) {
  if (static_cast<std::size_t>(m.h.cols()) != vocabulary.size()) {
    throw DimensionError("top_topic_terms: model has " + std::to_string(m.h.cols()) +
                         " terms but the vocabulary has " + std::to_string(vocabulary.size()));
  }
  const auto topic = static_cast<Eigen::Index>(dominant_topic(m));
  std::vector<std::size_t> order(vocabulary.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double wa = m.h(topic, static_cast<Eigen::Index>(a));
    const double wb = m.h(topic, static_cast<Eigen::Index>(b));
    return wa != wb ? wa > wb : vocabulary[a] < vocabulary[b];
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, order.size()); ++i) out.push_back(vocabulary[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Word vectors

const std::vector<double>* WordVectorTable::find(const std::string& term) const {
  const auto it = vectors.find(term);
  return it == vectors.end() ? nullptr : &it->second;
}

WordVectorTable load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  WordVectorTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream is(line);
    std::string term;
    if (!(is >> term)) continue;
    std::vector<double> values;
    std::string field;
    while (is >> field) {
      char* end = nullptr;
      const double x = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0') {
        throw DataError(path + ":" + std::to_string(lineno) + ": '" + field +
                        "' is not a number");
      }
      values.push_back(x);
    }
    if (lineno == 1 && values.size() == 1 && table.vectors.empty() &&
        term.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "count dim" header
    }
    if (values.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": term '" + term + "' has no vector");
    }
    if (table.dim == 0) table.dim = values.size();
    if (values.size() != table.dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": vector has " +
                      std::to_string(values.size()) + " components, expected " +
                      std::to_string(table.dim));
    }
    table.vectors.insert_or_assign(term, std::move(values));
  }
  return table;
}

double term_set_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const WordVectorTable& vecs) {
  if (a.empty() || b.empty()) throw DataError("term_set_similarity: empty term list");
  std::set<std::string> missing;
  for (const auto* list : {&a, &b}) {
    for (const auto& t : *list) {
      if (!vecs.find(t)) missing.insert(t);
    }
  }
  if (!missing.empty()) {
    std::string msg = "term_set_similarity: no vector for";
    for (const auto& t : missing) msg += " '" + t + "'";
    throw DataError(msg);
  }
  auto cosine = [](const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    return nx > 0.0 && ny > 0.0 ? dot / std::sqrt(nx * ny) : 0.0;
  };
  double total = 0.0;
  for (const auto& ta : a) {
    double best = -1.0;
    for (const auto& tb : b) best = std::max(best, cosine(*vecs.find(ta), *vecs.find(tb)));
    total += best;
  }
  return std::clamp(total / static_cast<double>(a.size()), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::vector<std::string> terms_of(const std::vector<TermCount>& counts) {
  std::vector<std::string> out;
  for (const auto& [t, c] : counts) out.push_back(t);
  return out;
}

std::vector<std::string> top_topic(const std::vector<Document>& docs,
                                   const AnalysisOptions& options, SeededRng& rng) {
  std::vector<std::vector<std::string>> tokens;
  for (const auto& d : docs) tokens.push_back(tokenize(d.text, TokenStage::modeling));
  const bool any = std::any_of(tokens.begin(), tokens.end(), [](const auto& t) { return !t.empty(); });
  if (!any) return {};
  const auto model = tfidf(tokens, options.tfidf);
  NmfOptions nmf = options.nmf;
  nmf.k = std::max<std::size_t>(1, std::min<std::size_t>(
                                       {nmf.k, static_cast<std::size_t>(model.weights.rows()),
                                        model.vocabulary.size()}));
  return top_topic_terms(nmf_fit(model.weights, nmf, rng), model.vocabulary, options.top_n);
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

std::string join(const std::vector<std::string>& terms) {
  std::string out;
  for (const auto& t : terms) out += (out.empty() ? "" : " ") + t;
  return out;
}

void add_similarities(std::vector<TermRow>& rows, const std::vector<NamedVectors>& tables) {
  const auto& global = rows.front().terms;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (const auto& t : tables) {
      if (rows[i].terms.empty() || global.empty()) {
        rows[i].similarity.push_back(std::nan(""));
      } else {
        rows[i].similarity.push_back(term_set_similarity(rows[i].terms, global, t.table));
      }
    }
  }
}

}  // namespace

CorpusReport analyze_corpus(const std::vector<Document>& docs, const AnalysisOptions& options,
                            const std::vector<NamedVectors>& tables) {
  CorpusReport report;
  report.stats = token_stats(docs);
  for (const auto& t : tables) report.vector_names.push_back(t.name);

  report.unigrams.push_back({kGlobalGroup, terms_of(top_unigrams(docs, options.top_n)), {}});
  for (const auto& [label, counts] : top_unigrams_by_class(docs, options.top_n)) {
    report.unigrams.push_back({label, terms_of(counts), {}});
  }

  std::map<std::string, std::vector<Document>> by_class;
  for (const auto& d : docs) by_class[d.label].push_back(d);
  SeededRng rng(options.seed);
  report.topics.push_back({kGlobalGroup, top_topic(docs, options, rng), {}});
  for (const auto& [label, class_docs] : by_class) {
    report.topics.push_back({label, top_topic(class_docs, options, rng), {}});
  }

  add_similarities(report.unigrams, tables);
  add_similarities(report.topics, tables);
  return report;
}

std::string token_stats_csv(const TokenStats& stats) {
  std::ostringstream os;
  os << "class,documents,mean,min,max,stddev,unique_tokens,total_tokens\n";
  char buf[256];
  auto row = [&](const std::string& name, const TokenSummary& s) {
    std::snprintf(buf, sizeof buf, ",%zu,%.2f,%zu,%zu,%.2f,%zu,%zu\n", s.documents, s.mean, s.min,
                  s.max, s.stddev, s.unique_tokens, s.total_tokens);
    os << csv_field(name) << buf;
  };
  for (const auto& [label, s] : stats.per_class) row(label, s);
  row(kGlobalGroup, stats.global);
  return os.str();
}

std::string term_rows_csv(const std::vector<TermRow>& rows,
                          const std::vector<std::string>& vector_names) {
  std::ostringstream os;
  os << "class,terms";
  for (const auto& n : vector_names) os << ',' << csv_field(n + "_similarity");
  os << '\n';
  char buf[32];
  for (const auto& r : rows) {
    os << csv_field(r.group) << ',' << csv_field(join(r.terms));
    for (std::size_t i = 0; i < vector_names.size(); ++i) {
      os << ',';
      if (i < r.similarity.size() && std::isfinite(r.similarity[i])) {
        std::snprintf(buf, sizeof buf, "%.2f", r.similarity[i]);
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string format_corpus_report(const CorpusReport& report) {
  std::ostringstream os;
  char buf[256];
  std::size_t name_w = std::string(kGlobalGroup).size();
  for (const auto& [label, s] : report.stats.per_class) name_w = std::max(name_w, label.size());
  const int w = static_cast<int>(name_w);

  os << "Token statistics\n";
  std::snprintf(buf, sizeof buf, "%-*s %10s %8s %8s %10s %10s %12s\n", w, "class", "mean", "min",
                "max", "stddev", "unique", "all");
  os << buf;
  auto stat_row = [&](const std::string& name, const TokenSummary& s) {
    std::snprintf(buf, sizeof buf, "%-*s %10.2f %8zu %8zu %10.2f %10zu %12zu\n", w, name.c_str(),
                  s.mean, s.min, s.max, s.stddev, s.unique_tokens, s.total_tokens);
    os << buf;
  };
  for (const auto& [label, s] : report.stats.per_class) stat_row(label, s);
  stat_row(kGlobalGroup, report.stats.global);

  auto term_table = [&](const char* title, const std::vector<TermRow>& rows) {
    os << '\n' << title << '\n';
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-*s ", w, r.group.c_str());
      os << buf << join(r.terms);
      for (std::size_t i = 0; i < r.similarity.size(); ++i) {
        if (std::isfinite(r.similarity[i])) {
          std::snprintf(buf, sizeof buf, "  %s=%.2f", report.vector_names[i].c_str(),
                        r.similarity[i]);
          os << buf;
        }
      }
      os << '\n';
    }
  };
  term_table("Top unigrams", report.unigrams);
  term_table("Top-1 topic", report.topics);
  return os.str();
}

}  // namespace mrb
