#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "mrb/data_io.hpp"
#include "mrb/errors.hpp"
#include "temp_dir.hpp"

namespace mrb {
namespace {

using testing::TempDir;

EmbeddingMatrix small_matrix() {
  EmbeddingMatrix m;
  m.rows = 3;
  m.dim = 2;
  m.values = {1.0f, -2.5f, 3.25f, 0.0f, std::numeric_limits<float>::min(), 1e30f};
  return m;
}

TEST(Embeddings, RoundTripIsBitExact) {
  TempDir dir;
  const auto m = small_matrix();
  write_embeddings(dir.file("m.mreb"), m);
  EXPECT_EQ(read_embeddings(dir.file("m.mreb")), m);
  const std::string bytes = dir.read("m.mreb");
  EXPECT_EQ(bytes.size(), 16u + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "MREB");
}

TEST(Embeddings, EmptyMatrixRoundTrips) {
  TempDir dir;
  EmbeddingMatrix m;
  m.dim = 4;
  write_embeddings(dir.file("e.mreb"), m);
  const auto back = read_embeddings(dir.file("e.mreb"));
  EXPECT_EQ(back.rows, 0u);
  EXPECT_EQ(back.dim, 4u);
}

TEST(Embeddings, MalformedFilesRaiseDistinctErrors) {
  TempDir dir;
  write_embeddings(dir.file("m.mreb"), small_matrix());
  const std::string good = dir.read("m.mreb");

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(read_embeddings(dir.write("a", bad_magic)), BadMagicError);

  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(read_embeddings(dir.write("b", bad_version)), VersionError);

  EXPECT_THROW(read_embeddings(dir.write("c", good.substr(0, good.size() - 3))), TruncatedError);
  EXPECT_THROW(read_embeddings(dir.write("d", good.substr(0, 10))), TruncatedError);
  EXPECT_THROW(read_embeddings(dir.write("e", good + "xy")), TrailingDataError);
  EXPECT_THROW(read_embeddings(dir.file("missing")), Error);
}

TEST(Labels, ParsesQuotedFieldsAndSortsClasses) {
  TempDir dir;
  const auto path = dir.write("l.csv",
                              "\xEF\xBB\xBFid,label\n"
                              "a1,sports\n"
                              "\"a,2\",\"world news\"\r\n"
                              "a3,\"say \"\"hi\"\"\"\n"
                              "a4,sports\n");
  const LabelTable t = read_labels(path);
  EXPECT_EQ(t.ids, (std::vector<std::string>{"a1", "a,2", "a3", "a4"}));
  EXPECT_EQ(t.class_names, (std::vector<std::string>{"say \"hi\"", "sports", "world news"}));
  EXPECT_EQ(t.labels, (std::vector<std::size_t>{1, 2, 0, 1}));
}

TEST(Labels, RejectsBadTables) {
  TempDir dir;
  EXPECT_THROW(read_labels(dir.write("dup", "id,label\na,x\na,y\n")), DataError);
  EXPECT_THROW(read_labels(dir.write("blank", "id,label\na,\n")), DataError);
  EXPECT_THROW(read_labels(dir.write("header", "name,label\na,x\n")), DataError);
  const std::vector<std::string> allowed{"x", "y"};
  EXPECT_THROW(read_labels(dir.write("unknown", "id,label\na,z\n"), &allowed), DataError);
  EXPECT_NO_THROW(read_labels(dir.write("known", "id,label\na,y\n"), &allowed));
}

TEST(Labels, WriteThenReadRoundTrips) {
  TempDir dir;
  LabelTable t{{"1", "2,x", "3"}, {1, 0, 1}, {"alpha", "beta \"b\""}};
  write_labels(dir.file("l.csv"), t);
  const LabelTable back = read_labels(dir.file("l.csv"));
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.class_names, t.class_names);
}

TEST(Dataset, CountMismatchNamesTheCounts) {
  EmbeddingMatrix bart = small_matrix();
  EmbeddingMatrix roberta = small_matrix();
  roberta.rows = 2;
  roberta.values.resize(4);
  try {
    make_dataset(bart, roberta, {0, 1, 0}, {"a", "b"});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;
    EXPECT_NE(msg.find('2'), std::string::npos) << msg;
  }
  EXPECT_THROW(make_dataset(bart, small_matrix(), {0, 1, 5}, {"a", "b"}), DataError);
}

// Nearest-class-mean classifier: means from the first 80% of records.
double nearest_centroid_accuracy(const EmbeddingDataset& ds) {
  const std::size_t n = ds.size(), split = n * 8 / 10, k = ds.n_classes();
  const std::size_t db = ds.bart.dim, dr = ds.roberta.dim;
  std::vector<std::vector<double>> mean(k, std::vector<double>(db + dr, 0.0));
  std::vector<double> count(k, 0.0);
  auto feature = [&](std::size_t i, std::size_t d) {
    return d < db ? ds.bart.row(i)[d] : ds.roberta.row(i)[d - db];
  };
  for (std::size_t i = 0; i < split; ++i) {
    count[ds.labels[i]] += 1;
    for (std::size_t d = 0; d < db + dr; ++d) mean[ds.labels[i]][d] += feature(i, d);
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : mean[c]) v /= count[c];
  std::size_t correct = 0;
  for (std::size_t i = split; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0;
      for (std::size_t d = 0; d < db + dr; ++d) {
        const double e = feature(i, d) - mean[c][d];
        dist += e * e;
      }
      if (dist < best_d) best_d = dist, best = c;
    }
    correct += best == ds.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n - split);
}

TEST(Synthetic, ShapesBalanceAndDeterminism) {
  SynthSpec spec;
  spec.per_class = 20;
  spec.seed = 3;
  const auto a = gen_synthetic(spec);
  EXPECT_EQ(a.size(), 200u);
  EXPECT_EQ(a.bart.dim, 1024u);
  EXPECT_EQ(a.roberta.dim, 768u);
  EXPECT_EQ(a.n_classes(), 10u);
  std::vector<int> per(10, 0);
  for (auto y : a.labels) ++per[y];
  for (int c : per) EXPECT_EQ(c, 20);
  const auto b = gen_synthetic(spec);
  EXPECT_EQ(a.bart, b.bart);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 4;
  EXPECT_NE(gen_synthetic(spec).bart, a.bart);
}

TEST(Synthetic, NearestCentroidSeparatesAtFourSigma) {
  SynthSpec spec;
  spec.seed = 1;
  EXPECT_GE(nearest_centroid_accuracy(gen_synthetic(spec)), 0.99);
}

TEST(Synthetic, ZeroSeparationIsChanceLevel) {
  // Sample over several seeds so the Monte Carlo error is below the tolerance.
  double sum = 0;
  const int trials = 5;
  for (int s = 0; s < trials; ++s) {
    SynthSpec spec;
    spec.separation = 0.0;
    spec.bart_dim = 64;
    spec.roberta_dim = 48;
    spec.per_class = 300;
    spec.seed = 100 + s;
    sum += nearest_centroid_accuracy(gen_synthetic(spec));
  }
  EXPECT_NEAR(sum / trials, 0.1, 0.03);
}

TEST(Synthetic, RejectsInvalidSpecs) {
  SynthSpec spec;
  spec.separation = -1;
  EXPECT_THROW(gen_synthetic(spec), ConfigError);
  spec = {};
  spec.sigma = 0;
  EXPECT_THROW(gen_synthetic(spec), ConfigError);
}

TEST(Corpus, JsonlRoundTripAndErrors) {
  TempDir dir;
  const std::vector<Document> docs{{"1", "Hello, world", "a"}, {"2", "line\nbreak \"q\"", "b"}};
  write_jsonl_corpus(dir.file("c.jsonl"), docs);
  EXPECT_EQ(read_jsonl_corpus(dir.file("c.jsonl")), docs);

  const auto ints = read_jsonl_corpus(
      dir.write("i.jsonl", "{\"id\": 7, \"text\": \"x\", \"label\": 3}\n\n"));
  ASSERT_EQ(ints.size(), 1u);
  EXPECT_EQ(ints[0].id, "7");
  EXPECT_EQ(ints[0].label, "3");

  try {
    read_jsonl_corpus(dir.write("bad.jsonl", "{\"id\":\"1\",\"text\":\"a\",\"label\":\"x\"}\n{oops\n"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_jsonl_corpus(dir.write("m.jsonl", "{\"id\":\"1\",\"label\":\"x\"}\n")),
               DataError);
}

}  // namespace
}  // namespace mrb
