#pragma once

// Corpus statistics, frequent unigrams, TFIDF, NMF topics, and word-vector
// similarity between term lists.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "mrb/data_io.hpp"
#include "mrb/rng.hpp"

namespace mrb {

enum class TokenStage {
  /// Runs of letters/digits (any byte >= 0x80 counts as a letter) and single
  /// punctuation characters; case preserved.
  stats,
  /// stats tokens, lowercased, without punctuation or stopwords.
  modeling,
};

using StopwordSet = std::unordered_set<std::string>;

/// The NLTK English stopword list.
const StopwordSet& default_stopwords();

std::vector<std::string> tokenize(std::string_view text, TokenStage stage,
                                  const StopwordSet& stopwords = default_stopwords());

// ---------------------------------------------------------------------------
// Token statistics

struct TokenSummary {
  std::size_t documents = 0;
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
  double stddev = 0.0;  // population
  std::size_t unique_tokens = 0;
  std::size_t total_tokens = 0;
};

struct TokenStats {
  TokenSummary global;
  std::map<std::string, TokenSummary> per_class;
};

/// Stats-stage token counts. Throws DataError on an empty corpus.
TokenStats token_stats(const std::vector<Document>& docs);

using TermCount = std::pair<std::string, std::size_t>;

/// Modeling-stage tokens by frequency (descending), ties lexicographic.
std::vector<TermCount> top_unigrams(const std::vector<Document>& docs, std::size_t n = 10);
std::map<std::string, std::vector<TermCount>> top_unigrams_by_class(
    const std::vector<Document>& docs, std::size_t n = 10);

// ---------------------------------------------------------------------------
// TFIDF

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TfidfModel {
  std::vector<std::string> vocabulary;  // sorted; index == column
  Eigen::VectorXd idf;
  SparseMatrix weights;  // documents x terms, rows L2-normalised

  /// Column of a term, or -1.
  std::ptrdiff_t column(const std::string& term) const;
};

struct TfidfOptions {
  /// Keep only the most frequent terms (by corpus count, ties lexicographic); 0 keeps all.
  std::size_t max_features = 0;
};

/// weight = count(term, doc) * (ln((1 + N) / (1 + df)) + 1), then each
/// non-empty row scaled to unit L2 norm. Throws DataError on an empty vocabulary.
TfidfModel tfidf(const std::vector<std::vector<std::string>>& token_docs,
                 const TfidfOptions& options = {});
/// Tokenises at the modeling stage first.
TfidfModel tfidf(const std::vector<Document>& docs, const TfidfOptions& options = {});

// ---------------------------------------------------------------------------
// NMF

struct NmfOptions {
  std::size_t k = 10;
  int max_iter = 200;
  /// Stop when the relative objective decrease of one iteration falls below
  /// this; 0 runs all iterations.
  double tol = 0.0;
};

struct NmfModel {
  Eigen::MatrixXd w;  // rows x k
  Eigen::MatrixXd h;  // k x cols
  std::size_t k = 0;
  /// ||V - WH||_F at initialisation and after every iteration.
  std::vector<double> objective;
};

/// Multiplicative updates for the Frobenius objective; entries are floored at
/// 1e-12 so they stay positive. Throws DataError when V has a negative entry
/// and ConfigError when k == 0.
NmfModel nmf_fit(const SparseMatrix& v, const NmfOptions& options, SeededRng& rng);
NmfModel nmf_fit(const Eigen::MatrixXd& v, const NmfOptions& options, SeededRng& rng);

/// Index of the topic whose W column has the largest sum (lowest on ties).
std::size_t dominant_topic(const NmfModel& m);

/// Top n terms of the dominant topic by H weight, ties lexicographic.
std::vector<std::string> top_topic_terms(const NmfModel& m,
                                         const std::vector<std::string>& vocabulary,
                                         std::size_t n = 10);

// ---------------------------------------------------------------------------
// Word vectors

struct WordVectorTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;

  const std::vector<double>* find(const std::string& term) const;
};

/// Text format: `term v1 ... vD` per line. A leading `count dim` header line
/// (as in fastText .vec files) is skipped. Throws DataError on ragged rows.
WordVectorTable load_word_vectors(const std::string& path);

/// Mean over terms of `a` of the best cosine similarity against any term of
/// `b`. Throws DataError on an empty list or when terms lack vectors (all
/// missing terms are named).
double term_set_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const WordVectorTable& vecs);

// ---------------------------------------------------------------------------
// Reports

struct AnalysisOptions {
  std::size_t top_n = 10;
  NmfOptions nmf{10, 200, 1e-4};
  TfidfOptions tfidf{};
  std::uint64_t seed = 0;
};

struct NamedVectors {
  std::string name;
  WordVectorTable table;
};

struct TermRow {
  std::string group;  // "Entire dataset" or the class label
  std::vector<std::string> terms;
  std::vector<double> similarity;  // one per vector table, against the global row
};

struct CorpusReport {
  TokenStats stats;
  std::vector<TermRow> unigrams;
  std::vector<TermRow> topics;
  std::vector<std::string> vector_names;
};

inline constexpr const char* kGlobalGroup = "Entire dataset";

/// Token statistics, top unigrams and top-1 topic for the whole corpus and
/// each class, each class compared against the whole corpus.
CorpusReport analyze_corpus(const std::vector<Document>& docs, const AnalysisOptions& options,
                            const std::vector<NamedVectors>& tables = {});

std::string token_stats_csv(const TokenStats& stats);
std::string term_rows_csv(const std::vector<TermRow>& rows,
                          const std::vector<std::string>& vector_names);
std::string format_corpus_report(const CorpusReport& report);

}  // namespace mrb
