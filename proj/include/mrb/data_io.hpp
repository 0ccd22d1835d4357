#pragma once

// Embedding files (MREB), labels CSV, JSONL corpora, and the synthetic
// class-separable dataset generator.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mrb {

/// Row-major float matrix; rows == 0 is a valid empty matrix.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
  bool operator==(const EmbeddingMatrix&) const = default;
};

/// MREB layout, little-endian: "MREB", u32 version (1), u32 n_records,
/// u32 dim, then n_records*dim f32 values.
void write_embeddings(const std::string& path, const EmbeddingMatrix& m);
/// Throws BadMagicError, VersionError, TruncatedError, or TrailingDataError.
EmbeddingMatrix read_embeddings(const std::string& path);

struct LabelTable {
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;  // sorted; labels index into it
};

/// CSV with header `id,label`; fields may be double-quoted. Class indices come
/// from the sorted set of names. When `allowed` is given, any other name is an
/// error (as are blank labels and duplicate ids).
LabelTable read_labels(const std::string& path,
                       const std::vector<std::string>* allowed = nullptr);
void write_labels(const std::string& path, const LabelTable& table);

struct EmbeddingDataset {
  EmbeddingMatrix bart;
  EmbeddingMatrix roberta;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return class_names.size(); }
};

/// Positional alignment. Throws DataError naming the three counts when they
/// disagree, or when a label is outside the class table.
EmbeddingDataset make_dataset(EmbeddingMatrix bart, EmbeddingMatrix roberta,
                              std::vector<std::size_t> labels,
                              std::vector<std::string> class_names);

EmbeddingDataset load_dataset(const std::string& bart_path, const std::string& roberta_path,
                              const std::string& labels_path);

struct SynthSpec {
  std::size_t n_classes = 10;
  std::size_t per_class = 200;
  std::size_t bart_dim = 1024;
  std::size_t roberta_dim = 768;
  double separation = 4.0;  // norm of each class mean, in units of sigma
  double sigma = 1.0;       // per-coordinate within-class stddev
  std::uint64_t seed = 0;
};

/// Each class gets an independent random mean direction in each space, scaled
/// to separation*sigma; records are isotropic Gaussians around it. Records are
/// shuffled; every class appears exactly per_class times.
EmbeddingDataset gen_synthetic(const SynthSpec& spec);

struct Document {
  std::string id;
  std::string text;
  std::string label;
  bool operator==(const Document&) const = default;
};

/// One JSON object per line with string fields id, text, label (an integer
/// label is accepted and stored as its decimal string). Blank lines are
/// skipped. Errors cite the 1-based line number.
std::vector<Document> read_jsonl_corpus(const std::string& path);
void write_jsonl_corpus(const std::string& path, const std::vector<Document>& docs);

}  // namespace mrb
