#pragma once

// The dual-branch recurrent/convolutional ensemble classifier.
//
// Each input embedding (1024-d BART, 768-d RoBERTa) feeds a branch of
//   [dropout -> (Bi)LSTM] x depth -> reshape (W,1) -> conv1d -> maxpool -> flatten.
// The two flattened outputs are concatenated ([roberta | bart]), reshaped to a
// length-1 sequence and passed through a third branch of the same template
// (the ensemble branch), then a dense softmax head.

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mrb/layers.hpp"
#include "mrb/rng.hpp"
#include "mrb/tensor.hpp"

namespace mrb {

enum class CellType { lstm, bilstm };

/// How a single embedding vector becomes a recurrent input sequence.
/// features: (1, D), one step with D features. steps: (D, 1).
enum class SequenceAxis { features, steps };

std::string to_string(CellType cell);
std::string to_string(SequenceAxis axis);

struct BranchConfig {
  CellType cell = CellType::bilstm;
  int depth = 1;
  std::size_t units = 128;  // per direction
  std::size_t conv_filters = 64;
  std::size_t conv_kernel = 128;
  Activation conv_activation = Activation::relu;
  PoolSpec pool{};
  double dropout_rate = 0.2;

  /// Width of the last recurrent layer's output: 2*units for BiLSTM.
  std::size_t recurrent_width() const {
    return cell == CellType::bilstm ? 2 * units : units;
  }
  bool operator==(const BranchConfig&) const = default;
};

struct ModelConfig {
  BranchConfig bart{CellType::bilstm, 2};
  BranchConfig roberta{CellType::bilstm, 1};
  BranchConfig ensemble{CellType::bilstm, 1};
  std::size_t bart_dim = 1024;
  std::size_t roberta_dim = 768;
  std::size_t n_classes = 10;
  SequenceAxis sequence_axis = SequenceAxis::features;
  bool operator==(const ModelConfig&) const = default;
};

/// Every violated invariant, one message per violation, each naming its field.
std::vector<std::string> validate(const ModelConfig& cfg);
/// Throws ConfigError listing all violations.
void check(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults. Type and value problems are appended to
/// errors (if given) with the offending JSON path; otherwise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j,
                                   std::vector<std::string>* errors = nullptr);

struct TraceEntry {
  std::string layer;
  Shape shape;  // per-sample output shape
  std::size_t params = 0;
};
using ShapeTrace = std::vector<TraceEntry>;

/// Per-sample output shapes of every layer, in execution order.
/// Throws ConfigError when a layer contract cannot be met.
ShapeTrace shape_trace(const ModelConfig& cfg);
std::size_t parameter_count(const ShapeTrace& trace);
std::string format_trace(const ShapeTrace& trace);

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
using RecurrentParams = std::variant<LstmParams<T>, BiLstmParams<T>>;

template <typename T>
struct BranchParams {
  std::vector<RecurrentParams<T>> recurrent;
  Conv1dParams<T> conv;
};

/// Parameters in topological order: roberta, bart, ensemble, head.
/// Gradients use the same type.
template <typename T>
struct ModelParams {
  BranchParams<T> roberta;
  BranchParams<T> bart;
  BranchParams<T> ensemble;
  DenseParams<T> head;
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor;
};

template <typename T>
struct ConstNamedTensor {
  std::string name;
  const BasicTensor<T>* tensor;
};

template <typename T>
std::vector<NamedTensor<T>> named_tensors(ModelParams<T>& params);
template <typename T>
std::vector<ConstNamedTensor<T>> named_tensors(const ModelParams<T>& params);

template <typename U, typename T>
ModelParams<U> cast_params(const ModelParams<T>& params);

/// Serialised parameter set: (name, tensor) in topological order.
using ModelWeights = std::vector<std::pair<std::string, Tensor>>;

// ---------------------------------------------------------------------------
// Forward caches

template <typename T>
struct BranchCache {
  std::size_t batch = 0;
  std::vector<DropoutCache<T>> dropout;
  std::vector<std::variant<LstmCache<T>, BiLstmCache<T>>> recurrent;
  Conv1dCache<T> conv;
  MaxPoolCache<T> pool;
  Shape pooled;  // (B, L', F)
};

template <typename T>
struct ModelCache {
  bool batched = false;
  std::size_t batch = 0;
  std::size_t roberta_width = 0;  // flattened width of the roberta branch
  BranchCache<T> roberta;
  BranchCache<T> bart;
  BranchCache<T> ensemble;
  DenseCache<T> head;
};

template <typename T>
class Model {
 public:
  /// Validates cfg and Glorot-initialises every weight from rng (biases zero).
  Model(const ModelConfig& cfg, SeededRng& rng);
  Model(const ModelConfig& cfg, ModelParams<T> params);

  /// Throws ConsistencyError when names, count, or shapes disagree with cfg.
  static Model from_weights(const ModelConfig& cfg, const ModelWeights& weights);
  ModelWeights weights() const;

  template <typename U>
  Model<U> cast() const {
    return Model<U>(cfg_, cast_params<U>(params_));
  }

  const ModelConfig& config() const { return cfg_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Class probabilities. bart is (bart_dim) or (B, bart_dim), roberta likewise;
  /// output is (n_classes) or (B, n_classes). Train mode applies dropout and
  /// requires rng.
  BasicTensor<T> forward(const BasicTensor<T>& bart, const BasicTensor<T>& roberta, Mode mode,
                         SeededRng* rng = nullptr, ModelCache<T>* cache = nullptr) const;

  /// dlogits has the shape of forward()'s output. Returns parameter gradients.
  ModelParams<T> backward(const ModelCache<T>& cache, const BasicTensor<T>& dlogits) const;

  /// Eval-mode argmax; ties go to the lowest index.
  std::size_t predict(const BasicTensor<T>& bart, const BasicTensor<T>& roberta) const;
  std::vector<std::size_t> predict_batch(const BasicTensor<T>& bart,
                                         const BasicTensor<T>& roberta) const;

 private:
  ModelConfig cfg_;
  ModelParams<T> params_;
};

/// Lowest index among the maxima.
template <typename T>
std::size_t argmax(std::span<const T> values);

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& params);

// ---------------------------------------------------------------------------
// Model files

/// Binary little-endian layout: "MRBW", u32 version (1), u32-length-prefixed
/// UTF-8 JSON config, u32 tensor count, then per tensor: u32 name length,
/// name, u32 rank, u32 dims, f32 payload.
void save_model(const Model<float>& model, const std::string& path);

struct LoadedModel {
  ModelWeights weights;
  ModelConfig config;
};

/// Throws BadMagicError, VersionError, TruncatedError, TrailingDataError, or
/// ConsistencyError (tensor set does not match the embedded config).
LoadedModel load_model(const std::string& path);

}  // namespace mrb
