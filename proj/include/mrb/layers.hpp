#pragma once

// Forward and backward rules for the network layers.
//
// Every layer accepts an optional leading batch axis: an LSTM takes (T, D) or
// (B, T, D); conv/pool take (L, C) or (B, L, C); dense takes (in) or (B, in).
// Outputs keep the caller's convention. Backward functions consume the cache
// filled by the matching forward call and return the input gradient together
// with parameter gradients shaped like the parameters.

#include <cstddef>
#include <optional>

#include "mrb/rng.hpp"
#include "mrb/tensor.hpp"

namespace mrb {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// LSTM

/// Gate weights fused column-wise in the order [input | forget | output | cell].
/// w_input is (D, 4H), w_hidden is (H, 4H), bias is (4H).
template <typename T>
struct LstmParams {
  BasicTensor<T> w_input;
  BasicTensor<T> w_hidden;
  BasicTensor<T> bias;

  std::size_t input_dim() const { return w_input.dim(0); }
  std::size_t hidden() const { return w_hidden.dim(0); }

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden);
  /// Glorot-uniform per gate block, zero bias.
  static LstmParams glorot(SeededRng& rng, std::size_t input_dim, std::size_t hidden);
};

template <typename T>
struct LstmState {
  BasicTensor<T> h;
  BasicTensor<T> c;
};

/// One unbatched time step. x_t is (D); prev.h and prev.c are (H).
template <typename T>
LstmState<T> lstm_step(const LstmParams<T>& p, const BasicTensor<T>& x_t,
                       const LstmState<T>& prev);

template <typename T>
struct LstmCache {
  std::size_t batch = 0;
  std::size_t steps = 0;
  bool batched = false;
  bool return_sequences = false;
  BasicTensor<T> input;   // (B*T, D)
  BasicTensor<T> gates;   // (B*T, 4H), post-activation
  BasicTensor<T> cell;    // (B*T, H)
  BasicTensor<T> hidden;  // (B*T, H)
};

/// Runs from a zero state. Returns (T, H) when return_sequences, else h_T (H);
/// batched inputs gain a leading B axis.
template <typename T>
BasicTensor<T> lstm_forward(const LstmParams<T>& p, const BasicTensor<T>& seq,
                            bool return_sequences, LstmCache<T>* cache = nullptr);

template <typename T>
struct LstmGrads {
  BasicTensor<T> input;
  LstmParams<T> params;
};

template <typename T>
LstmGrads<T> lstm_backward(const LstmParams<T>& p, const LstmCache<T>& cache,
                           const BasicTensor<T>& upstream);

// ---------------------------------------------------------------------------
// Bidirectional LSTM

template <typename T>
struct BiLstmParams {
  LstmParams<T> forward;
  LstmParams<T> backward;

  std::size_t input_dim() const { return forward.input_dim(); }
  std::size_t hidden() const { return forward.hidden(); }
};

template <typename T>
struct BiLstmCache {
  LstmCache<T> forward;
  LstmCache<T> backward;
};

/// Forward LSTM on seq, backward LSTM on the reversed seq. With
/// return_sequences the backward outputs are re-reversed so row t holds
/// [fwd h_t | bwd h_t]; otherwise the output is [fwd h_T | bwd h_1].
template <typename T>
BasicTensor<T> bilstm_forward(const BiLstmParams<T>& p, const BasicTensor<T>& seq,
                              bool return_sequences, BiLstmCache<T>* cache = nullptr);

template <typename T>
struct BiLstmGrads {
  BasicTensor<T> input;
  BiLstmParams<T> params;
};

template <typename T>
BiLstmGrads<T> bilstm_backward(const BiLstmParams<T>& p, const BiLstmCache<T>& cache,
                               const BasicTensor<T>& upstream);

/// Reverse the time axis of (T, F) or (B, T, F).
template <typename T>
BasicTensor<T> reverse_steps(const BasicTensor<T>& seq);

// ---------------------------------------------------------------------------
// 1-D convolution (valid padding, stride 1)

/// kernel is (k, C_in, F); bias is (F).
template <typename T>
struct Conv1dParams {
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
  Activation act = Activation::relu;

  std::size_t kernel_size() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t filters() const { return kernel.dim(2); }

  static Conv1dParams glorot(SeededRng& rng, std::size_t kernel_size, std::size_t in_channels,
                             std::size_t filters, Activation act = Activation::relu);
};

std::size_t conv_output_length(std::size_t length, std::size_t kernel_size);

template <typename T>
struct Conv1dCache {
  bool batched = false;
  BasicTensor<T> input;   // (B, L, C)
  BasicTensor<T> output;  // (B, L-k+1, F), post-activation
};

template <typename T>
BasicTensor<T> conv1d_forward(const Conv1dParams<T>& p, const BasicTensor<T>& x,
                              Conv1dCache<T>* cache = nullptr);

template <typename T>
struct Conv1dGrads {
  BasicTensor<T> input;
  Conv1dParams<T> params;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const Conv1dParams<T>& p, const Conv1dCache<T>& cache,
                               const BasicTensor<T>& upstream);

// ---------------------------------------------------------------------------
// 1-D max pooling

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
  bool operator==(const PoolSpec&) const = default;
};

/// floor((L - f) / s) + 1; throws DimensionError when L < f.
std::size_t pool_output_length(std::size_t length, const PoolSpec& spec);

template <typename T>
struct MaxPoolCache {
  bool batched = false;
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
BasicTensor<T> maxpool1d_forward(const PoolSpec& spec, const BasicTensor<T>& x,
                                 MaxPoolCache<T>* cache = nullptr);

/// Routes each upstream entry to the argmax of its window (first maximum wins).
template <typename T>
BasicTensor<T> maxpool1d_backward(const MaxPoolCache<T>& cache, const BasicTensor<T>& upstream);

// ---------------------------------------------------------------------------
// Dense softmax head

/// weight is (in, out); bias is (out).
template <typename T>
struct DenseParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  static DenseParams glorot(SeededRng& rng, std::size_t in_dim, std::size_t out_dim);
};

template <typename T>
struct DenseCache {
  bool batched = false;
  BasicTensor<T> input;  // (B, in)
  BasicTensor<T> probs;  // (B, out)
};

/// softmax(x W + b).
template <typename T>
BasicTensor<T> dense_forward(const DenseParams<T>& p, const BasicTensor<T>& x,
                             DenseCache<T>* cache = nullptr);

template <typename T>
struct DenseGrads {
  BasicTensor<T> input;
  DenseParams<T> params;
};

/// upstream is dL/d(probabilities).
template <typename T>
DenseGrads<T> dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                             const BasicTensor<T>& upstream);

/// upstream is dL/d(logits), e.g. probs - onehot for cross-entropy.
template <typename T>
DenseGrads<T> dense_backward_logits(const DenseParams<T>& p, const DenseCache<T>& cache,
                                    const BasicTensor<T>& upstream);

// ---------------------------------------------------------------------------
// Dropout (inverted)

struct DropoutSpec {
  double rate = 0.0;
  Mode mode = Mode::eval;
};

template <typename T>
struct DropoutCache {
  bool identity = true;
  BasicTensor<T> mask;  // 0 or 1/(1-rate)
};

/// Train mode keeps each element with probability 1-rate and scales it by
/// 1/(1-rate). Eval mode (or rate 0) returns x unchanged.
template <typename T>
BasicTensor<T> dropout(const DropoutSpec& spec, SeededRng& rng, const BasicTensor<T>& x,
                       DropoutCache<T>* cache = nullptr);

template <typename T>
BasicTensor<T> dropout_backward(const DropoutCache<T>& cache, const BasicTensor<T>& upstream);

}  // namespace mrb
