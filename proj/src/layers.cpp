#include "mrb/layers.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_util.hpp"

namespace mrb {

using detail::as_matrix;
using detail::ConstStridedMap;
using detail::StridedMap;

namespace {

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
T activation_grad_from_output(Activation kind, T y) {
  switch (kind) {
    case Activation::linear: return T(1);
    case Activation::sigmoid: return y * (T(1) - y);
    case Activation::tanh: return T(1) - y * y;
    case Activation::relu: return y > T(0) ? T(1) : T(0);
  }
  return T(1);
}

template <typename T>
void apply_activation(Activation kind, std::span<T> values) {
  switch (kind) {
    case Activation::linear: break;
    case Activation::sigmoid:
      for (auto& v : values) v = sigmoid(v);
      break;
    case Activation::tanh:
      for (auto& v : values) v = std::tanh(v);
      break;
    case Activation::relu:
      for (auto& v : values) v = v > T(0) ? v : T(0);
      break;
  }
}

// Column sums of a (rows, cols) matrix stored in t.
template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  BasicTensor<T> out({cols});
  if (rows > 0) detail::as_row(out) = as_matrix(t, rows, cols).colwise().sum();
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_last(const BasicTensor<T>& x, std::size_t left) {
  const std::size_t width = x.shape().back();
  const std::size_t right = width - left;
  const std::size_t rows = width == 0 ? 0 : x.size() / width;
  Shape ls = x.shape();
  ls.back() = left;
  Shape rs = x.shape();
  rs.back() = right;
  BasicTensor<T> a(ls);
  BasicTensor<T> b(rs);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.ptr() + r * width, left, a.ptr() + r * left);
    std::copy_n(x.ptr() + r * width + left, right, b.ptr() + r * right);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Place a (rows, H) block at column offset gate*H of a (rows, 4H) matrix.
template <typename T>
void place_gate_block(BasicTensor<T>& fused, const BasicTensor<T>& block, std::size_t gate) {
  const std::size_t rows = block.dim(0);
  const std::size_t h = block.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(block.ptr() + r * h, h, fused.ptr() + r * 4 * h + gate * h);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LSTM

template <typename T>
LstmParams<T> LstmParams<T>::zeros(std::size_t input_dim, std::size_t hidden) {
  return {BasicTensor<T>({input_dim, 4 * hidden}), BasicTensor<T>({hidden, 4 * hidden}),
          BasicTensor<T>({4 * hidden})};
}

template <typename T>
LstmParams<T> LstmParams<T>::glorot(SeededRng& rng, std::size_t input_dim, std::size_t hidden) {
  auto p = zeros(input_dim, hidden);
  for (std::size_t g = 0; g < 4; ++g) {
    place_gate_block(p.w_input, glorot_init<T>(rng, {input_dim, hidden}), g);
  }
  for (std::size_t g = 0; g < 4; ++g) {
    place_gate_block(p.w_hidden, glorot_init<T>(rng, {hidden, hidden}), g);
  }
  return p;
}

template <typename T>
LstmState<T> lstm_step(const LstmParams<T>& p, const BasicTensor<T>& x_t,
                       const LstmState<T>& prev) {
  const std::size_t d = p.input_dim();
  const std::size_t h = p.hidden();
  if (x_t.size() != d || prev.h.size() != h || prev.c.size() != h) {
    throw DimensionError("lstm_step: expected x " + shape_str({d}) + " and state " +
                         shape_str({h}) + ", got x " + shape_str(x_t.shape()) + ", h " +
                         shape_str(prev.h.shape()) + ", c " + shape_str(prev.c.shape()));
  }
  std::vector<T> z(4 * h);
  for (std::size_t j = 0; j < 4 * h; ++j) {
    T acc = p.bias[j];
    for (std::size_t k = 0; k < d; ++k) acc += x_t[k] * p.w_input[k * 4 * h + j];
    for (std::size_t k = 0; k < h; ++k) acc += prev.h[k] * p.w_hidden[k * 4 * h + j];
    z[j] = acc;
  }
  LstmState<T> next{BasicTensor<T>({h}), BasicTensor<T>({h})};
  for (std::size_t j = 0; j < h; ++j) {
    const T i = sigmoid(z[j]);
    const T f = sigmoid(z[h + j]);
    const T o = sigmoid(z[2 * h + j]);
    const T g = std::tanh(z[3 * h + j]);
    next.c[j] = f * prev.c[j] + i * g;
    next.h[j] = o * std::tanh(next.c[j]);
  }
  return next;
}

template <typename T>
BasicTensor<T> lstm_forward(const LstmParams<T>& p, const BasicTensor<T>& seq,
                            bool return_sequences, LstmCache<T>* cache) {
  if (seq.rank() != 2 && seq.rank() != 3) {
    throw DimensionError("lstm_forward: expected (T,D) or (B,T,D), got " + shape_str(seq.shape()));
  }
  const bool batched = seq.rank() == 3;
  const std::size_t batch = batched ? seq.dim(0) : 1;
  const std::size_t steps = seq.dim(batched ? 1 : 0);
  const std::size_t d = seq.shape().back();
  const std::size_t h = p.hidden();
  if (steps == 0) throw DimensionError("lstm_forward: empty sequence (T == 0)");
  if (d != p.input_dim()) {
    throw DimensionError("lstm_forward: input width " + std::to_string(d) +
                         " does not match parameter input_dim " + std::to_string(p.input_dim()));
  }
  const std::size_t rows = batch * steps;
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(h);

  BasicTensor<T> gates({rows, 4 * h});
  BasicTensor<T> cell({rows, h});
  BasicTensor<T> hidden({rows, h});

  auto z = as_matrix(gates);
  z.noalias() = as_matrix(seq, rows, d) * as_matrix(p.w_input);
  z.rowwise() += detail::as_row(p.bias);

  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) {
      StridedMap<T> zt(gates.ptr() + t * 4 * h, B, 4 * H, Eigen::OuterStride<>(steps * 4 * h));
      ConstStridedMap<T> hprev(hidden.ptr() + (t - 1) * h, B, H, Eigen::OuterStride<>(steps * h));
      zt.noalias() += hprev * as_matrix(p.w_hidden);
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      T* g = gates.ptr() + row * 4 * h;
      T* c = cell.ptr() + row * h;
      T* hh = hidden.ptr() + row * h;
      const T* c_prev = t > 0 ? cell.ptr() + (row - 1) * h : nullptr;
      for (std::size_t j = 0; j < h; ++j) {
        g[j] = sigmoid(g[j]);
        g[h + j] = sigmoid(g[h + j]);
        g[2 * h + j] = sigmoid(g[2 * h + j]);
        g[3 * h + j] = std::tanh(g[3 * h + j]);
        c[j] = g[j] * g[3 * h + j] + (c_prev ? g[h + j] * c_prev[j] : T(0));
        hh[j] = g[2 * h + j] * std::tanh(c[j]);
      }
    }
  }

  BasicTensor<T> out;
  if (return_sequences) {
    out = batched ? reshape(hidden, {batch, steps, h}) : reshape(hidden, {steps, h});
  } else {
    out = batched ? BasicTensor<T>({batch, h}) : BasicTensor<T>({h});
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(hidden.ptr() + (b * steps + steps - 1) * h, h, out.ptr() + b * h);
    }
  }

  if (cache) {
    cache->batch = batch;
    cache->steps = steps;
    cache->batched = batched;
    cache->return_sequences = return_sequences;
    cache->input = reshape(seq, {rows, d});
    cache->gates = std::move(gates);
    cache->cell = std::move(cell);
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
LstmGrads<T> lstm_backward(const LstmParams<T>& p, const LstmCache<T>& cache,
                           const BasicTensor<T>& upstream) {
  const std::size_t batch = cache.batch;
  const std::size_t steps = cache.steps;
  const std::size_t h = p.hidden();
  const std::size_t d = p.input_dim();
  const std::size_t rows = batch * steps;
  if (cache.gates.size() != rows * 4 * h || cache.input.size() != rows * d) {
    throw DimensionError("lstm_backward: cache does not match parameters");
  }
  const std::size_t expected = cache.return_sequences ? rows * h : batch * h;
  if (upstream.size() != expected) {
    throw DimensionError("lstm_backward: upstream gradient " + shape_str(upstream.shape()) +
                         " does not match forward output");
  }
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(h);

  BasicTensor<T> dh_out({rows, h});
  if (cache.return_sequences) {
    std::copy_n(upstream.ptr(), rows * h, dh_out.ptr());
  } else {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(upstream.ptr() + b * h, h, dh_out.ptr() + (b * steps + steps - 1) * h);
    }
  }

  LstmGrads<T> grads{BasicTensor<T>(), LstmParams<T>::zeros(d, h)};
  BasicTensor<T> dz({rows, 4 * h});
  BasicTensor<T> dh_next({batch, h});
  BasicTensor<T> dc_next({batch, h});

  for (std::size_t t = steps; t-- > 0;) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      const T* g = cache.gates.ptr() + row * 4 * h;
      const T* c = cache.cell.ptr() + row * h;
      const T* c_prev = t > 0 ? cache.cell.ptr() + (row - 1) * h : nullptr;
      T* dzr = dz.ptr() + row * 4 * h;
      T* dhn = dh_next.ptr() + b * h;
      T* dcn = dc_next.ptr() + b * h;
      const T* dho = dh_out.ptr() + row * h;
      for (std::size_t j = 0; j < h; ++j) {
        const T i = g[j], f = g[h + j], o = g[2 * h + j], gc = g[3 * h + j];
        const T tc = std::tanh(c[j]);
        const T dh = dho[j] + dhn[j];
        const T d_o = dh * tc;
        const T dc = dh * o * (T(1) - tc * tc) + dcn[j];
        const T cp = c_prev ? c_prev[j] : T(0);
        dzr[j] = dc * gc * i * (T(1) - i);
        dzr[h + j] = dc * cp * f * (T(1) - f);
        dzr[2 * h + j] = d_o * o * (T(1) - o);
        dzr[3 * h + j] = dc * i * (T(1) - gc * gc);
        dcn[j] = dc * f;
      }
    }
    if (t > 0) {
      ConstStridedMap<T> dzt(dz.ptr() + t * 4 * h, B, 4 * H, Eigen::OuterStride<>(steps * 4 * h));
      ConstStridedMap<T> hprev(cache.hidden.ptr() + (t - 1) * h, B, H,
                               Eigen::OuterStride<>(steps * h));
      as_matrix(dh_next).noalias() = dzt * as_matrix(p.w_hidden).transpose();
      as_matrix(grads.params.w_hidden).noalias() += hprev.transpose() * dzt;
    }
  }

  as_matrix(grads.params.w_input).noalias() =
      as_matrix(cache.input).transpose() * as_matrix(dz);
  grads.params.bias = column_sums(dz, rows, 4 * h);

  BasicTensor<T> dx({rows, d});
  as_matrix(dx).noalias() = as_matrix(dz) * as_matrix(p.w_input).transpose();
  grads.input = cache.batched ? reshape(std::move(dx), {batch, steps, d})
                              : reshape(std::move(dx), {steps, d});
  return grads;
}

// ---------------------------------------------------------------------------
// BiLSTM

template <typename T>
BasicTensor<T> reverse_steps(const BasicTensor<T>& seq) {
  if (seq.rank() != 2 && seq.rank() != 3) {
    throw DimensionError("reverse_steps: expected (T,F) or (B,T,F), got " +
                         shape_str(seq.shape()));
  }
  const bool batched = seq.rank() == 3;
  const std::size_t batch = batched ? seq.dim(0) : 1;
  const std::size_t steps = seq.dim(batched ? 1 : 0);
  const std::size_t width = seq.shape().back();
  BasicTensor<T> out(seq.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(seq.ptr() + (b * steps + t) * width, width,
                  out.ptr() + (b * steps + steps - 1 - t) * width);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> bilstm_forward(const BiLstmParams<T>& p, const BasicTensor<T>& seq,
                              bool return_sequences, BiLstmCache<T>* cache) {
  if (p.forward.hidden() != p.backward.hidden() ||
      p.forward.input_dim() != p.backward.input_dim()) {
    throw DimensionError("bilstm_forward: forward and backward LSTMs differ in size");
  }
  auto fwd = lstm_forward(p.forward, seq, return_sequences, cache ? &cache->forward : nullptr);
  auto bwd = lstm_forward(p.backward, reverse_steps(seq), return_sequences,
                          cache ? &cache->backward : nullptr);
  if (return_sequences) bwd = reverse_steps(bwd);
  return concat_last(fwd, bwd);
}

template <typename T>
BiLstmGrads<T> bilstm_backward(const BiLstmParams<T>& p, const BiLstmCache<T>& cache,
                               const BasicTensor<T>& upstream) {
  const std::size_t h = p.hidden();
  if (upstream.shape().back() != 2 * h) {
    throw DimensionError("bilstm_backward: upstream width " +
                         std::to_string(upstream.shape().back()) + " != 2H = " +
                         std::to_string(2 * h));
  }
  auto [up_f, up_b] = split_last(upstream, h);
  if (cache.backward.return_sequences) up_b = reverse_steps(up_b);
  auto gf = lstm_backward(p.forward, cache.forward, up_f);
  auto gb = lstm_backward(p.backward, cache.backward, up_b);
  BiLstmGrads<T> grads{std::move(gf.input), {std::move(gf.params), std::move(gb.params)}};
  add_into(grads.input, reverse_steps(gb.input));
  return grads;
}

// ---------------------------------------------------------------------------
// Conv1d

std::size_t conv_output_length(std::size_t length, std::size_t kernel_size) {
  if (kernel_size == 0) throw DimensionError("conv1d: kernel size must be >= 1");
  if (length < kernel_size) {
    throw DimensionError("conv1d: input length L=" + std::to_string(length) +
                         " is shorter than kernel size k=" + std::to_string(kernel_size));
  }
  return length - kernel_size + 1;
}

template <typename T>
Conv1dParams<T> Conv1dParams<T>::glorot(SeededRng& rng, std::size_t kernel_size,
                                        std::size_t in_channels, std::size_t filters,
                                        Activation act) {
  return {glorot_init<T>(rng, {kernel_size, in_channels, filters}), BasicTensor<T>({filters}),
          act};
}

template <typename T>
BasicTensor<T> conv1d_forward(const Conv1dParams<T>& p, const BasicTensor<T>& x,
                              Conv1dCache<T>* cache) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("conv1d: expected (L,C) or (B,L,C), got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t length = x.dim(batched ? 1 : 0);
  const std::size_t channels = x.shape().back();
  const std::size_t k = p.kernel_size();
  const std::size_t filters = p.filters();
  if (channels != p.in_channels()) {
    throw DimensionError("conv1d: input has " + std::to_string(channels) +
                         " channels, kernel expects " + std::to_string(p.in_channels()));
  }
  const std::size_t out_len = conv_output_length(length, k);

  BasicTensor<T> out(batched ? Shape{batch, out_len, filters} : Shape{out_len, filters});
  const auto kmat = as_matrix(p.kernel, k * channels, filters);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstStridedMap<T> windows(x.ptr() + b * length * channels, out_len, k * channels,
                               Eigen::OuterStride<>(channels));
    detail::MatMap<T> ob(out.ptr() + b * out_len * filters, out_len, filters);
    ob.noalias() = windows * kmat;
    ob.rowwise() += detail::as_row(p.bias);
  }
  apply_activation(p.act, out.data());

  if (cache) {
    cache->batched = batched;
    cache->input = batched ? x : reshape(x, {1, length, channels});
    cache->output = batched ? out : reshape(out, {1, out_len, filters});
  }
  return out;
}

template <typename T>
Conv1dGrads<T> conv1d_backward(const Conv1dParams<T>& p, const Conv1dCache<T>& cache,
                               const BasicTensor<T>& upstream) {
  const std::size_t batch = cache.input.dim(0);
  const std::size_t length = cache.input.dim(1);
  const std::size_t channels = cache.input.dim(2);
  const std::size_t out_len = cache.output.dim(1);
  const std::size_t filters = p.filters();
  const std::size_t k = p.kernel_size();
  if (upstream.size() != cache.output.size()) {
    throw DimensionError("conv1d_backward: upstream gradient " + shape_str(upstream.shape()) +
                         " does not match output " + shape_str(cache.output.shape()));
  }

  BasicTensor<T> dz({batch * out_len, filters});
  for (std::size_t i = 0; i < dz.size(); ++i) {
    dz[i] = upstream[i] * activation_grad_from_output(p.act, cache.output[i]);
  }

  Conv1dGrads<T> grads{BasicTensor<T>(cache.input.shape()),
                       {BasicTensor<T>(p.kernel.shape()), column_sums(dz, batch * out_len, filters),
                        p.act}};
  auto dk = as_matrix(grads.params.kernel, k * channels, filters);
  const auto kmat = as_matrix(p.kernel, k * channels, filters);
  detail::RowMat<T> dwin(out_len, k * channels);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstStridedMap<T> windows(cache.input.ptr() + b * length * channels, out_len, k * channels,
                               Eigen::OuterStride<>(channels));
    detail::ConstMatMap<T> dzb(dz.ptr() + b * out_len * filters, out_len, filters);
    dk.noalias() += windows.transpose() * dzb;
    dwin.noalias() = dzb * kmat.transpose();
    T* dx = grads.input.ptr() + b * length * channels;
    for (std::size_t i = 0; i < out_len; ++i) {
      T* dst = dx + i * channels;
      for (std::size_t j = 0; j < k * channels; ++j) dst[j] += dwin(i, j);
    }
  }
  if (!cache.batched) grads.input = reshape(std::move(grads.input), {length, channels});
  return grads;
}

// ---------------------------------------------------------------------------
// Max pooling

std::size_t pool_output_length(std::size_t length, const PoolSpec& spec) {
  if (spec.window == 0 || spec.stride == 0) {
    throw DimensionError("maxpool1d: window and stride must be >= 1");
  }
  if (length < spec.window) {
    throw DimensionError("maxpool1d: input length L=" + std::to_string(length) +
                         " is shorter than pool window f=" + std::to_string(spec.window));
  }
  return (length - spec.window) / spec.stride + 1;
}

template <typename T>
BasicTensor<T> maxpool1d_forward(const PoolSpec& spec, const BasicTensor<T>& x,
                                 MaxPoolCache<T>* cache) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("maxpool1d: expected (L,C) or (B,L,C), got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t length = x.dim(batched ? 1 : 0);
  const std::size_t channels = x.shape().back();
  const std::size_t out_len = pool_output_length(length, spec);

  BasicTensor<T> out(batched ? Shape{batch, out_len, channels} : Shape{out_len, channels});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < out_len; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t best = (b * length + i * spec.stride) * channels + c;
        for (std::size_t w = 1; w < spec.window; ++w) {
          const std::size_t idx = (b * length + i * spec.stride + w) * channels + c;
          if (x[idx] > x[best]) best = idx;
        }
        const std::size_t o = (b * out_len + i) * channels + c;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  if (cache) {
    cache->batched = batched;
    cache->input_shape = x.shape();
    cache->argmax = std::move(argmax);
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool1d_backward(const MaxPoolCache<T>& cache, const BasicTensor<T>& upstream) {
  if (upstream.size() != cache.argmax.size()) {
    throw DimensionError("maxpool1d_backward: upstream gradient " + shape_str(upstream.shape()) +
                         " does not match cached forward");
  }
  BasicTensor<T> dx(cache.input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) dx[cache.argmax[o]] += upstream[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
DenseParams<T> DenseParams<T>::glorot(SeededRng& rng, std::size_t in_dim, std::size_t out_dim) {
  return {glorot_init<T>(rng, {in_dim, out_dim}), BasicTensor<T>({out_dim})};
}

template <typename T>
BasicTensor<T> dense_forward(const DenseParams<T>& p, const BasicTensor<T>& x,
                             DenseCache<T>* cache) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError("dense: expected (in) or (B,in), got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 2;
  const std::size_t batch = batched ? x.dim(0) : 1;
  if (x.shape().back() != p.in_dim()) {
    throw DimensionError("dense: input width " + std::to_string(x.shape().back()) +
                         " does not match weight " + shape_str(p.weight.shape()));
  }
  BasicTensor<T> logits({batch, p.out_dim()});
  auto z = as_matrix(logits);
  z.noalias() = as_matrix(x, batch, p.in_dim()) * as_matrix(p.weight);
  z.rowwise() += detail::as_row(p.bias);
  auto probs = softmax(logits);
  if (cache) {
    cache->batched = batched;
    cache->input = reshape(x, {batch, p.in_dim()});
    cache->probs = probs;
  }
  return batched ? probs : reshape(std::move(probs), {p.out_dim()});
}

template <typename T>
DenseGrads<T> dense_backward_logits(const DenseParams<T>& p, const DenseCache<T>& cache,
                                    const BasicTensor<T>& upstream) {
  const std::size_t batch = cache.input.dim(0);
  const std::size_t out = p.out_dim();
  if (upstream.size() != batch * out) {
    throw DimensionError("dense_backward: upstream gradient " + shape_str(upstream.shape()) +
                         " does not match output width " + std::to_string(out));
  }
  DenseGrads<T> grads{BasicTensor<T>({batch, p.in_dim()}),
                      {BasicTensor<T>(p.weight.shape()), column_sums(upstream, batch, out)}};
  const auto dz = as_matrix(upstream, batch, out);
  as_matrix(grads.params.weight).noalias() = as_matrix(cache.input).transpose() * dz;
  as_matrix(grads.input).noalias() = dz * as_matrix(p.weight).transpose();
  if (!cache.batched) grads.input = reshape(std::move(grads.input), {p.in_dim()});
  return grads;
}

template <typename T>
DenseGrads<T> dense_backward(const DenseParams<T>& p, const DenseCache<T>& cache,
                             const BasicTensor<T>& upstream) {
  const std::size_t out = p.out_dim();
  if (upstream.size() != cache.probs.size()) {
    throw DimensionError("dense_backward: upstream gradient " + shape_str(upstream.shape()) +
                         " does not match output width " + std::to_string(out));
  }
  // Softmax Jacobian-vector product: dz_j = p_j (g_j - sum_k g_k p_k).
  BasicTensor<T> dz(cache.probs.shape());
  const std::size_t rows = cache.probs.dim(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* pr = cache.probs.ptr() + r * out;
    const T* g = upstream.ptr() + r * out;
    T dot = 0;
    for (std::size_t j = 0; j < out; ++j) dot += g[j] * pr[j];
    for (std::size_t j = 0; j < out; ++j) dz[r * out + j] = pr[j] * (g[j] - dot);
  }
  return dense_backward_logits(p, cache, dz);
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
BasicTensor<T> dropout(const DropoutSpec& spec, SeededRng& rng, const BasicTensor<T>& x,
                       DropoutCache<T>* cache) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(spec.rate));
  }
  if (spec.mode == Mode::eval || spec.rate == 0.0) {
    if (cache) {
      cache->identity = true;
      cache->mask = BasicTensor<T>();
    }
    return x;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  BasicTensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = rng.uniform() < spec.rate ? T(0) : scale;
  BasicTensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  if (cache) {
    cache->identity = false;
    cache->mask = std::move(mask);
  }
  return out;
}

template <typename T>
BasicTensor<T> dropout_backward(const DropoutCache<T>& cache, const BasicTensor<T>& upstream) {
  if (cache.identity) return upstream;
  if (cache.mask.size() != upstream.size()) {
    throw DimensionError("dropout_backward: upstream gradient does not match cached mask");
  }
  BasicTensor<T> dx = upstream;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= cache.mask[i];
  return dx;
}

#define MRB_INSTANTIATE(T)                                                                     \
  template struct LstmParams<T>;                                                               \
  template LstmState<T> lstm_step(const LstmParams<T>&, const BasicTensor<T>&,                 \
                                  const LstmState<T>&);                                        \
  template BasicTensor<T> lstm_forward(const LstmParams<T>&, const BasicTensor<T>&, bool,      \
                                       LstmCache<T>*);                                         \
  template LstmGrads<T> lstm_backward(const LstmParams<T>&, const LstmCache<T>&,               \
                                      const BasicTensor<T>&);                                  \
  template BasicTensor<T> reverse_steps(const BasicTensor<T>&);                                \
  template BasicTensor<T> bilstm_forward(const BiLstmParams<T>&, const BasicTensor<T>&, bool,  \
                                         BiLstmCache<T>*);                                     \
  template BiLstmGrads<T> bilstm_backward(const BiLstmParams<T>&, const BiLstmCache<T>&,       \
                                          const BasicTensor<T>&);                              \
  template struct Conv1dParams<T>;                                                             \
  template BasicTensor<T> conv1d_forward(const Conv1dParams<T>&, const BasicTensor<T>&,        \
                                         Conv1dCache<T>*);                                     \
  template Conv1dGrads<T> conv1d_backward(const Conv1dParams<T>&, const Conv1dCache<T>&,       \
                                          const BasicTensor<T>&);                              \
  template BasicTensor<T> maxpool1d_forward(const PoolSpec&, const BasicTensor<T>&,            \
                                            MaxPoolCache<T>*);                                 \
  template BasicTensor<T> maxpool1d_backward(const MaxPoolCache<T>&, const BasicTensor<T>&);   \
  template struct DenseParams<T>;                                                              \
  template BasicTensor<T> dense_forward(const DenseParams<T>&, const BasicTensor<T>&,          \
                                        DenseCache<T>*);                                       \
  template DenseGrads<T> dense_backward(const DenseParams<T>&, const DenseCache<T>&,           \
                                        const BasicTensor<T>&);                                \
  template DenseGrads<T> dense_backward_logits(const DenseParams<T>&, const DenseCache<T>&,    \
                                               const BasicTensor<T>&);                         \
  template BasicTensor<T> dropout(const DropoutSpec&, SeededRng&, const BasicTensor<T>&,       \
                                  DropoutCache<T>*);                                           \
  template BasicTensor<T> dropout_backward(const DropoutCache<T>&, const BasicTensor<T>&);

MRB_INSTANTIATE(float)
MRB_INSTANTIATE(double)

#undef MRB_INSTANTIATE

}  // namespace mrb
