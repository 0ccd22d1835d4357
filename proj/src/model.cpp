#include "mrb/model.hpp"

#include <algorithm>
#include <sstream>

namespace mrb {

std::string to_string(CellType cell) { return cell == CellType::bilstm ? "BiLSTM" : "LSTM"; }

std::string to_string(SequenceAxis axis) {
  return axis == SequenceAxis::features ? "features" : "steps";
}

// ---------------------------------------------------------------------------
// Validation

namespace {

struct BranchRef {
  const char* key;
  const BranchConfig& cfg;
};

std::vector<BranchRef> branches_in_order(const ModelConfig& cfg) {
  return {{"roberta_branch", cfg.roberta}, {"bart_branch", cfg.bart},
          {"ensemble_branch", cfg.ensemble}};
}

void validate_branch(const std::string& key, const BranchConfig& b,
                     std::vector<std::string>& errors) {
  if (b.depth < 1 || b.depth > 3) {
    errors.push_back(key + ".depth must be in [1,3], got " + std::to_string(b.depth));
  }
  if (b.units < 1) errors.push_back(key + ".units must be >= 1");
  if (b.conv_filters < 1) errors.push_back(key + ".conv_filters must be >= 1");
  if (b.conv_kernel < 1) errors.push_back(key + ".conv_kernel must be >= 1");
  if (b.pool.window < 1) errors.push_back(key + ".pool_size must be >= 1");
  if (b.pool.stride < 1) errors.push_back(key + ".pool_stride must be >= 1");
  if (!(b.dropout_rate >= 0.0 && b.dropout_rate < 1.0)) {
    errors.push_back(key + ".dropout_rate must be in [0,1), got " +
                     std::to_string(b.dropout_rate));
  }
  if (b.units >= 1 && b.conv_kernel >= 1) {
    const std::size_t width = b.recurrent_width();
    if (b.conv_kernel > width) {
      errors.push_back(key + ".conv_kernel " + std::to_string(b.conv_kernel) +
                       " exceeds recurrent output width " + std::to_string(width));
    } else if (b.pool.window >= 1 && width - b.conv_kernel + 1 < b.pool.window) {
      const std::size_t conv_len = width - b.conv_kernel + 1;
      errors.push_back(key + ".pool_size " + std::to_string(b.pool.window) +
                       " exceeds conv output length " + std::to_string(conv_len) +
                       " (conv output " + shape_str({conv_len, b.conv_filters}) + ")");
    }
  }
}

}  // namespace

std::vector<std::string> validate(const ModelConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.n_classes < 2) {
    errors.push_back("n_classes must be >= 2, got " + std::to_string(cfg.n_classes));
  }
  if (cfg.bart_dim < 1) errors.push_back("bart_dim must be >= 1");
  if (cfg.roberta_dim < 1) errors.push_back("roberta_dim must be >= 1");
  for (const auto& [key, branch] : branches_in_order(cfg)) validate_branch(key, branch, errors);
  return errors;
}

void check(const ModelConfig& cfg) {
  const auto errors = validate(cfg);
  if (errors.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json branch_to_json(const BranchConfig& b) {
  return {{"cell_type", to_string(b.cell)},
          {"depth", b.depth},
          {"units", b.units},
          {"conv_filters", b.conv_filters},
          {"conv_kernel", b.conv_kernel},
          {"conv_activation", to_string(b.conv_activation)},
          {"pool_size", b.pool.window},
          {"pool_stride", b.pool.stride},
          {"dropout_rate", b.dropout_rate}};
}

template <typename V>
void read_field(const nlohmann::json& j, const std::string& key, const std::string& path, V& out,
                std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<V, std::size_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        errors.push_back(path + key + " must be a non-negative integer");
        return;
      }
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) {
        errors.push_back(path + key + " must be an integer");
        return;
      }
    }
    out = v.get<V>();
  } catch (const nlohmann::json::exception& e) {
    errors.push_back(path + key + ": " + e.what());
  }
}

BranchConfig branch_from_json(const nlohmann::json& j, BranchConfig b, const std::string& path,
                              std::vector<std::string>& errors) {
  if (!j.is_object()) {
    errors.push_back(path + " must be an object");
    return b;
  }
  const std::string p = path + ".";
  if (j.contains("cell_type")) {
    const auto& v = j.at("cell_type");
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "LSTM" || s == "lstm") {
      b.cell = CellType::lstm;
    } else if (s == "BiLSTM" || s == "bilstm") {
      b.cell = CellType::bilstm;
    } else {
      errors.push_back(p + "cell_type must be \"LSTM\" or \"BiLSTM\"");
    }
  }
  read_field(j, "depth", p, b.depth, errors);
  read_field(j, "units", p, b.units, errors);
  read_field(j, "conv_filters", p, b.conv_filters, errors);
  read_field(j, "conv_kernel", p, b.conv_kernel, errors);
  read_field(j, "pool_size", p, b.pool.window, errors);
  read_field(j, "pool_stride", p, b.pool.stride, errors);
  read_field(j, "dropout_rate", p, b.dropout_rate, errors);
  if (j.contains("conv_activation")) {
    try {
      b.conv_activation = parse_activation(j.at("conv_activation").get<std::string>());
    } catch (const std::exception& e) {
      errors.push_back(p + "conv_activation: " + e.what());
    }
  }
  return b;
}

}  // namespace

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"bart_branch", branch_to_json(cfg.bart)},
          {"roberta_branch", branch_to_json(cfg.roberta)},
          {"ensemble_branch", branch_to_json(cfg.ensemble)},
          {"bart_dim", cfg.bart_dim},
          {"roberta_dim", cfg.roberta_dim},
          {"n_classes", cfg.n_classes},
          {"sequence_axis", to_string(cfg.sequence_axis)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, std::vector<std::string>* errors) {
  std::vector<std::string> local;
  auto& errs = errors ? *errors : local;
  const std::size_t before = errs.size();
  ModelConfig cfg;
  if (!j.is_object()) {
    errs.push_back("model config must be a JSON object");
  } else {
    if (j.contains("bart_branch")) {
      cfg.bart = branch_from_json(j.at("bart_branch"), cfg.bart, "bart_branch", errs);
    }
    if (j.contains("roberta_branch")) {
      cfg.roberta = branch_from_json(j.at("roberta_branch"), cfg.roberta, "roberta_branch", errs);
    }
    if (j.contains("ensemble_branch")) {
      cfg.ensemble =
          branch_from_json(j.at("ensemble_branch"), cfg.ensemble, "ensemble_branch", errs);
    }
    read_field(j, "bart_dim", "", cfg.bart_dim, errs);
    read_field(j, "roberta_dim", "", cfg.roberta_dim, errs);
    read_field(j, "n_classes", "", cfg.n_classes, errs);
    if (j.contains("sequence_axis")) {
      const auto& v = j.at("sequence_axis");
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "features") {
        cfg.sequence_axis = SequenceAxis::features;
      } else if (s == "steps") {
        cfg.sequence_axis = SequenceAxis::steps;
      } else {
        errs.push_back("sequence_axis must be \"features\" or \"steps\"");
      }
    }
  }
  if (!errors && errs.size() > before) {
    std::string msg = "invalid model config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Shape trace

namespace {

std::size_t lstm_param_count(std::size_t in, std::size_t h) { return 4 * h * (in + h + 1); }

Shape sequence_shape(SequenceAxis axis, std::size_t features) {
  return axis == SequenceAxis::features ? Shape{1, features} : Shape{features, 1};
}

std::size_t trace_branch(const std::string& name, const BranchConfig& b, Shape input,
                         ShapeTrace& trace) {
  const std::size_t steps = input[0];
  std::size_t in_width = input[1];
  const std::size_t width = b.recurrent_width();
  const std::string cell = b.cell == CellType::bilstm ? "bilstm" : "lstm";
  const std::size_t directions = b.cell == CellType::bilstm ? 2 : 1;
  for (int l = 0; l < b.depth; ++l) {
    const bool seq = l + 1 < b.depth;
    trace.push_back({name + "." + cell + std::to_string(l), seq ? Shape{steps, width} : Shape{width},
                     directions * lstm_param_count(in_width, b.units)});
    in_width = width;
  }
  trace.push_back({name + ".reshape", {width, 1}, 0});
  const std::size_t conv_len = conv_output_length(width, b.conv_kernel);
  trace.push_back({name + ".conv", {conv_len, b.conv_filters},
                   b.conv_kernel * b.conv_filters + b.conv_filters});
  const std::size_t pooled = pool_output_length(conv_len, b.pool);
  trace.push_back({name + ".pool", {pooled, b.conv_filters}, 0});
  trace.push_back({name + ".flatten", {pooled * b.conv_filters}, 0});
  return pooled * b.conv_filters;
}

}  // namespace

ShapeTrace shape_trace(const ModelConfig& cfg) {
  check(cfg);
  ShapeTrace trace;
  try {
    const std::size_t r =
        trace_branch("roberta", cfg.roberta, sequence_shape(cfg.sequence_axis, cfg.roberta_dim),
                     trace);
    const std::size_t b =
        trace_branch("bart", cfg.bart, sequence_shape(cfg.sequence_axis, cfg.bart_dim), trace);
    trace.push_back({"concat", {r + b}, 0});
    const Shape ens_in = sequence_shape(cfg.sequence_axis, r + b);
    trace.push_back({"ensemble.reshape_in", ens_in, 0});
    const std::size_t e = trace_branch("ensemble", cfg.ensemble, ens_in, trace);
    trace.push_back({"dense", {cfg.n_classes}, e * cfg.n_classes + cfg.n_classes});
  } catch (const DimensionError& err) {
    throw ConfigError(err.what());
  }
  return trace;
}

std::size_t parameter_count(const ShapeTrace& trace) {
  std::size_t total = 0;
  for (const auto& e : trace) total += e.params;
  return total;
}

std::string format_trace(const ShapeTrace& trace) {
  std::size_t name_w = 5;
  for (const auto& e : trace) name_w = std::max(name_w, e.layer.size());
  std::ostringstream os;
  os << std::left;
  os.width(static_cast<std::streamsize>(name_w + 2));
  os << "layer";
  os.width(14);
  os << "output" << "params\n";
  for (const auto& e : trace) {
    os.width(static_cast<std::streamsize>(name_w + 2));
    os << e.layer;
    os.width(14);
    os << shape_str(e.shape) << e.params << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename T, typename Out, typename Params>
void collect_branch(const std::string& name, Params& branch, std::vector<Out>& out) {
  for (std::size_t l = 0; l < branch.recurrent.size(); ++l) {
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, LstmParams<T>>) {
            const std::string base = name + ".lstm" + std::to_string(l) + ".";
            out.push_back({base + "W", &layer.w_input});
            out.push_back({base + "U", &layer.w_hidden});
            out.push_back({base + "b", &layer.bias});
          } else {
            const std::string base = name + ".bilstm" + std::to_string(l) + ".";
            out.push_back({base + "fwd.W", &layer.forward.w_input});
            out.push_back({base + "fwd.U", &layer.forward.w_hidden});
            out.push_back({base + "fwd.b", &layer.forward.bias});
            out.push_back({base + "bwd.W", &layer.backward.w_input});
            out.push_back({base + "bwd.U", &layer.backward.w_hidden});
            out.push_back({base + "bwd.b", &layer.backward.bias});
          }
        },
        branch.recurrent[l]);
  }
  out.push_back({name + ".conv.kernel", &branch.conv.kernel});
  out.push_back({name + ".conv.bias", &branch.conv.bias});
}

template <typename T, typename Out, typename Params>
std::vector<Out> collect(Params& p) {
  std::vector<Out> out;
  collect_branch<T>("roberta", p.roberta, out);
  collect_branch<T>("bart", p.bart, out);
  collect_branch<T>("ensemble", p.ensemble, out);
  out.push_back({"dense.W", &p.head.weight});
  out.push_back({"dense.b", &p.head.bias});
  return out;
}

template <typename T>
BranchParams<T> init_branch(const BranchConfig& b, std::size_t input_dim, std::size_t conv_in,
                            SeededRng& rng) {
  BranchParams<T> out;
  std::size_t in = input_dim;
  for (int l = 0; l < b.depth; ++l) {
    if (b.cell == CellType::bilstm) {
      auto fwd = LstmParams<T>::glorot(rng, in, b.units);
      auto bwd = LstmParams<T>::glorot(rng, in, b.units);
      out.recurrent.emplace_back(BiLstmParams<T>{std::move(fwd), std::move(bwd)});
    } else {
      out.recurrent.emplace_back(LstmParams<T>::glorot(rng, in, b.units));
    }
    in = b.recurrent_width();
  }
  out.conv = Conv1dParams<T>::glorot(rng, b.conv_kernel, conv_in, b.conv_filters,
                                     b.conv_activation);
  return out;
}

std::size_t seq_input_width(SequenceAxis axis, std::size_t dim) {
  return axis == SequenceAxis::features ? dim : 1;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> named_tensors(ModelParams<T>& params) {
  return collect<T, NamedTensor<T>>(params);
}

template <typename T>
std::vector<ConstNamedTensor<T>> named_tensors(const ModelParams<T>& params) {
  return collect<T, ConstNamedTensor<T>>(params);
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& params) {
  ModelParams<T> out = params;
  for (auto& nt : named_tensors(out)) nt.tensor->fill(T(0));
  return out;
}

template <typename U, typename T>
ModelParams<U> cast_params(const ModelParams<T>& params) {
  // Build a same-structure ModelParams<U> by walking both in name order.
  auto convert_lstm = [](const LstmParams<T>& p) {
    return LstmParams<U>{p.w_input.template cast<U>(), p.w_hidden.template cast<U>(),
                         p.bias.template cast<U>()};
  };
  auto convert_branch = [&](const BranchParams<T>& b) {
    BranchParams<U> out;
    for (const auto& layer : b.recurrent) {
      if (const auto* uni = std::get_if<LstmParams<T>>(&layer)) {
        out.recurrent.emplace_back(convert_lstm(*uni));
      } else {
        const auto& bi = std::get<BiLstmParams<T>>(layer);
        out.recurrent.emplace_back(BiLstmParams<U>{convert_lstm(bi.forward),
                                                   convert_lstm(bi.backward)});
      }
    }
    out.conv = {b.conv.kernel.template cast<U>(), b.conv.bias.template cast<U>(), b.conv.act};
    return out;
  };
  return {convert_branch(params.roberta), convert_branch(params.bart),
          convert_branch(params.ensemble),
          {params.head.weight.template cast<U>(), params.head.bias.template cast<U>()}};
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(const ModelConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  check(cfg_);
  const auto trace = shape_trace(cfg_);
  const auto axis = cfg_.sequence_axis;
  params_.roberta = init_branch<T>(cfg_.roberta, seq_input_width(axis, cfg_.roberta_dim), 1, rng);
  params_.bart = init_branch<T>(cfg_.bart, seq_input_width(axis, cfg_.bart_dim), 1, rng);
  std::size_t concat_width = 0;
  for (const auto& e : trace) {
    if (e.layer == "concat") concat_width = e.shape[0];
  }
  params_.ensemble = init_branch<T>(cfg_.ensemble, seq_input_width(axis, concat_width), 1, rng);
  const std::size_t head_in = trace[trace.size() - 2].shape[0];
  params_.head = DenseParams<T>::glorot(rng, head_in, cfg_.n_classes);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, ModelParams<T> params)
    : cfg_(cfg), params_(std::move(params)) {
  check(cfg_);
}

template <typename T>
Model<T> Model<T>::from_weights(const ModelConfig& cfg, const ModelWeights& weights) {
  SeededRng rng(0);
  Model<T> model(cfg, rng);
  auto slots = named_tensors(model.params_);
  if (slots.size() != weights.size()) {
    throw ConsistencyError("model file holds " + std::to_string(weights.size()) +
                           " tensors but the config requires " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, tensor] = weights[i];
    if (name != slots[i].name) {
      throw ConsistencyError("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                             slots[i].name + "'");
    }
    if (tensor.shape() != slots[i].tensor->shape()) {
      throw ConsistencyError("tensor '" + name + "' has shape " + shape_str(tensor.shape()) +
                             ", expected " + shape_str(slots[i].tensor->shape()));
    }
    *slots[i].tensor = tensor.template cast<T>();
  }
  return model;
}

template <typename T>
ModelWeights Model<T>::weights() const {
  ModelWeights out;
  for (const auto& nt : named_tensors(params_)) {
    out.emplace_back(nt.name, nt.tensor->template cast<float>());
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& nt : named_tensors(params_)) total += nt.tensor->size();
  return total;
}

namespace {

template <typename T>
BasicTensor<T> branch_forward(const BranchConfig& cfg, const BranchParams<T>& p,
                              BasicTensor<T> x, Mode mode, SeededRng* rng,
                              BranchCache<T>* cache) {
  const std::size_t batch = x.dim(0);
  if (cache) {
    cache->batch = batch;
    cache->dropout.assign(p.recurrent.size(), {});
    cache->recurrent.clear();
  }
  const DropoutSpec drop{cfg.dropout_rate, mode};
  for (std::size_t l = 0; l < p.recurrent.size(); ++l) {
    if (mode == Mode::train && cfg.dropout_rate > 0.0) {
      if (!rng) throw ConfigError("train-mode forward requires an rng for dropout");
      x = dropout(drop, *rng, x, cache ? &cache->dropout[l] : nullptr);
    }
    const bool seq = l + 1 < p.recurrent.size();
    x = std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, LstmParams<T>>) {
            LstmCache<T>* c = nullptr;
            if (cache) c = &std::get<LstmCache<T>>(cache->recurrent.emplace_back(LstmCache<T>{}));
            return lstm_forward(layer, x, seq, c);
          } else {
            BiLstmCache<T>* c = nullptr;
            if (cache) {
              c = &std::get<BiLstmCache<T>>(cache->recurrent.emplace_back(BiLstmCache<T>{}));
            }
            return bilstm_forward(layer, x, seq, c);
          }
        },
        p.recurrent[l]);
  }
  const std::size_t width = x.shape().back();
  auto conv = conv1d_forward(p.conv, reshape(std::move(x), {batch, width, 1}),
                             cache ? &cache->conv : nullptr);
  auto pooled = maxpool1d_forward(cfg.pool, conv, cache ? &cache->pool : nullptr);
  if (cache) cache->pooled = pooled.shape();
  const std::size_t flat = pooled.size() / batch;
  return reshape(std::move(pooled), {batch, flat});
}

// Returns the gradient w.r.t. the branch input sequence (B, T, D).
template <typename T>
BasicTensor<T> branch_backward(const BranchParams<T>& p, const BranchCache<T>& cache,
                               const BasicTensor<T>& upstream, BranchParams<T>& grads) {
  auto d = maxpool1d_backward(cache.pool, reshape(upstream, cache.pooled));
  auto cg = conv1d_backward(p.conv, cache.conv, d);
  grads.conv.kernel = std::move(cg.params.kernel);
  grads.conv.bias = std::move(cg.params.bias);
  const std::size_t width = cg.input.dim(1);
  BasicTensor<T> g = reshape(std::move(cg.input), {cache.batch, width});
  for (std::size_t l = p.recurrent.size(); l-- > 0;) {
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, LstmParams<T>>) {
            auto lg = lstm_backward(layer, std::get<LstmCache<T>>(cache.recurrent[l]), g);
            g = std::move(lg.input);
            grads.recurrent[l] = std::move(lg.params);
          } else {
            auto lg = bilstm_backward(layer, std::get<BiLstmCache<T>>(cache.recurrent[l]), g);
            g = std::move(lg.input);
            grads.recurrent[l] = std::move(lg.params);
          }
        },
        p.recurrent[l]);
    g = dropout_backward(cache.dropout[l], g);
  }
  return g;
}

template <typename T>
BasicTensor<T> as_sequence(const BasicTensor<T>& x, SequenceAxis axis) {
  const std::size_t batch = x.dim(0);
  const std::size_t width = x.dim(1);
  return axis == SequenceAxis::features ? reshape(x, {batch, 1, width})
                                        : reshape(x, {batch, width, 1});
}

template <typename T>
BasicTensor<T> as_batch(const BasicTensor<T>& x, std::size_t dim, const char* name) {
  if (x.rank() == 1 && x.dim(0) == dim) return reshape(x, {1, dim});
  if (x.rank() == 2 && x.dim(1) == dim) return x;
  throw DimensionError(std::string("model input '") + name + "' has shape " +
                       shape_str(x.shape()) + ", expected (" + std::to_string(dim) + ",) or (B," +
                       std::to_string(dim) + ")");
}

}  // namespace

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& bart, const BasicTensor<T>& roberta,
                                 Mode mode, SeededRng* rng, ModelCache<T>* cache) const {
  auto xb = as_batch(bart, cfg_.bart_dim, "bart");
  auto xr = as_batch(roberta, cfg_.roberta_dim, "roberta");
  if (xb.dim(0) != xr.dim(0)) {
    throw DimensionError("model inputs disagree on batch size: bart " + shape_str(bart.shape()) +
                         ", roberta " + shape_str(roberta.shape()));
  }
  const std::size_t batch = xb.dim(0);
  const bool batched = bart.rank() == 2;
  const auto axis = cfg_.sequence_axis;

  auto r = branch_forward(cfg_.roberta, params_.roberta, as_sequence(xr, axis), mode, rng,
                          cache ? &cache->roberta : nullptr);
  auto b = branch_forward(cfg_.bart, params_.bart, as_sequence(xb, axis), mode, rng,
                          cache ? &cache->bart : nullptr);
  const std::size_t r_width = r.dim(1);
  auto joined = concat_last(r, b);
  auto e = branch_forward(cfg_.ensemble, params_.ensemble, as_sequence(joined, axis), mode, rng,
                          cache ? &cache->ensemble : nullptr);
  auto probs = dense_forward(params_.head, e, cache ? &cache->head : nullptr);
  if (cache) {
    cache->batched = batched;
    cache->batch = batch;
    cache->roberta_width = r_width;
  }
  return batched ? probs : reshape(std::move(probs), {cfg_.n_classes});
}

template <typename T>
ModelParams<T> Model<T>::backward(const ModelCache<T>& cache,
                                  const BasicTensor<T>& dlogits) const {
  if (dlogits.size() != cache.batch * cfg_.n_classes) {
    throw DimensionError("model backward: gradient " + shape_str(dlogits.shape()) +
                         " does not match forward output");
  }
  ModelParams<T> grads = zeros_like(params_);
  auto hg = dense_backward_logits(params_.head, cache.head,
                                  reshape(dlogits, {cache.batch, cfg_.n_classes}));
  grads.head = std::move(hg.params);
  auto de = branch_backward(params_.ensemble, cache.ensemble, hg.input, grads.ensemble);
  const std::size_t joined = de.size() / cache.batch;
  de = reshape(std::move(de), {cache.batch, joined});
  const std::size_t rw = cache.roberta_width;
  BasicTensor<T> dr({cache.batch, rw});
  BasicTensor<T> db({cache.batch, joined - rw});
  for (std::size_t i = 0; i < cache.batch; ++i) {
    std::copy_n(de.ptr() + i * joined, rw, dr.ptr() + i * rw);
    std::copy_n(de.ptr() + i * joined + rw, joined - rw, db.ptr() + i * (joined - rw));
  }
  branch_backward(params_.roberta, cache.roberta, dr, grads.roberta);
  branch_backward(params_.bart, cache.bart, db, grads.bart);
  return grads;
}

template <typename T>
std::size_t Model<T>::predict(const BasicTensor<T>& bart, const BasicTensor<T>& roberta) const {
  const auto probs = forward(bart, roberta, Mode::eval);
  return argmax<T>(probs.data().first(cfg_.n_classes));
}

template <typename T>
std::vector<std::size_t> Model<T>::predict_batch(const BasicTensor<T>& bart,
                                                 const BasicTensor<T>& roberta) const {
  const auto probs = forward(bart, roberta, Mode::eval);
  const std::size_t n = cfg_.n_classes;
  std::vector<std::size_t> out(probs.size() / n);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = argmax<T>(probs.data().subspan(i * n, n));
  }
  return out;
}

#define MRB_INSTANTIATE(T)                                                               \
  template class Model<T>;                                                               \
  template std::vector<NamedTensor<T>> named_tensors(ModelParams<T>&);                   \
  template std::vector<ConstNamedTensor<T>> named_tensors(const ModelParams<T>&);        \
  template ModelParams<T> zeros_like(const ModelParams<T>&);                             \
  template std::size_t argmax(std::span<const T>);

MRB_INSTANTIATE(float)
MRB_INSTANTIATE(double)
#undef MRB_INSTANTIATE

template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

}  // namespace mrb
