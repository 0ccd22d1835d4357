#include "mrb/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mrb {

std::string to_string(Optimizer opt) { return opt == Optimizer::adam ? "adam" : "sgd"; }

// ---------------------------------------------------------------------------
// Config

std::vector<std::string> validate(const TrainConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.max_epochs < 1) errors.push_back("max_epochs must be >= 1");
  if (cfg.patience < 1) errors.push_back("patience must be >= 1");
  if (cfg.batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    errors.push_back("learning_rate must be finite and >= 0");
  }
  if (cfg.rounds < 1) errors.push_back("rounds must be >= 1");
  const auto& r = cfg.split;
  if (!(r.train > 0 && r.validation > 0 && r.test > 0) ||
      std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    errors.push_back("split ratios must be positive and sum to 1");
  }
  return errors;
}

void check(const TrainConfig& cfg) {
  const auto errors = validate(cfg);
  if (errors.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", to_string(cfg.optimizer)},
          {"seed", cfg.seed},
          {"rounds", cfg.rounds},
          {"same_seed_every_round", cfg.same_seed_every_round},
          {"split", {cfg.split.train, cfg.split.validation, cfg.split.test}},
          {"threads", cfg.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, std::vector<std::string>* errors) {
  std::vector<std::string> local;
  auto& errs = errors ? *errors : local;
  const std::size_t before = errs.size();
  TrainConfig cfg;
  auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    using V = std::decay_t<decltype(out)>;
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) {
        errs.push_back(std::string(key) + " must be a boolean");
        return;
      }
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<V> && v.get<long long>() < 0)) {
        errs.push_back(std::string(key) + " must be " +
                       (std::is_unsigned_v<V> ? "a non-negative integer" : "an integer"));
        return;
      }
    } else if (!v.is_number()) {
      errs.push_back(std::string(key) + " must be a number");
      return;
    }
    out = v.get<V>();
  };
  if (!j.is_object()) {
    errs.push_back("training config must be a JSON object");
  } else {
    read("max_epochs", cfg.max_epochs);
    read("patience", cfg.patience);
    read("batch_size", cfg.batch_size);
    read("learning_rate", cfg.learning_rate);
    read("seed", cfg.seed);
    read("rounds", cfg.rounds);
    read("same_seed_every_round", cfg.same_seed_every_round);
    read("threads", cfg.threads);
    if (j.contains("optimizer")) {
      const auto& v = j.at("optimizer");
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "adam") {
        cfg.optimizer = Optimizer::adam;
      } else if (s == "sgd") {
        cfg.optimizer = Optimizer::sgd;
      } else {
        errs.push_back("optimizer must be \"adam\" or \"sgd\"");
      }
    }
    if (j.contains("split")) {
      const auto& v = j.at("split");
      if (v.is_array() && v.size() == 3 &&
          std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_number(); })) {
        cfg.split = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
      } else {
        errs.push_back("split must be an array of three numbers");
      }
    }
  }
  if (errs.size() == before) {
    for (auto& e : validate(cfg)) errs.push_back(std::move(e));
  }
  if (!errors && errs.size() > before) {
    std::string msg = "invalid training config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Loss

namespace {
constexpr double kProbFloor = 1e-12;
}

template <typename T>
double cross_entropy(std::span<const T> probs, std::size_t y) {
  if (y >= probs.size()) {
    throw DataError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                    std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(static_cast<double>(probs[y]), kProbFloor));
}

template <typename T>
double mean_cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels) {
  const std::size_t n = probs.shape().back();
  if (probs.size() != labels.size() * n || labels.empty()) {
    throw DimensionError("mean_cross_entropy: probabilities " + shape_str(probs.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total += cross_entropy<T>(probs.data().subspan(i * n, n), labels[i]);
  }
  return total / static_cast<double>(labels.size());
}

template <typename T>
BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>& probs,
                                        std::span<const std::size_t> labels) {
  const std::size_t n = probs.shape().back();
  if (probs.size() != labels.size() * n || labels.empty()) {
    throw DimensionError("cross_entropy_logit_grad: probabilities " + shape_str(probs.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
  }
  BasicTensor<T> g = probs;
  const T inv = T(1) / static_cast<T>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n) throw DataError("label " + std::to_string(labels[i]) + " out of range");
    g[i * n + labels[i]] -= T(1);
  }
  for (auto& v : g.data()) v *= inv;
  return g;
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {

template <typename T>
void check_pairs(const std::vector<BasicTensor<T>*>& params,
                 const std::vector<const BasicTensor<T>*>& grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape()) {
      throw DimensionError("optimizer: parameter " + std::to_string(i) + " has shape " +
                           shape_str(params[i]->shape()) + " but its gradient is " +
                           shape_str(grads[i]->shape()));
    }
  }
}

}  // namespace

template <typename T>
void adam_step(AdamState<T>& state, const std::vector<BasicTensor<T>*>& params,
               const std::vector<const BasicTensor<T>*>& grads, double lr) {
  check_pairs(params, grads);
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(lr / c1);
  const T root_c2 = static_cast<T>(std::sqrt(c2));
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].shape() != params[k]->shape()) {
      throw DimensionError("adam_step: moment shape " + shape_str(state.m[k].shape()) +
                           " differs from parameter " + shape_str(params[k]->shape()));
    }
    T* p = params[k]->ptr();
    const T* g = grads[k]->ptr();
    T* m = state.m[k].ptr();
    T* v = state.v[k].ptr();
    const std::size_t n = params[k]->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      // lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections folded in.
      p[i] -= step * m[i] / (std::sqrt(v[i]) / root_c2 + eps);
    }
  }
}

template <typename T>
void sgd_step(const std::vector<BasicTensor<T>*>& params,
              const std::vector<const BasicTensor<T>*>& grads, double lr) {
  check_pairs(params, grads);
  const T rate = static_cast<T>(lr);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k]->ptr();
    const T* g = grads[k]->ptr();
    for (std::size_t i = 0; i < params[k]->size(); ++i) p[i] -= rate * g[i];
  }
}

template <typename T>
std::vector<BasicTensor<T>*> tensor_ptrs(ModelParams<T>& p) {
  std::vector<BasicTensor<T>*> out;
  for (auto& nt : named_tensors(p)) out.push_back(nt.tensor);
  return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> tensor_ptrs(const ModelParams<T>& p) {
  std::vector<const BasicTensor<T>*> out;
  for (const auto& nt : named_tensors(p)) out.push_back(nt.tensor);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

SplitIndices stratified_split(const std::vector<std::size_t>& labels, SeededRng& rng,
                              const SplitRatios& ratios) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.empty()) throw DataError("stratified_split: no samples");
  SplitIndices out;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 3) {
      throw DataError("stratified_split: class " + std::to_string(cls) + " has " +
                      std::to_string(idx.size()) + " samples, need at least 3");
    }
    rng.shuffle(std::span<std::size_t>(idx));
    const double n = static_cast<double>(idx.size());
    const std::size_t n_val =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * ratios.validation)));
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * ratios.test)));
    const std::size_t n_train = idx.size() - n_val - n_test;
    auto it = idx.begin();
    out.train.insert(out.train.end(), it, it + n_train);
    it += n_train;
    out.validation.insert(out.validation.end(), it, it + n_val);
    it += n_val;
    out.test.insert(out.test.end(), it, idx.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  last_improved_ = epoch_ == 1 || val_loss < best_loss_;
  if (last_improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor gather_rows(const EmbeddingMatrix& m, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), m.dim});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto row = m.row(idx[i]);
    std::copy(row.begin(), row.end(), out.ptr() + i * m.dim);
  }
  return out;
}

std::vector<std::size_t> gather_labels(const EmbeddingDataset& d,
                                       std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(d.labels[i]);
  return out;
}

void check_data(const ModelConfig& model_cfg, const EmbeddingDataset& data) {
  if (data.bart.dim != model_cfg.bart_dim) {
    throw DimensionError("bart embeddings have dimension " + std::to_string(data.bart.dim) +
                         " but the model expects " + std::to_string(model_cfg.bart_dim));
  }
  if (data.roberta.dim != model_cfg.roberta_dim) {
    throw DimensionError("roberta embeddings have dimension " +
                         std::to_string(data.roberta.dim) + " but the model expects " +
                         std::to_string(model_cfg.roberta_dim));
  }
  if (data.bart.rows != data.size() || data.roberta.rows != data.size()) {
    throw DataError("record counts disagree: bart " + std::to_string(data.bart.rows) +
                    ", roberta " + std::to_string(data.roberta.rows) + ", labels " +
                    std::to_string(data.size()));
  }
  // ReLU would silently map NaN to 0, so catch bad inputs here.
  for (const EmbeddingMatrix* m : {&data.bart, &data.roberta}) {
    const auto bad = std::find_if(m->values.begin(), m->values.end(),
                                  [](float v) { return !std::isfinite(v); });
    if (bad != m->values.end()) {
      const auto at = static_cast<std::size_t>(bad - m->values.begin());
      throw NumericError(std::string(m == &data.bart ? "bart" : "roberta") +
                         " embeddings contain a non-finite value at record " +
                         std::to_string(at / m->dim));
    }
  }
  for (auto y : data.labels) {
    if (y >= model_cfg.n_classes) {
      throw DataError("label " + std::to_string(y) + " is outside the model's " +
                      std::to_string(model_cfg.n_classes) + " classes");
    }
  }
}

void check_indices(const EmbeddingDataset& data, const std::vector<std::size_t>& idx,
                   const char* what) {
  if (idx.empty()) throw DataError(std::string(what) + " split is empty");
  for (auto i : idx) {
    if (i >= data.size()) {
      throw DataError(std::string(what) + " split index " + std::to_string(i) +
                      " is out of range for " + std::to_string(data.size()) + " records");
    }
  }
}

}  // namespace

std::vector<std::size_t> all_indices(const EmbeddingDataset& data) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const EmbeddingDataset& data, const SplitIndices& split,
                  const EpochCallback& on_epoch) {
  check(cfg);
  check(model_cfg);
  check_data(model_cfg, data);
  check_indices(data, split.train, "train");
  check_indices(data, split.validation, "validation");

  const auto start = Clock::now();
  SeededRng root(cfg.seed);
  SeededRng init_rng = root.fork(0);
  SeededRng order_rng = root.fork(1);
  SeededRng dropout_rng = root.fork(2);

  Model<float> model(model_cfg, init_rng);
  ModelParams<float> best = model.params();
  AdamState<float> adam;
  EarlyStopping stopper(cfg.patience);
  TrainResult result{model, {}, 0, 0.0, false, 0.0};

  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          b, std::min(cfg.batch_size, order.size() - b));
      const auto labels = gather_labels(data, idx);
      ModelCache<float> cache;
      const auto probs = model.forward(gather_rows(data.bart, idx), gather_rows(data.roberta, idx),
                                       Mode::train, &dropout_rng, &cache);
      const double loss = mean_cross_entropy(probs, labels);
      if (!std::isfinite(loss)) {
        throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(idx.size());
      const auto grads = model.backward(cache, cross_entropy_logit_grad(probs, labels));
      if (cfg.optimizer == Optimizer::adam) {
        adam_step(adam, tensor_ptrs(model.params()), tensor_ptrs(grads), cfg.learning_rate);
      } else {
        sgd_step(tensor_ptrs(model.params()), tensor_ptrs(grads), cfg.learning_rate);
      }
    }
    const double val_loss = evaluate_loss(model, data, split.validation);
    if (!std::isfinite(val_loss)) {
      throw NumericError("validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val_loss,
                    seconds_since(epoch_start)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const bool stop = stopper.update(val_loss);
    if (stopper.last_improved()) best = model.params();
    if (stop && epoch < cfg.max_epochs) {
      result.stopped_early = true;
      break;
    }
  }
  result.model = Model<float>(model_cfg, std::move(best));
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  result.seconds = seconds_since(start);
  return result;
}

double evaluate_loss(const Model<float>& model, const EmbeddingDataset& data,
                     const std::vector<std::size_t>& indices, std::size_t batch_size) {
  return evaluate(model, data, indices, batch_size).loss;
}

EvalResult evaluate(const Model<float>& model, const EmbeddingDataset& data,
                    const std::vector<std::size_t>& indices, std::size_t batch_size) {
  check_data(model.config(), data);
  check_indices(data, indices, "evaluation");
  if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  const std::size_t n = model.config().n_classes;
  EvalResult out;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < indices.size(); b += batch_size) {
    const auto idx = std::span<const std::size_t>(indices).subspan(
        b, std::min(batch_size, indices.size() - b));
    const auto probs =
        model.forward(gather_rows(data.bart, idx), gather_rows(data.roberta, idx), Mode::eval);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = probs.data().subspan(i * n, n);
      loss_sum += cross_entropy<float>(row, data.labels[idx[i]]);
      out.predictions.push_back(argmax<float>(row));
    }
  }
  out.loss = loss_sum / static_cast<double>(indices.size());
  std::vector<std::size_t> truth;
  for (auto i : indices) truth.push_back(data.labels[i]);
  out.confusion = confusion(truth, out.predictions, n);
  out.metrics = metrics_from_confusion(out.confusion);
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,seconds\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.3f\n", r.epoch, r.train_loss, r.val_loss,
                  r.seconds);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Rounds

Stats summarize(const std::vector<double>& values) {
  Stats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

double TimingBreakdown::total_hours() const {
  return std::max(bart_embedding_hours, roberta_embedding_hours) + training_hours;
}

RoundsReport summarize_rounds(std::vector<RoundResult> rounds) {
  std::sort(rounds.begin(), rounds.end(),
            [](const RoundResult& a, const RoundResult& b) { return a.round < b.round; });
  RoundsReport report;
  const std::size_t n_metrics = metric_names().size();
  std::vector<std::vector<double>> columns(n_metrics);
  std::vector<double> hours;
  for (const auto& r : rounds) {
    const auto values = metric_values(r.metrics);
    for (std::size_t k = 0; k < n_metrics; ++k) columns[k].push_back(values[k]);
    hours.push_back(r.seconds / 3600.0);
  }
  for (const auto& col : columns) report.metrics.push_back(summarize(col));
  report.hours = summarize(hours);
  report.rounds = std::move(rounds);
  return report;
}

namespace {

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

}  // namespace

RoundsReport run_rounds(const TrainConfig& cfg, const ModelConfig& model_cfg,
                        const EmbeddingDataset& data,
                        const std::function<void(const RoundResult&)>& on_round) {
  check(cfg);
  check(model_cfg);
  check_data(model_cfg, data);

  const std::size_t n = static_cast<std::size_t>(cfg.rounds);
  std::vector<RoundResult> results(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto run_one = [&](std::size_t r) {
    const auto start = Clock::now();
    TrainConfig round_cfg = cfg;
    round_cfg.seed = cfg.same_seed_every_round ? cfg.seed : cfg.seed + r;
    SeededRng split_rng = SeededRng(round_cfg.seed).fork(10);
    const auto split = stratified_split(data.labels, split_rng, cfg.split);
    auto trained = train(round_cfg, model_cfg, data, split);
    const auto eval = evaluate(trained.model, data, split.test);
    RoundResult res{static_cast<int>(r), round_cfg.seed, eval.metrics,
                    static_cast<int>(trained.history.size()), trained.best_epoch,
                    seconds_since(start)};
    results[r] = res;
    if (on_round) {
      std::lock_guard lock(report_mutex);
      on_round(res);
    }
  };
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < n;) {
      try {
        run_one(r);
      } catch (...) {
        failures[r] = std::current_exception();
      }
    }
  };

  const unsigned workers = worker_count(cfg.threads, n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return summarize_rounds(std::move(results));
}

std::string format_rounds_report(const RoundsReport& report) {
  std::ostringstream os;
  const auto& names = metric_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    os << names[k];
    for (std::size_t pad = names[k].size(); pad < 17; ++pad) os << ' ';
    os << format_mean_std(report.metrics.at(k).mean, report.metrics.at(k).std) << '\n';
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", report.hours.mean, report.hours.std);
  os << "hours            " << buf << '\n';
  os << "rounds           " << report.rounds.size() << '\n';
  return os.str();
}

std::string rounds_csv(const RoundsReport& report) {
  std::ostringstream os;
  os << "round,seed";
  for (const auto& name : metric_names()) os << ',' << name;
  os << ",epochs,best_epoch,hours\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : report.rounds) {
    os << r.round << ',' << r.seed;
    for (double v : metric_values(r.metrics)) os << ',' << num(v);
    os << ',' << r.epochs_run << ',' << r.best_epoch << ',' << num(r.seconds / 3600.0) << '\n';
  }
  os << "mean,";
  for (const auto& s : report.metrics) os << ',' << num(s.mean);
  os << ",,," << num(report.hours.mean) << '\n';
  os << "std,";
  for (const auto& s : report.metrics) os << ',' << num(s.std);
  os << ",,," << num(report.hours.std) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

ModelConfig grid_point(const ModelConfig& base, std::size_t units, int bart, int roberta,
                       int ensemble, CellType cell) {
  ModelConfig cfg = base;
  auto set = [&](BranchConfig& b, int depth) {
    b.cell = cell;
    b.depth = depth;
    b.units = units;
    b.conv_kernel = std::min(b.conv_kernel, b.recurrent_width() / 2);
  };
  set(cfg.bart, bart);
  set(cfg.roberta, roberta);
  set(cfg.ensemble, ensemble);
  return cfg;
}

}  // namespace

std::vector<ModelConfig> ablation_grid(const ModelConfig& base) {
  std::vector<ModelConfig> grid;
  for (std::size_t units : {32, 64, 128}) {
    for (int b = 1; b <= 3; ++b) {
      for (int r = 1; r <= 3; ++r) {
        for (int e = 1; e <= 3; ++e) {
          for (CellType cell : {CellType::lstm, CellType::bilstm}) {
            grid.push_back(grid_point(base, units, b, r, e, cell));
          }
        }
      }
    }
  }
  return grid;
}

std::vector<ModelConfig> smoke_grid(const ModelConfig& base) {
  std::vector<ModelConfig> grid;
  for (auto [b, r, e] : {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{3, 3, 3}}) {
    for (CellType cell : {CellType::lstm, CellType::bilstm}) {
      grid.push_back(grid_point(base, 32, b, r, e, cell));
    }
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const std::vector<ModelConfig>& configs,
                                      const TrainConfig& cfg, const EmbeddingDataset& data,
                                      const std::function<void(std::size_t, const AblationRow&)>&
                                          on_row) {
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    rows.push_back({configs[i], run_rounds(cfg, configs[i], data)});
    if (on_row) on_row(i, rows.back());
  }
  return rows;
}

namespace {

std::string depth_label(int depth) { return std::to_string(depth) + "x[Bi]LSTM"; }

std::string pad(std::string s, std::size_t width) {
  // "±" is two bytes in UTF-8 but one column.
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
  if (cols < width) s.append(width - cols, ' ');
  return s;
}

}  // namespace

std::string format_ablation_report(const std::vector<AblationRow>& rows) {
  using Key = std::tuple<std::size_t, int, int, int>;
  std::map<Key, std::pair<const AblationRow*, const AblationRow*>> table;
  std::vector<Key> order;
  for (const auto& row : rows) {
    const auto& c = row.config;
    Key key{c.bart.units, c.bart.depth, c.roberta.depth, c.ensemble.depth};
    auto [it, inserted] = table.try_emplace(key);
    if (inserted) order.push_back(key);
    (c.bart.cell == CellType::lstm ? it->second.first : it->second.second) = &row;
  }

  const std::size_t cell_w = 16;
  const std::vector<std::string> cols{"Accuracy",     "Precision Micro", "Precision Macro",
                                      "Recall Micro", "Recall Macro",    "Time (Hours)"};
  auto cells = [&](const AblationRow* row) {
    std::string out;
    if (!row) {
      for (std::size_t k = 0; k < cols.size(); ++k) out += pad("-", cell_w);
      return out;
    }
    for (const auto& s : row->report.metrics) out += pad(format_mean_std(s.mean, s.std), cell_w);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", row->report.hours.mean, row->report.hours.std);
    return out + pad(buf, cell_w);
  };

  std::ostringstream os;
  std::size_t current_units = 0;
  for (const auto& key : order) {
    const auto [units, b, r, e] = key;
    if (units != current_units) {
      current_units = units;
      if (os.tellp() > 0) os << '\n';
      os << pad(std::to_string(units) + " Units/Layer", 36) << pad("LSTM Cells", cell_w * 6)
         << "BiLSTM Cells\n";
      os << pad("BART", 12) << pad("RoBERTa", 12) << pad("Ensemble", 12);
      for (int half = 0; half < 2; ++half) {
        for (const auto& c : cols) os << pad(c, cell_w);
      }
      os << '\n';
    }
    const auto& [lstm, bilstm] = table.at(key);
    os << pad(depth_label(b), 12) << pad(depth_label(r), 12) << pad(depth_label(e), 12)
       << cells(lstm) << cells(bilstm) << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "units,cell,bart_depth,roberta_depth,ensemble_depth";
  for (const auto& name : metric_names()) os << ',' << name << "_mean," << name << "_std";
  os << ",hours_mean,hours_std\n";
  char buf[64];
  for (const auto& row : rows) {
    const auto& c = row.config;
    os << c.bart.units << ',' << to_string(c.bart.cell) << ',' << c.bart.depth << ','
       << c.roberta.depth << ',' << c.ensemble.depth;
    for (const auto& s : row.report.metrics) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f", s.mean, s.std);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", row.report.hours.mean, row.report.hours.std);
    os << buf;
  }
  return os.str();
}

#define MRB_INSTANTIATE(T)                                                                   \
  template double cross_entropy(std::span<const T>, std::size_t);                            \
  template double mean_cross_entropy(const BasicTensor<T>&, std::span<const std::size_t>);   \
  template BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>&,                    \
                                                   std::span<const std::size_t>);            \
  template void adam_step(AdamState<T>&, const std::vector<BasicTensor<T>*>&,                \
                          const std::vector<const BasicTensor<T>*>&, double);                \
  template void sgd_step(const std::vector<BasicTensor<T>*>&,                                \
                         const std::vector<const BasicTensor<T>*>&, double);                 \
  template std::vector<BasicTensor<T>*> tensor_ptrs(ModelParams<T>&);                        \
  template std::vector<const BasicTensor<T>*> tensor_ptrs(const ModelParams<T>&);

MRB_INSTANTIATE(float)
MRB_INSTANTIATE(double)
#undef MRB_INSTANTIATE

}  // namespace mrb
