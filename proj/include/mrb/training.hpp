#pragma once

// Loss, optimizers, stratified splitting, the train/early-stop loop, repeated
// rounds, and the ablation grid.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrb/data_io.hpp"
#include "mrb/metrics.hpp"
#include "mrb/model.hpp"

namespace mrb {

enum class Optimizer { adam, sgd };
std::string to_string(Optimizer opt);

struct SplitRatios {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

struct TrainConfig {
  int max_epochs = 10;
  int patience = 5;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  int rounds = 10;
  /// Every round reuses `seed` instead of seed + round.
  bool same_seed_every_round = false;
  SplitRatios split{};
  /// Worker threads for rounds/ablation; 0 picks hardware concurrency.
  unsigned threads = 0;
};

std::vector<std::string> validate(const TrainConfig& cfg);
void check(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   std::vector<std::string>* errors = nullptr);

// ---------------------------------------------------------------------------
// Loss

/// -ln(max(probs[y], 1e-12)). Throws DataError when y is out of range.
template <typename T>
double cross_entropy(std::span<const T> probs, std::size_t y);

/// Mean over the rows of a (B, n) probability batch.
template <typename T>
double mean_cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels);

/// (probs - onehot) / B, the logit gradient of the mean loss.
template <typename T>
BasicTensor<T> cross_entropy_logit_grad(const BasicTensor<T>& probs,
                                        std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// Optimizers

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
};

/// Moments are created lazily on the first call. Throws DimensionError when
/// a gradient's shape differs from its parameter's.
template <typename T>
void adam_step(AdamState<T>& state, const std::vector<BasicTensor<T>*>& params,
               const std::vector<const BasicTensor<T>*>& grads, double lr);

template <typename T>
void sgd_step(const std::vector<BasicTensor<T>*>& params,
              const std::vector<const BasicTensor<T>*>& grads, double lr);

template <typename T>
std::vector<BasicTensor<T>*> tensor_ptrs(ModelParams<T>& p);
template <typename T>
std::vector<const BasicTensor<T>*> tensor_ptrs(const ModelParams<T>& p);

// ---------------------------------------------------------------------------
// Splitting

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Per class: shuffle, then take round(n*validation) (at least 1) for
/// validation, round(n*test) (at least 1) for test, the rest for training.
/// Throws DataError when a class has fewer than 3 samples.
SplitIndices stratified_split(const std::vector<std::size_t>& labels, SeededRng& rng,
                              const SplitRatios& ratios = {});

// ---------------------------------------------------------------------------
// Training

/// Tracks the best validation loss. A loss counts as an improvement only
/// when strictly lower than the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records the loss of the next epoch; returns true when training should stop.
  bool update(double val_loss);

  bool last_improved() const { return last_improved_; }
  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int stale_epochs() const { return stale_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  bool last_improved_ = false;
  double best_loss_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model<float> model;  // weights from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Throws DimensionError when the dataset dims differ from the model's,
/// DataError on an empty split, NumericError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const EmbeddingDataset& data, const SplitIndices& split,
                  const EpochCallback& on_epoch = {});

/// Mean eval-mode cross-entropy over the given records.
double evaluate_loss(const Model<float>& model, const EmbeddingDataset& data,
                     const std::vector<std::size_t>& indices, std::size_t batch_size = 256);

struct EvalResult {
  ConfusionMatrix confusion;
  MetricsReport metrics;
  std::vector<std::size_t> predictions;
  double loss = 0.0;
};

EvalResult evaluate(const Model<float>& model, const EmbeddingDataset& data,
                    const std::vector<std::size_t>& indices, std::size_t batch_size = 256);

std::vector<std::size_t> all_indices(const EmbeddingDataset& data);

std::string history_csv(const std::vector<EpochRecord>& history);

// ---------------------------------------------------------------------------
// Rounds

struct Stats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
Stats summarize(const std::vector<double>& values);

/// Time accounting in hours. The two embedding passes are independent, so
/// the total charges the slower one plus training.
struct TimingBreakdown {
  double bart_embedding_hours = 0.0;
  double roberta_embedding_hours = 0.0;
  double training_hours = 0.0;
  double total_hours() const;
};

struct RoundResult {
  int round = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  int epochs_run = 0;
  int best_epoch = 0;
  double seconds = 0.0;
};

struct RoundsReport {
  std::vector<RoundResult> rounds;  // ordered by round index
  std::vector<Stats> metrics;       // metric_names() order
  Stats hours;
};

RoundsReport summarize_rounds(std::vector<RoundResult> rounds);

/// Round r re-splits and trains with seed cfg.seed + r and evaluates on its
/// test split. Rounds run on up to cfg.threads workers.
RoundsReport run_rounds(const TrainConfig& cfg, const ModelConfig& model_cfg,
                        const EmbeddingDataset& data,
                        const std::function<void(const RoundResult&)>& on_round = {});

/// One line per metric in "xx.xx ± y.yy" form, plus execution hours.
std::string format_rounds_report(const RoundsReport& report);
/// Per-round rows followed by mean and std rows.
std::string rounds_csv(const RoundsReport& report);

// ---------------------------------------------------------------------------
// Ablation

/// The 162-point grid: units {32,64,128} outermost, then BART depth, RoBERTa
/// depth, ensemble depth (each 1..3), then cell type (LSTM before BiLSTM).
/// Each branch's conv kernel is clamped to half its recurrent width so that
/// the pooled map is never empty; everything else comes from `base`.
std::vector<ModelConfig> ablation_grid(const ModelConfig& base = {});

/// Depth triples (1,1,1), (2,1,1) and (3,3,3) with both cell types at 32 units.
std::vector<ModelConfig> smoke_grid(const ModelConfig& base = {});

struct AblationRow {
  ModelConfig config;
  RoundsReport report;
};

/// Configs are trained one after another; each one's rounds use the
/// thread pool of run_rounds.
std::vector<AblationRow> run_ablation(const std::vector<ModelConfig>& configs,
                                      const TrainConfig& cfg, const EmbeddingDataset& data,
                                      const std::function<void(std::size_t, const AblationRow&)>&
                                          on_row = {});

/// Blocks per unit count; rows are depth triples; LSTM and BiLSTM side by side.
std::string format_ablation_report(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace mrb
