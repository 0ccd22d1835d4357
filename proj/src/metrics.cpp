#include "mrb/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mrb/errors.hpp"

namespace mrb {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < n_classes; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes) {
    throw DimensionError("cannot merge confusion matrices of " + std::to_string(n_classes) +
                         " and " + std::to_string(other.n_classes) + " classes");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& predicted, std::size_t n_classes) {
  if (truth.size() != predicted.size()) {
    throw DataError("confusion: " + std::to_string(truth.size()) + " true labels but " +
                    std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes) {
      throw DataError("confusion: label pair (" + std::to_string(truth[i]) + ", " +
                      std::to_string(predicted[i]) + ") at index " + std::to_string(i) +
                      " outside [0," + std::to_string(n_classes) + ")");
    }
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (cm.n_classes == 0 || total == 0) throw DataError("metrics: confusion matrix is empty");
  const std::size_t n = cm.n_classes;

  // Micro averages pool TP/FP/FN as integers so the single-label identity
  // (every miss is one FP and one FN) holds bit for bit.
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t col = 0, row = 0;
    for (std::size_t k = 0; k < n; ++k) {
      col += cm.at(k, c);
      row += cm.at(c, k);
    }
    const std::uint64_t tpc = cm.at(c, c);
    tp += tpc;
    fp += col - tpc;
    fn += row - tpc;
    if (col) precision_sum += static_cast<double>(tpc) / static_cast<double>(col);
    if (row) recall_sum += static_cast<double>(tpc) / static_cast<double>(row);
  }
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  r.precision_micro = static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall_micro = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.precision_macro = precision_sum / static_cast<double>(n);
  r.recall_macro = recall_sum / static_cast<double>(n);
  return r;
}

std::vector<double> metric_values(const MetricsReport& r) {
  return {r.accuracy, r.precision_micro, r.precision_macro, r.recall_micro, r.recall_macro};
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

std::string format_mean_std(double mean, double std) {
  return format_percent(mean) + " ± " + format_percent(std);
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  const auto& names = metric_names();
  const auto values = metric_values(r);
  for (std::size_t i = 0; i < names.size(); ++i) {
    os << names[i];
    for (std::size_t pad = names[i].size(); pad < 17; ++pad) os << ' ';
    os << format_percent(values[i]) << '\n';
  }
  return os.str();
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream os;
  const auto& names = metric_names();
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
  os << '\n';
  const auto values = metric_values(r);
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", values[i]);
    os << (i ? "," : "") << buf;
  }
  os << '\n';
  return os.str();
}

}  // namespace mrb
