#pragma once

// Accuracy and micro/macro precision and recall from a confusion matrix.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mrb {

/// counts[t * n + p]: rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t n = 0) : n_classes(n), counts(n * n, 0) {}

  std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * n_classes + p]; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * n_classes + p]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;

  /// Elementwise sum; sizes must agree.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws DataError on length mismatch or a label outside [0, n_classes).
ConfusionMatrix confusion(const std::vector<std::size_t>& truth,
                          const std::vector<std::size_t>& predicted, std::size_t n_classes);

struct MetricsReport {
  double accuracy = 0.0;
  double precision_micro = 0.0;
  double precision_macro = 0.0;
  double recall_micro = 0.0;
  double recall_macro = 0.0;
};

/// Per-class precision or recall with a zero denominator counts as 0 in the
/// macro average. Throws DataError on an empty matrix.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

/// Column order used by every emitter.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"accuracy", "precision_micro", "precision_macro",
                                              "recall_micro", "recall_macro"};
  return names;
}
std::vector<double> metric_values(const MetricsReport& r);

/// 0.925 -> "92.50".
std::string format_percent(double fraction);
/// (0.9250, 0.0026) -> "92.50 ± 0.26".
std::string format_mean_std(double mean, double std);

std::string format_report(const MetricsReport& r);
std::string report_csv(const MetricsReport& r);

}  // namespace mrb
