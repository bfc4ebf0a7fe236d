#pragma once

#include <cstddef>
#include <vector>

#include "mail/tensor.hpp"

namespace mail {

struct MetricsReport {
  std::size_t classes = 0;
  std::size_t samples = 0;
  double acc = 0.0;
  double macro_f1 = 0.0;
  double macro_auc = 0.0;
  bool auc_defined = false;  // false when fewer than two classes are present
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Row-wise argmax, first maximum wins.
std::vector<int> argmax_rows(const std::vector<double>& scores, std::size_t classes);

/// Macro one-vs-rest AUC by the mid-rank statistic, averaged over classes
/// that have both positives and negatives. Throws UndefinedMetricError when
/// fewer than two classes occur in `labels`.
double macro_auc(const std::vector<double>& scores, std::size_t classes, const std::vector<int>& labels);

/// `scores` is [N, K] row-major (probabilities or logits).
MetricsReport compute_metrics(const std::vector<double>& scores, std::size_t classes, const std::vector<int>& labels);
MetricsReport compute_metrics(const Tensor& logits, const std::vector<int>& labels);

}  // namespace mail
