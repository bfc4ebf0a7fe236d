#include "mail/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

std::vector<int> argmax_rows(const std::vector<double>& scores, std::size_t classes) {
  if (classes == 0 || scores.size() % classes != 0) throw DimensionError("argmax_rows: scores not a multiple of K");
  std::vector<int> out(scores.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = scores.data() + i * classes;
    out[i] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

namespace {

// P(score_pos > score_neg) + 0.5 P(tie) via average ranks.
double binary_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  const std::size_t n = s.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && s[order[j + 1]] == s[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rsum = 0.0, np = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pos[i]) rsum += rank[i], np += 1.0;
  }
  const double nn = static_cast<double>(n) - np;
  return (rsum - np * (np + 1.0) / 2.0) / (np * nn);
}

void check_inputs(const std::vector<double>& scores, std::size_t classes, const std::vector<int>& labels) {
  if (labels.empty()) throw DataError("metrics need at least one sample");
  if (classes == 0 || scores.size() != labels.size() * classes) {
    throw DimensionError("metrics: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " samples and " + std::to_string(classes) + " classes");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DataError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

double macro_auc(const std::vector<double>& scores, std::size_t classes, const std::vector<int>& labels) {
  check_inputs(scores, classes, labels);
  std::vector<std::size_t> count(classes, 0);
  for (int y : labels) ++count[static_cast<std::size_t>(y)];
  const auto present = std::count_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) throw UndefinedMetricError("AUC is undefined with fewer than two classes present");
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> s(labels.size());
  std::vector<bool> pos(labels.size());
  for (std::size_t k = 0; k < classes; ++k) {
    if (count[k] == 0) continue;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores[i * classes + k];
      pos[i] = static_cast<std::size_t>(labels[i]) == k;
    }
    total += binary_auc(s, pos);
    ++used;
  }
  return total / static_cast<double>(used);
}

MetricsReport compute_metrics(const std::vector<double>& scores, std::size_t classes, const std::vector<int>& labels) {
  check_inputs(scores, classes, labels);
  MetricsReport r;
  r.classes = classes;
  r.samples = labels.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  const auto pred = argmax_rows(scores, classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])];
    if (pred[i] == labels[i]) ++correct;
  }
  r.acc = static_cast<double>(correct) / static_cast<double>(labels.size());
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.f1.assign(classes, 0.0);
  r.support.assign(classes, 0);
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < classes; ++t) {
      predicted += r.confusion[t][k];
      r.support[k] += r.confusion[k][t];
    }
    const double tp = static_cast<double>(r.confusion[k][k]);
    if (predicted > 0) r.precision[k] = tp / static_cast<double>(predicted);
    if (r.support[k] > 0) r.recall[k] = tp / static_cast<double>(r.support[k]);
    const double denom = r.precision[k] + r.recall[k];
    if (denom > 0.0) r.f1[k] = 2.0 * r.precision[k] * r.recall[k] / denom;
  }
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / static_cast<double>(classes);
  try {
    r.macro_auc = macro_auc(scores, classes, labels);
    r.auc_defined = true;
  } catch (const UndefinedMetricError&) {
    r.auc_defined = false;
  }
  return r;
}

MetricsReport compute_metrics(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("compute_metrics expects logits [N, K]");
  return compute_metrics(softmax_rows(logits), logits.dim(1), labels);
}

}  // namespace mail
