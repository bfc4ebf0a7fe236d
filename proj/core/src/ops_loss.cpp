#include <algorithm>
#include <cmath>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

std::vector<double> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows expects [B,K], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  const auto v = logits.data();
  std::vector<double> p(v.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = v.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[b * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[b * k + j] /= z;
  }
  return p;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects logits [B,K], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  if (batch == 0) throw DimensionError("cross_entropy on an empty batch");
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k) {
      throw DataError("label " + std::to_string(labels[b]) + " at position " + std::to_string(b) +
                      " outside [0," + std::to_string(k) + ")");
    }
  }
  const auto v = logits.data();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = v.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    loss += (mx + std::log(z)) - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  return detail::make_result({1}, {loss}, {logits}, [logits, labels, batch, k](detail::Node& self) {
    auto p = softmax_rows(logits);
    auto& g = logits.node()->grad_buffer();
    const double scale = self.grad[0] / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < k; ++j) {
        const double target = static_cast<int>(j) == labels[b] ? 1.0 : 0.0;
        g[b * k + j] += scale * (p[b * k + j] - target);
      }
  });
}

}  // namespace mail
