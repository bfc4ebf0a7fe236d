#pragma once

// Central finite-difference verification of the analytic gradients of every
// block. The probe loss is sum(out * R) with a fixed random R.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mail/tensor.hpp"

namespace mail {

struct GradcheckOptions {
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Entries probed per tensor; smaller tensors are probed completely.
  std::size_t samples_per_tensor = 24;
  /// Block whose analytic gradient is scaled by 1.5 before comparison.
  std::string corrupt;
};

struct GradcheckResult {
  std::string block;
  double max_rel_error = 0.0;  // worst tensor, norm-wise
  std::size_t entries = 0;     // probed entries
  bool passed = false;
};

/// Names accepted by gradcheck_block, in suite order.
const std::vector<std::string>& gradcheck_blocks();

/// Compares analytic and numeric gradients of sum_k sum(outputs_k * R_k)
/// with respect to every leaf.
GradcheckResult check_gradients(const std::string& name, const std::vector<Tensor>& leaves,
                                const std::function<std::vector<Tensor>()>& fn, const GradcheckOptions& opts);

GradcheckResult gradcheck_block(const std::string& name, const GradcheckOptions& opts);
std::vector<GradcheckResult> gradcheck_suite(const GradcheckOptions& opts);

}  // namespace mail
