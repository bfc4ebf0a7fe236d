#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "mail/network.hpp"

namespace mail {

struct SgdConfig {
  double lr = 0.001;
  double momentum = 0.9;
};

/// SGD with heavy-ball momentum: v <- mu v + g; p <- p - lr v. Tensors that
/// do not require a gradient, or received none, are left untouched.
class Sgd {
 public:
  Sgd(std::vector<NamedTensor> params, SgdConfig config);

  /// Throws NumericError naming the first parameter with a non-finite gradient.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<NamedTensor>& params() const { return params_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdConfig config_;
};

struct PlateauConfig {
  double factor = 0.1;
  std::size_t patience = 10;
  double threshold = 1e-4;  // relative improvement required
  double min_lr = 1e-6;
};

/// Reduces the learning rate when the monitored loss stops improving.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig config = {});

  /// Feeds one epoch's monitored metric and returns the learning rate to use next.
  double step(double metric);
  double lr() const { return lr_; }
  std::size_t bad_epochs() const { return bad_; }

 private:
  PlateauConfig config_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

}  // namespace mail
