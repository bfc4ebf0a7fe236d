#include "mail/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mail/errors.hpp"

namespace mail {

Sgd::Sgd(std::vector<NamedTensor> params, SgdConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw ConfigError("sgd learning rate must be positive");
  if (config_.momentum < 0.0 || config_.momentum >= 1.0) throw ConfigError("sgd momentum must lie in [0, 1)");
  velocity_.resize(params_.size());
}

void Sgd::step() {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.requires_grad() || !t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    if (config_.momentum == 0.0) {
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= config_.lr * g[k];
      continue;
    }
    auto& v = velocity_[i];
    if (v.empty()) v.assign(w.size(), 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = config_.momentum * v[k] + g[k];
      w[k] -= config_.lr * v[k];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig config) : config_(config), lr_(initial_lr) {
  if (!(config_.factor > 0.0 && config_.factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (config_.min_lr < 0.0) throw ConfigError("plateau min_lr must be non-negative");
}

double PlateauScheduler::step(double metric) {
  if (metric < best_ * (1.0 - config_.threshold) || std::isinf(best_)) {
    best_ = metric;
    bad_ = 0;
  } else if (++bad_ > config_.patience) {
    lr_ = std::max(lr_ * config_.factor, config_.min_lr);
    bad_ = 0;
  }
  return lr_;
}

}  // namespace mail
