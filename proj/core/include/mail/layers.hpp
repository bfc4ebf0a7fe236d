#pragma once

// Parameterised layers shared by every block: convolutions that can carry a
// frozen random-projection bank, batch normalization and fully connected
// layers. Layers expose their state through visit() so that optimizers,
// checkpoints and cost accounting walk one consistent naming scheme.

#include <cstdint>
#include <string>
#include <vector>

#include "mail/ops.hpp"
#include "mail/rng.hpp"
#include "mail/tensor.hpp"

namespace mail {

class NoiseSource;
class CostRecorder;

/// Attack-phase [A] and inference-phase [I] instantiations of the stochastic
/// elements.
enum class Phase { Attack, Inference };

struct ForwardContext {
  bool training = false;
  Phase phase = Phase::Inference;
  NoiseSource* noise = nullptr;  // null: injection sites see eta == 1
  CostRecorder* cost = nullptr;  // non-null during MAC accounting
};

/// Walks learnable parameters and persistent state.
class Visitor {
 public:
  virtual ~Visitor() = default;
  virtual void parameter(const std::string& name, Tensor& t) = 0;
  virtual void buffer(const std::string& name, Tensor& t) { (void)name, (void)t; }
  virtual void buffer(const std::string& name, std::vector<double>& v) { (void)name, (void)v; }
};

std::string join_name(const std::string& prefix, const std::string& leaf);

/// Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Convolution whose first `n_random` output filters may be frozen random
/// projection filters. Attack and inference phases hold independent banks.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const ConvSpec& spec, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  const ConvSpec& spec() const { return spec_; }
  std::size_t fan_in() const { return spec_.in_channels / spec_.groups * spec_.kernel_h * spec_.kernel_w; }
  std::size_t filter_count() const { return spec_.out_channels; }
  std::size_t random_count() const { return n_random_; }
  double rpf_sigma() const { return sigma_; }

  /// Trainable filters (rows n_random..N-1 of the full weight).
  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }
  Tensor& bank(Phase phase) { return phase == Phase::Attack ? bank_attack_ : bank_inference_; }
  const Tensor& bank(Phase phase) const { return phase == Phase::Attack ? bank_attack_ : bank_inference_; }

  /// Converts the leading `n_random` filters to frozen random projections drawn
  /// N(0, sigma^2) for both phases. Throws ConfigError when n_random > N.
  void enable_rpf(std::size_t n_random, double sigma, Rng& rng);
  void resample(Phase phase, Rng& rng);

  /// Full [N, C/g, kh, kw] weight for the given phase.
  Tensor full_weight(Phase phase) const;

  void visit(const std::string& prefix, Visitor& v);

 private:
  ConvSpec spec_;
  Tensor weight_;
  Tensor bank_attack_;
  Tensor bank_inference_;
  std::size_t n_random_ = 0;
  double sigma_ = 0.0;
};

/// Draws an [n, ...] filter bank i.i.d. N(0, sigma^2).
Tensor sample_rpf(const Shape& filter_shape, std::size_t n_random, double sigma, Rng& rng);

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void visit(const std::string& prefix, Visitor& v);

  Tensor gamma;
  Tensor beta;
  BatchNormState state;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void visit(const std::string& prefix, Visitor& v);

  Tensor weight;
  Tensor bias;
};

}  // namespace mail
