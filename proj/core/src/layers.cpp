#include "mail/layers.hpp"

#include <cmath>

#include "mail/cost.hpp"
#include "mail/errors.hpp"

namespace mail {

std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor sample_rpf(const Shape& filter_shape, std::size_t n_random, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("random projection filter std must be positive");
  Shape s = filter_shape;
  s[0] = n_random;
  return Tensor::from(s, rng.normal_vector(shape_numel(s), 0.0, sigma), false);
}

Conv2d::Conv2d(const ConvSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  weight_ = init_uniform(spec_.weight_shape(), fan_in(), rng);
}

void Conv2d::enable_rpf(std::size_t n_random, double sigma, Rng& rng) {
  if (n_random > spec_.out_channels) {
    throw ConfigError("random filter count " + std::to_string(n_random) + " exceeds filter count " +
                      std::to_string(spec_.out_channels));
  }
  if (!(sigma > 0.0)) throw ConfigError("random projection filter std must be positive");
  n_random_ = n_random;
  sigma_ = sigma;
  Shape trainable = spec_.weight_shape();
  trainable[0] -= n_random;
  // Keep the trailing filters of the existing initialization trainable.
  const std::size_t per = shape_numel(spec_.weight_shape()) / spec_.out_channels;
  std::vector<double> rows(weight_.data().begin() + static_cast<std::ptrdiff_t>(n_random * per),
                           weight_.data().end());
  weight_ = Tensor::from(trainable, std::move(rows), true);
  resample(Phase::Attack, rng);
  resample(Phase::Inference, rng);
}

void Conv2d::resample(Phase phase, Rng& rng) {
  if (n_random_ == 0) return;
  bank(phase) = sample_rpf(spec_.weight_shape(), n_random_, sigma_, rng);
}

Tensor Conv2d::full_weight(Phase phase) const {
  if (n_random_ == 0) return weight_;
  const Tensor& b = bank(phase);
  if (!b.defined()) throw StateError("random projection bank missing for the requested phase");
  if (n_random_ == spec_.out_channels) return b;
  return concat0({b, weight_});
}

Tensor Conv2d::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor out = conv2d(x, full_weight(ctx.phase), spec_);
  if (ctx.cost) {
    const auto& s = out.shape();
    ctx.cost->add_macs(static_cast<std::uint64_t>(s[2] * s[3] * spec_.kernel_h * spec_.kernel_w *
                                                  (spec_.in_channels / spec_.groups) * spec_.out_channels));
  }
  return out;
}

void Conv2d::visit(const std::string& prefix, Visitor& v) {
  if (weight_.numel() > 0) v.parameter(join_name(prefix, "weight"), weight_);
  if (n_random_ > 0) {
    v.buffer(join_name(prefix, "rpf_attack"), bank_attack_);
    v.buffer(join_name(prefix, "rpf_inference"), bank_inference_);
  }
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0, true)), beta(Tensor::full({channels}, 0.0, true)) {
  state.reset(channels);
}

Tensor BatchNorm2d::forward(const Tensor& x, const ForwardContext& ctx) {
  return batchnorm(x, gamma, beta, state, ctx.training);
}

void BatchNorm2d::visit(const std::string& prefix, Visitor& v) {
  v.parameter(join_name(prefix, "gamma"), gamma);
  v.parameter(join_name(prefix, "beta"), beta);
  v.buffer(join_name(prefix, "running_mean"), state.running_mean);
  v.buffer(join_name(prefix, "running_var"), state.running_var);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  weight = init_uniform({out, in}, in, rng);
  if (with_bias) bias = init_uniform({out}, in, rng);
}

Tensor Linear::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (ctx.cost) ctx.cost->add_macs(static_cast<std::uint64_t>(weight.dim(0) * weight.dim(1)));
  return linear(x, weight, bias);
}

void Linear::visit(const std::string& prefix, Visitor& v) {
  v.parameter(join_name(prefix, "weight"), weight);
  if (bias.defined()) v.parameter(join_name(prefix, "bias"), bias);
}

}  // namespace mail
