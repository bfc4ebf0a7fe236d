#include "mail/noise.hpp"

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

NoiseSource::NoiseSource(std::uint64_t seed, double stddev, NoiseMode mode)
    : rng_(seed), stddev_(stddev), mode_(mode) {
  if (stddev < 0.0) throw ConfigError("noise stddev must be non-negative");
}

void NoiseSource::reseed(std::uint64_t seed) {
  rng_ = Rng(seed);
  frozen_.clear();
}

Tensor NoiseSource::draw(const std::string& site, const Shape& shape) {
  switch (mode_) {
    case NoiseMode::Degenerate:
      return Tensor::full(shape, 1.0);
    case NoiseMode::Fresh:
      return Tensor::from(shape, rng_.normal_vector(shape_numel(shape), 1.0, stddev_));
    case NoiseMode::Frozen: {
      auto it = frozen_.find(site);
      if (it == frozen_.end() || it->second.shape() != shape) {
        it = frozen_.insert_or_assign(site, Tensor::from(shape, rng_.normal_vector(shape_numel(shape), 1.0, stddev_)))
                 .first;
      }
      return it->second;
    }
  }
  throw StateError("unknown noise mode");
}

Tensor man_noise(const Tensor& delta, const Tensor& eta) {
  if (delta.rank() != 4 || eta.rank() != 4 || delta.dim(1) != eta.dim(1)) {
    throw DimensionError("man_noise: delta " + shape_str(delta.shape()) + " and eta " + shape_str(eta.shape()) +
                         " must share the channel axis");
  }
  return mul(eta, add(delta, mul(eta, delta)));
}

ManSite::ManSite(std::string site_key, std::size_t channels, double init)
    : key(std::move(site_key)), delta(Tensor::full({1, channels, 1, 1}, init, true)) {}

Tensor ManSite::eta(std::size_t batch, const ForwardContext& ctx) const {
  if (!enabled()) return {};
  const Shape shape{batch, delta.dim(1), 1, 1};
  Tensor draw = ctx.noise ? ctx.noise->draw(key, shape) : Tensor::full(shape, 1.0);
  return man_noise(delta, draw);
}

void ManSite::visit(const std::string& prefix, Visitor& v) {
  if (enabled()) v.parameter(join_name(prefix, "delta"), delta);
}

}  // namespace mail
