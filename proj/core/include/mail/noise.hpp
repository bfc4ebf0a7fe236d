#pragma once

// Modulated attention noise: eta_I = eta_l * (delta_l + eta_l * delta_l),
// with eta_l a fresh Gaussian draw and delta_l learnable channel weights.

#include <cstdint>
#include <map>
#include <string>

#include "mail/layers.hpp"
#include "mail/rng.hpp"
#include "mail/tensor.hpp"

namespace mail {

enum class NoiseMode {
  Degenerate,  // eta_l == 1 everywhere
  Fresh,       // new draw per call
  Frozen,      // first draw per site is replayed (finite-difference checks)
};

/// Supplies eta_l draws for every injection site of a model.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, double stddev, NoiseMode mode = NoiseMode::Fresh);

  /// eta_l with the requested shape, distributed N(1, stddev^2).
  Tensor draw(const std::string& site, const Shape& shape);

  NoiseMode mode() const { return mode_; }
  void set_mode(NoiseMode mode) { mode_ = mode; }
  void reseed(std::uint64_t seed);
  double stddev() const { return stddev_; }

 private:
  Rng rng_;
  double stddev_;
  NoiseMode mode_;
  std::map<std::string, Tensor> frozen_;
};

/// eta_I for learnable weights delta [1,C,1,1] and a draw eta [B,C,1,1].
Tensor man_noise(const Tensor& delta, const Tensor& eta);

/// A single injection site with its learnable channel weights.
struct ManSite {
  ManSite() = default;
  ManSite(std::string key, std::size_t channels, double init = 0.5);

  bool enabled() const { return delta.defined(); }
  /// eta_I for a batch, or an undefined tensor when the site is disabled.
  /// Without a noise source the draw degenerates to eta_l == 1.
  Tensor eta(std::size_t batch, const ForwardContext& ctx) const;
  void visit(const std::string& prefix, Visitor& v);

  std::string key;
  Tensor delta;
};

}  // namespace mail
