#include <cmath>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

using detail::Node;

void BatchNormState::reset(std::size_t channels) {
  running_mean.assign(channels, 0.0);
  running_var.assign(channels, 1.0);
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training) {
  if (input.rank() != 4) {
    throw DimensionError("batchnorm expects a rank-4 (B,C,H,W) tensor, got " + shape_str(input.shape()));
  }
  const auto& s = input.shape();
  const std::size_t batch = s[0], c = s[1], area = s[2] * s[3];
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("batchnorm scale/shift must have " + std::to_string(c) + " entries");
  }
  if (!training && !state.initialized()) {
    throw StateError("batchnorm in evaluation mode with uninitialized running statistics");
  }
  if (state.initialized() && state.running_mean.size() != c) {
    throw DimensionError("batchnorm running statistics sized for " + std::to_string(state.running_mean.size()) +
                         " channels, input has " + std::to_string(c));
  }
  const auto x = input.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  const double count = static_cast<double>(batch * area);

  std::vector<double> mu(c), inv_std(c);
  if (training) {
    if (!state.initialized()) state.reset(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = x.data() + (b * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) m += p[i];
      }
      m /= count;
      double var = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = x.data() + (b * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) var += (p[i] - m) * (p[i] - m);
      }
      var /= count;
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * m;
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const double h = (x[base + i] - mu[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = h * gv[ch] + bv[ch];
      }
    }

  return detail::make_result(s, std::move(out), {input, gamma, beta},
                             [input, gamma, beta, training, batch, c, area, count, inv_std = std::move(inv_std),
                              xhat = std::move(xhat)](Node& self) {
    const auto& g = self.grad;
    auto* ng = gamma.node().get();
    auto* nb = beta.node().get();
    auto* nx = input.node().get();
    std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) {
          sum_g[ch] += g[base + i];
          sum_gx[ch] += g[base + i] * xhat[base + i];
        }
      }
    if (ng->requires_grad) {
      auto& gg = ng->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
    }
    if (nb->requires_grad) {
      auto& gb = nb->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
    }
    if (!nx->requires_grad) return;
    auto& gx = nx->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * area;
        const double gam = ng->value[ch];
        for (std::size_t i = 0; i < area; ++i) {
          if (training) {
            gx[base + i] += gam * inv_std[ch] *
                            (g[base + i] - sum_g[ch] / count - xhat[base + i] * sum_gx[ch] / count);
          } else {
            gx[base + i] += gam * inv_std[ch] * g[base + i];
          }
        }
      }
  });
}

}  // namespace mail
