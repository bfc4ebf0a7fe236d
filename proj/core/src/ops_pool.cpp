#include <algorithm>
#include <limits>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

using detail::Node;

void require_image(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw DimensionError(std::string(op) + " expects a rank-4 (B,C,H,W) tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor global_pool(const Tensor& input, PoolKind kind) {
  require_image(input, "global_pool");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  if (area == 0) throw DimensionError("global_pool over an empty spatial extent " + shape_str(s));
  const auto v = input.data();
  std::vector<double> out(planes);
  std::vector<std::size_t> arg(kind == PoolKind::Avg ? 0 : planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = v.data() + p * area;
    if (kind == PoolKind::Avg) {
      // Shifted by the first element: exact for constant planes.
      double acc = 0.0;
      for (std::size_t i = 1; i < area; ++i) acc += x[i] - x[0];
      out[p] = x[0] + acc / static_cast<double>(area);
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < area; ++i) {
        if (kind == PoolKind::Max ? x[i] > x[best] : x[i] < x[best]) best = i;
      }
      arg[p] = best;
      out[p] = x[best];
    }
  }
  return detail::make_result({s[0], s[1], 1, 1}, std::move(out), {input},
                             [input, kind, area, arg = std::move(arg)](Node& self) {
    auto& g = input.node()->grad_buffer();
    for (std::size_t p = 0; p < self.grad.size(); ++p) {
      if (kind == PoolKind::Avg) {
        const double share = self.grad[p] / static_cast<double>(area);
        for (std::size_t i = 0; i < area; ++i) g[p * area + i] += share;
      } else {
        g[p * area + arg[p]] += self.grad[p];
      }
    }
  });
}

Tensor local_pool(const Tensor& input, PoolKind kind, std::size_t window, std::size_t stride) {
  require_image(input, "local_pool");
  if (kind == PoolKind::Min) throw ConfigError("local_pool supports avg and max only");
  if (window == 0 || stride == 0) throw ConfigError("local_pool window and stride must be positive");
  const auto& s = input.shape();
  const std::size_t h = s[2], w = s[3];
  if (h < window || w < window) {
    throw DimensionError("local_pool window " + std::to_string(window) + " exceeds spatial extent " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  const std::size_t planes = s[0] * s[1];
  const auto v = input.data();
  std::vector<double> out(planes * ho * wo);
  std::vector<std::size_t> arg(kind == PoolKind::Max ? out.size() : 0);
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = v.data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t o = (p * ho + oy) * wo + ox;
        if (kind == PoolKind::Avg) {
          double acc = 0.0;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) acc += x[(oy * stride + i) * w + ox * stride + j];
          out[o] = acc * inv;
        } else {
          std::size_t best = (oy * stride) * w + ox * stride;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) {
              const std::size_t k = (oy * stride + i) * w + ox * stride + j;
              if (x[k] > x[best]) best = k;
            }
          arg[o] = best;
          out[o] = x[best];
        }
      }
    }
  }
  return detail::make_result({s[0], s[1], ho, wo}, std::move(out), {input},
                             [input, kind, window, stride, h, w, ho, wo, inv, arg = std::move(arg)](Node& self) {
    auto& g = input.node()->grad_buffer();
    const std::size_t planes = self.grad.size() / (ho * wo);
    for (std::size_t p = 0; p < planes; ++p) {
      double* gx = g.data() + p * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const std::size_t o = (p * ho + oy) * wo + ox;
          if (kind == PoolKind::Avg) {
            const double share = self.grad[o] * inv;
            for (std::size_t i = 0; i < window; ++i)
              for (std::size_t j = 0; j < window; ++j) gx[(oy * stride + i) * w + ox * stride + j] += share;
          } else {
            gx[arg[o]] += self.grad[o];
          }
        }
    }
  });
}

Tensor upsample_nearest(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_image(input, "upsample_nearest");
  const auto& s = input.shape();
  const std::size_t h = s[2], w = s[3];
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) {
    throw DimensionError("upsample_nearest with empty extent");
  }
  std::vector<std::size_t> sy(out_h), sx(out_w);
  for (std::size_t y = 0; y < out_h; ++y) sy[y] = y * h / out_h;
  for (std::size_t x = 0; x < out_w; ++x) sx[x] = x * w / out_w;
  const std::size_t planes = s[0] * s[1];
  const auto v = input.data();
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) out[(p * out_h + y) * out_w + x] = v[(p * h + sy[y]) * w + sx[x]];
  return detail::make_result({s[0], s[1], out_h, out_w}, std::move(out), {input},
                             [input, h, w, out_h, out_w, sy = std::move(sy), sx = std::move(sx)](Node& self) {
    auto& g = input.node()->grad_buffer();
    const std::size_t planes = g.size() / (h * w);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) g[(p * h + sy[y]) * w + sx[x]] += self.grad[(p * out_h + y) * out_w + x];
  });
}

std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("channel_shuffle groups " + std::to_string(groups) + " do not divide " +
                      std::to_string(channels) + " channels");
  }
  const std::size_t per = channels / groups;
  std::vector<std::size_t> perm(channels);
  // Input viewed as [groups, per]; output as [per, groups].
  for (std::size_t i = 0; i < per; ++i)
    for (std::size_t gidx = 0; gidx < groups; ++gidx) perm[i * groups + gidx] = gidx * per + i;
  return perm;
}

Tensor channel_shuffle(const Tensor& input, std::size_t groups) {
  require_image(input, "channel_shuffle");
  const auto& s = input.shape();
  auto perm = channel_shuffle_permutation(s[1], groups);
  const std::size_t area = s[2] * s[3], c = s[1];
  const auto v = input.data();
  std::vector<double> out(v.size());
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t o = 0; o < c; ++o)
      std::copy_n(v.data() + (b * c + perm[o]) * area, area, out.data() + (b * c + o) * area);
  return detail::make_result(s, std::move(out), {input}, [input, perm = std::move(perm), area, c](Node& self) {
    auto& g = input.node()->grad_buffer();
    const std::size_t batch = g.size() / (c * area);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < c; ++o) {
        const double* src = self.grad.data() + (b * c + o) * area;
        double* dst = g.data() + (b * c + perm[o]) * area;
        for (std::size_t i = 0; i < area; ++i) dst[i] += src[i];
      }
  });
}

}  // namespace mail
