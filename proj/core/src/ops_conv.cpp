#include <cblas.h>

#include <algorithm>
#include <cstddef>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

using detail::Node;
using idx = std::ptrdiff_t;

struct Geometry {
  idx batch, cin, h, w, cout, kh, kw, groups, stride, ph, pw, ho, wo;
  idx cin_g() const { return cin / groups; }
  idx cout_g() const { return cout / groups; }
  idx taps() const { return cin_g() * kh * kw; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0; }
};

// Valid output range [lo, hi) along one axis for kernel tap `k`.
inline void tap_range(idx k, idx pad, idx stride, idx in, idx out, idx& lo, idx& hi) {
  const idx off = k - pad;  // input = o * stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = in - off <= 0 ? 0 : std::min(out, (in - off + stride - 1) / stride);
  if (hi < lo) hi = lo;
}

void im2col(const double* in, const Geometry& g, double* col) {
  const idx plane = g.ho * g.wo;
  for (idx c = 0; c < g.cin_g(); ++c) {
    const double* src = in + c * g.h * g.w;
    for (idx i = 0; i < g.kh; ++i) {
      for (idx j = 0; j < g.kw; ++j) {
        double* dst = col + ((c * g.kh + i) * g.kw + j) * plane;
        std::fill(dst, dst + plane, 0.0);
        idx ylo, yhi, xlo, xhi;
        tap_range(i, g.ph, g.stride, g.h, g.ho, ylo, yhi);
        tap_range(j, g.pw, g.stride, g.w, g.wo, xlo, xhi);
        for (idx oy = ylo; oy < yhi; ++oy) {
          const double* row = src + (oy * g.stride + i - g.ph) * g.w + (j - g.pw);
          double* drow = dst + oy * g.wo;
          for (idx ox = xlo; ox < xhi; ++ox) drow[ox] = row[ox * g.stride];
        }
      }
    }
  }
}

void col2im_add(const double* col, const Geometry& g, double* in_grad) {
  const idx plane = g.ho * g.wo;
  for (idx c = 0; c < g.cin_g(); ++c) {
    double* dst = in_grad + c * g.h * g.w;
    for (idx i = 0; i < g.kh; ++i) {
      for (idx j = 0; j < g.kw; ++j) {
        const double* src = col + ((c * g.kh + i) * g.kw + j) * plane;
        idx ylo, yhi, xlo, xhi;
        tap_range(i, g.ph, g.stride, g.h, g.ho, ylo, yhi);
        tap_range(j, g.pw, g.stride, g.w, g.wo, xlo, xhi);
        for (idx oy = ylo; oy < yhi; ++oy) {
          double* row = dst + (oy * g.stride + i - g.ph) * g.w + (j - g.pw);
          const double* srow = src + oy * g.wo;
          for (idx ox = xlo; ox < xhi; ++ox) row[ox * g.stride] += srow[ox];
        }
      }
    }
  }
}

// Zero-padded copy of one plane: [h + 2ph, w + 2pw].
void pad_plane(const double* src, const Geometry& g, double* dst) {
  const idx pw_ = g.w + 2 * g.pw;
  std::fill(dst, dst + (g.h + 2 * g.ph) * pw_, 0.0);
  for (idx y = 0; y < g.h; ++y) std::copy(src + y * g.w, src + (y + 1) * g.w, dst + (y + g.ph) * pw_ + g.pw);
}

// One input channel feeding `mult` output channels, evaluated on a padded
// plane so the inner loops carry no bounds logic.
void depthwise_forward(const double* in, const double* wt, const Geometry& g, double* out) {
  const idx mult = g.cout / g.cin;
  const idx pw_ = g.w + 2 * g.pw;
  std::vector<double> padded(static_cast<std::size_t>((g.h + 2 * g.ph) * pw_));
  for (idx b = 0; b < g.batch; ++b) {
    for (idx c = 0; c < g.cin; ++c) {
      pad_plane(in + (b * g.cin + c) * g.h * g.w, g, padded.data());
      for (idx o = c * mult; o < (c + 1) * mult; ++o) {
        double* dst = out + (b * g.cout + o) * g.ho * g.wo;
        const double* wo = wt + o * g.kh * g.kw;
        for (idx oy = 0; oy < g.ho; ++oy) {
          double* __restrict drow = dst + oy * g.wo;
          std::fill(drow, drow + g.wo, 0.0);
          for (idx i = 0; i < g.kh; ++i) {
            const double* prow = padded.data() + (oy * g.stride + i) * pw_;
            for (idx j = 0; j < g.kw; ++j) {
              const double wv = wo[i * g.kw + j];
              const double* __restrict src = prow + j;
              if (g.stride == 1) {
#pragma omp simd
                for (idx ox = 0; ox < g.wo; ++ox) drow[ox] += wv * src[ox];
              } else {
                for (idx ox = 0; ox < g.wo; ++ox) drow[ox] += wv * src[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

void depthwise_backward(const double* in, const double* wt, const double* gout, const Geometry& g,
                        double* gin, double* gw) {
  const idx mult = g.cout / g.cin;
  const idx ph_ = g.h + 2 * g.ph, pw_ = g.w + 2 * g.pw;
  std::vector<double> padded(static_cast<std::size_t>(ph_ * pw_));
  std::vector<double> gpad(padded.size());
  for (idx b = 0; b < g.batch; ++b) {
    for (idx c = 0; c < g.cin; ++c) {
      if (gw) pad_plane(in + (b * g.cin + c) * g.h * g.w, g, padded.data());
      if (gin) std::fill(gpad.begin(), gpad.end(), 0.0);
      for (idx o = c * mult; o < (c + 1) * mult; ++o) {
        const double* go = gout + (b * g.cout + o) * g.ho * g.wo;
        const double* wo = wt + o * g.kh * g.kw;
        double* gwo = gw ? gw + o * g.kh * g.kw : nullptr;
        for (idx oy = 0; oy < g.ho; ++oy) {
          const double* __restrict grow = go + oy * g.wo;
          for (idx i = 0; i < g.kh; ++i) {
            const idx base = (oy * g.stride + i) * pw_;
            for (idx j = 0; j < g.kw; ++j) {
              if (gwo) {
                const double* __restrict src = padded.data() + base + j;
                double acc = 0.0;
                if (g.stride == 1) {
#pragma omp simd reduction(+ : acc)
                  for (idx ox = 0; ox < g.wo; ++ox) acc += grow[ox] * src[ox];
                } else {
                  for (idx ox = 0; ox < g.wo; ++ox) acc += grow[ox] * src[ox * g.stride];
                }
                gwo[i * g.kw + j] += acc;
              }
              if (gin) {
                const double wv = wo[i * g.kw + j];
                double* __restrict dst = gpad.data() + base + j;
                if (g.stride == 1) {
#pragma omp simd
                  for (idx ox = 0; ox < g.wo; ++ox) dst[ox] += wv * grow[ox];
                } else {
                  for (idx ox = 0; ox < g.wo; ++ox) dst[ox * g.stride] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
      if (gin) {
        double* gsrc = gin + (b * g.cin + c) * g.h * g.w;
        for (idx y = 0; y < g.h; ++y) {
          const double* row = gpad.data() + (y + g.ph) * pw_ + g.pw;
          for (idx x = 0; x < g.w; ++x) gsrc[y * g.w + x] += row[x];
        }
      }
    }
  }
}

void grouped_forward(const double* in, const double* wt, const Geometry& g, double* out,
                     std::vector<double>& col) {
  const idx plane = g.ho * g.wo;
  const idx taps = g.taps();
  if (!g.pointwise()) col.resize(static_cast<std::size_t>(taps * plane));
  for (idx b = 0; b < g.batch; ++b) {
    for (idx grp = 0; grp < g.groups; ++grp) {
      const double* src = in + (b * g.cin + grp * g.cin_g()) * g.h * g.w;
      const double* a = wt + grp * g.cout_g() * taps;
      double* dst = out + (b * g.cout + grp * g.cout_g()) * plane;
      const double* bmat = src;
      if (!g.pointwise()) {
        im2col(src, g, col.data());
        bmat = col.data();
      }
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.cout_g()),
                  static_cast<int>(plane), static_cast<int>(taps), 1.0, a, static_cast<int>(taps), bmat,
                  static_cast<int>(plane), 0.0, dst, static_cast<int>(plane));
    }
  }
}

void grouped_backward(const double* in, const double* wt, const double* gout, const Geometry& g,
                      double* gin, double* gw) {
  const idx plane = g.ho * g.wo;
  const idx taps = g.taps();
  std::vector<double> col;
  std::vector<double> gcol;
  if (!g.pointwise()) {
    col.resize(static_cast<std::size_t>(taps * plane));
    gcol.resize(col.size());
  }
  for (idx b = 0; b < g.batch; ++b) {
    for (idx grp = 0; grp < g.groups; ++grp) {
      const double* src = in + (b * g.cin + grp * g.cin_g()) * g.h * g.w;
      const double* go = gout + (b * g.cout + grp * g.cout_g()) * plane;
      const double* a = wt + grp * g.cout_g() * taps;
      const double* bmat = src;
      if (!g.pointwise() && gw) {
        im2col(src, g, col.data());
        bmat = col.data();
      }
      if (gw) {
        // dW[cout_g, taps] += dOut[cout_g, plane] * col^T
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.cout_g()),
                    static_cast<int>(taps), static_cast<int>(plane), 1.0, go, static_cast<int>(plane), bmat,
                    static_cast<int>(plane), 1.0, gw + grp * g.cout_g() * taps, static_cast<int>(taps));
      }
      if (gin) {
        double* gsrc = gin + (b * g.cin + grp * g.cin_g()) * g.h * g.w;
        if (g.pointwise()) {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(taps),
                      static_cast<int>(plane), static_cast<int>(g.cout_g()), 1.0, a, static_cast<int>(taps), go,
                      static_cast<int>(plane), 1.0, gsrc, static_cast<int>(plane));
        } else {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(taps),
                      static_cast<int>(plane), static_cast<int>(g.cout_g()), 1.0, a, static_cast<int>(taps), go,
                      static_cast<int>(plane), 0.0, gcol.data(), static_cast<int>(plane));
          col2im_add(gcol.data(), g, gsrc);
        }
      }
    }
  }
}

}  // namespace

std::size_t ConvSpec::out_extent_h(std::size_t h) const {
  const std::size_t padded = h + 2 * padding_h();
  if (padded < kernel_h) return 0;
  return (padded - kernel_h) / stride + 1;
}

std::size_t ConvSpec::out_extent_w(std::size_t w) const {
  const std::size_t padded = w + 2 * padding_w();
  if (padded < kernel_w) return 0;
  return (padded - kernel_w) / stride + 1;
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || groups == 0 ||
      stride == 0) {
    throw ConfigError("conv spec has a zero size (channels, kernel, groups and stride must be positive)");
  }
  if (in_channels % groups != 0) {
    throw ConfigError("conv groups " + std::to_string(groups) + " do not divide in_channels " +
                      std::to_string(in_channels));
  }
  if (out_channels % groups != 0) {
    throw ConfigError("conv groups " + std::to_string(groups) + " do not divide out_channels " +
                      std::to_string(out_channels));
  }
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const ConvSpec& spec) {
  spec.validate();
  const auto& s = input.shape();
  if (s.size() != 4) throw DimensionError("conv2d input must be rank 4 (B,C,H,W), got " + shape_str(s));
  if (s[1] != spec.in_channels) {
    throw DimensionError("conv2d input axis 1 (channels) is " + std::to_string(s[1]) + ", spec expects " +
                         std::to_string(spec.in_channels));
  }
  const Shape expected = spec.weight_shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 4) throw DimensionError("conv2d weight must be rank 4, got " + shape_str(ws));
  for (std::size_t ax = 0; ax < 4; ++ax) {
    if (ws[ax] != expected[ax]) {
      throw DimensionError("conv2d weight axis " + std::to_string(ax) + " is " + std::to_string(ws[ax]) +
                           ", expected " + std::to_string(expected[ax]) + " (weight " + shape_str(ws) + ")");
    }
  }
  const std::size_t ho = spec.out_extent_h(s[2]);
  const std::size_t wo = spec.out_extent_w(s[3]);
  if (ho == 0 || wo == 0) {
    throw DimensionError("conv2d spatial extent " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                         " too small for kernel " + std::to_string(spec.kernel_h) + "x" +
                         std::to_string(spec.kernel_w));
  }

  const Geometry g{static_cast<idx>(s[0]),          static_cast<idx>(s[1]),
                   static_cast<idx>(s[2]),          static_cast<idx>(s[3]),
                   static_cast<idx>(spec.out_channels), static_cast<idx>(spec.kernel_h),
                   static_cast<idx>(spec.kernel_w), static_cast<idx>(spec.groups),
                   static_cast<idx>(spec.stride),   static_cast<idx>(spec.padding_h()),
                   static_cast<idx>(spec.padding_w()), static_cast<idx>(ho),
                   static_cast<idx>(wo)};
  const bool depthwise = g.cin_g() == 1 && g.groups == g.cin;

  std::vector<double> out(static_cast<std::size_t>(g.batch * g.cout * g.ho * g.wo));
  if (depthwise) {
    depthwise_forward(input.data().data(), weight.data().data(), g, out.data());
  } else {
    std::vector<double> col;
    grouped_forward(input.data().data(), weight.data().data(), g, out.data(), col);
  }

  return detail::make_result({s[0], spec.out_channels, ho, wo}, std::move(out), {input, weight},
                             [input, weight, g, depthwise](Node& self) {
    auto* ni = input.node().get();
    auto* nw = weight.node().get();
    double* gin = ni->requires_grad ? ni->grad_buffer().data() : nullptr;
    double* gw = nw->requires_grad ? nw->grad_buffer().data() : nullptr;
    if (depthwise) {
      depthwise_backward(ni->value.data(), nw->value.data(), self.grad.data(), g, gin, gw);
    } else {
      grouped_backward(ni->value.data(), nw->value.data(), self.grad.data(), g, gin, gw);
    }
  });
}

}  // namespace mail
