#include <cblas.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

using detail::Node;

// Orthonormal DCT-II basis, row k = frequency, column n = sample.
const std::vector<double>& dct_matrix(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> m(n * n);
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (std::size_t i = 0; i < n; ++i) {
      m[k * n + i] = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                  static_cast<double>(k) / (2.0 * nn));
    }
  }
  return cache.emplace(n, std::move(m)).first->second;
}

// out (+)= L X R^T per plane over `planes` stacked [h, w] planes; with
// `adjoint` set the transposed matrices are applied (L^T X R).
void separable(const double* x, double* out, std::size_t planes, std::size_t h, std::size_t w,
               const std::vector<double>& lh, const std::vector<double>& rw, bool adjoint, bool accumulate) {
  const int H = static_cast<int>(h), W = static_cast<int>(w);
  std::vector<double> tmp(planes * h * w);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, adjoint ? CblasNoTrans : CblasTrans, static_cast<int>(planes * h), W, W,
              1.0, x, W, rw.data(), W, 0.0, tmp.data(), W);
  for (std::size_t p = 0; p < planes; ++p) {
    cblas_dgemm(CblasRowMajor, adjoint ? CblasTrans : CblasNoTrans, CblasNoTrans, H, W, H, 1.0, lh.data(), H,
                tmp.data() + p * h * w, W, accumulate ? 1.0 : 0.0, out + p * h * w, W);
  }
}

}  // namespace

Tensor dct2d(const Tensor& input, bool inverse) {
  if (input.rank() != 4) {
    throw DimensionError("dct2d expects a rank-4 (B,C,H,W) tensor, got " + shape_str(input.shape()));
  }
  const auto& s = input.shape();
  const std::size_t h = s[2], w = s[3];
  if (h == 0 || w == 0) throw DimensionError("dct2d over an empty spatial extent");
  const auto& lh = dct_matrix(h);
  const auto& rw = dct_matrix(w);
  const std::size_t planes = s[0] * s[1];
  const auto v = input.data();
  std::vector<double> out(v.size());
  separable(v.data(), out.data(), planes, h, w, lh, rw, inverse, false);
  // The transform is orthonormal, so the adjoint of forward is inverse and vice versa.
  return detail::make_result(s, std::move(out), {input}, [input, planes, h, w, inverse, &lh, &rw](Node& self) {
    auto& g = input.node()->grad_buffer();
    separable(self.grad.data(), g.data(), planes, h, w, lh, rw, !inverse, true);
  });
}

}  // namespace mail
