#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

using detail::Node;

constexpr std::size_t kMaxRank = 6;

struct Broadcast {
  Shape out;
  // Strides (in elements) of a and b against the padded output shape; 0 on a
  // broadcast axis.
  std::array<std::size_t, kMaxRank> extent{};
  std::array<std::size_t, kMaxRank> stride_a{};
  std::array<std::size_t, kMaxRank> stride_b{};
  std::size_t rank = 0;
  bool same = false;
};

Shape padded(const Shape& s, std::size_t rank) {
  Shape p(rank - s.size(), 1);
  p.insert(p.end(), s.begin(), s.end());
  return p;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  if (rank > kMaxRank) throw DimensionError("broadcast rank exceeds " + std::to_string(kMaxRank));
  const auto pa = padded(a, rank);
  const auto pb = padded(b, rank);
  bc.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                           " on axis " + std::to_string(i));
    }
    bc.out[i] = std::max(pa[i], pb[i]);
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    bc.extent[i] = bc.out[i];
    bc.stride_a[i] = pa[i] == 1 ? 0 : sa;
    bc.stride_b[i] = pb[i] == 1 ? 0 : sb;
    sa *= pa[i];
    sb *= pb[i];
  }
  bc.rank = rank;
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t n = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  std::array<std::size_t, kMaxRank> idx{};
  std::size_t ia = 0, ib = 0;
  const std::size_t last = bc.rank - 1;
  const std::size_t inner = bc.extent[last];
  const std::size_t sa = bc.stride_a[last], sb = bc.stride_b[last];
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * sa, ib + j * sb);
    // Advance the outer multi-index.
    for (std::size_t ax = last; ax-- > 0;) {
      ++idx[ax];
      ia += bc.stride_a[ax];
      ib += bc.stride_b[ax];
      if (idx[ax] < bc.extent[ax]) break;
      ia -= bc.stride_a[ax] * bc.extent[ax];
      ib -= bc.stride_b[ax] * bc.extent[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const auto bc = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(shape_numel(bc.out));
  const auto av = a.data();
  const auto bv = b.data();
  switch (op) {
    case BinOp::Add:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case BinOp::Sub:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    case BinOp::Mul:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
  }
  return detail::make_result(bc.out, std::move(out), {a, b}, [a, b, bc, op](Node& self) {
    const auto& g = self.grad;
    auto* na = a.node().get();
    auto* nb = b.node().get();
    if (na->requires_grad) {
      auto& ga = na->grad_buffer();
      if (op == BinOp::Mul) {
        const auto& bv = nb->value;
        for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * bv[j]; });
      } else {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
      }
    }
    if (nb->requires_grad) {
      auto& gb = nb->grad_buffer();
      switch (op) {
        case BinOp::Add:
          for_each_broadcast(bc, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
          break;
        case BinOp::Sub:
          for_each_broadcast(bc, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
          break;
        case BinOp::Mul: {
          const auto& av = na->value;
          for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * av[i]; });
          break;
        }
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return detail::make_result(a.shape(), std::move(out), {a}, [a, deriv](Node& self) {
    auto* na = a.node().get();
    auto& ga = na->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(na->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        // Branches keep exp() from overflowing for large |x|. The clamp keeps
        // saturated logits inside the open unit interval.
        constexpr double lo = std::numeric_limits<double>::denorm_min();
        constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
        double y;
        if (x >= 0.0) {
          y = 1.0 / (1.0 + std::exp(-x));
        } else {
          const double e = std::exp(x);
          y = e / (1.0 + e);
        }
        return std::clamp(y, lo, hi);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum_all(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("sum_all of an empty list");
  const Shape& shape = terms.front().shape();
  std::vector<double> out(terms.front().data().begin(), terms.front().data().end());
  for (std::size_t t = 1; t < terms.size(); ++t) {
    if (terms[t].shape() != shape) {
      throw DimensionError("sum_all term " + std::to_string(t) + " has shape " +
                           shape_str(terms[t].shape()) + ", expected " + shape_str(shape));
    }
    const auto v = terms[t].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return detail::make_result(shape, std::move(out), terms, [terms](Node& self) {
    for (const auto& t : terms) {
      auto* n = t.node().get();
      if (!n->requires_grad) continue;
      auto& g = n->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result({1}, {s}, {a}, [a](Node& self) {
    auto& g = a.node()->grad_buffer();
    for (auto& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_squares(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return detail::make_result({1}, {s}, {a}, [a](Node& self) {
    auto* n = a.node().get();
    auto& g = n->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * n->value[i] * self.grad[0];
  });
}

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  const double norm = std::sqrt(s);
  return detail::make_result({1}, {norm}, {a}, [a, norm](Node& self) {
    if (norm == 0.0) return;  // subgradient 0 at the origin
    auto* n = a.node().get();
    auto& g = n->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n->value[i] / norm * self.grad[0];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), {a}, [a](Node& self) {
    auto& g = a.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat0 of an empty list");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("concat0 needs rank >= 1");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw DimensionError("concat0 part of shape " + shape_str(s) + " does not match " +
                           shape_str(shape) + " beyond axis 0");
    }
    rows += s[0];
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result(shape, std::move(out), parts, [parts](Node& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      auto* n = p.node().get();
      const std::size_t len = n->value.size();
      if (n->requires_grad) {
        auto& g = n->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2) {
    throw DimensionError("linear expects x [B,in] and W [out,in], got " + shape_str(x.shape()) +
                         " and " + shape_str(weight.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("linear: axis 1 of W is " + std::to_string(weight.dim(1)) +
                         ", input features " + std::to_string(in));
  }
  if (bias.defined() && bias.numel() != out_f) {
    throw DimensionError("linear: bias has " + std::to_string(bias.numel()) + " entries, expected " +
                         std::to_string(out_f));
  }
  const auto xv = x.data();
  const auto wv = weight.data();
  std::vector<double> out(batch * out_f);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_f; ++o) {
      double s = bias.defined() ? bias.data()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += xv[b * in + i] * wv[o * in + i];
      out[b * out_f + o] = s;
    }
  }
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_result({batch, out_f}, std::move(out), parents,
                             [x, weight, bias, batch, in, out_f](Node& self) {
    const auto& g = self.grad;
    auto* nx = x.node().get();
    auto* nw = weight.node().get();
    if (nx->requires_grad) {
      auto& gx = nx->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_f; ++o) {
          const double go = g[b * out_f + o];
          for (std::size_t i = 0; i < in; ++i) gx[b * in + i] += go * nw->value[o * in + i];
        }
    }
    if (nw->requires_grad) {
      auto& gw = nw->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_f; ++o) {
          const double go = g[b * out_f + o];
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go * nx->value[b * in + i];
        }
    }
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = bias.node()->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_f; ++o) gb[o] += g[b * out_f + o];
    }
  });
}

}  // namespace mail
