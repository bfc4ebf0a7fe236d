#include "mail/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mail/attention.hpp"
#include "mail/errors.hpp"
#include "mail/network.hpp"
#include "mail/noise.hpp"
#include "mail/ops.hpp"
#include "mail/robust.hpp"

namespace mail {

const std::vector<std::string>& gradcheck_blocks() {
  static const std::vector<std::string> names = {"msgdc", "ca",    "emila", "erla", "mfifa",
                                                 "emsca", "emcam", "tmtl",  "rpan"};
  return names;
}

namespace {

double probe_loss(const std::vector<Tensor>& outs, const std::vector<std::vector<double>>& r) {
  double s = 0.0;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const auto d = outs[k].data();
    for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * r[k][i];
  }
  return s;
}

class Collect : public Visitor {
 public:
  void parameter(const std::string&, Tensor& t) override {
    if (t.numel() > 0) out.push_back(t);
  }
  std::vector<Tensor> out;
};

/// Moves every learnable scalar away from its structured initial value so
/// that the probe exercises generic points.
void jitter(std::vector<Tensor>& ts, Rng& rng) {
  for (auto& t : ts) {
    for (double& v : t.mutable_data()) v = v * rng.uniform(0.5, 1.5) + rng.uniform(-0.1, 0.1);
  }
}

Tensor random_input(Shape s, Rng& rng) {
  return Tensor::from(s, rng.normal_vector(shape_numel(s), 0.0, 1.0), true);
}

template <typename Block>
std::vector<Tensor> params_of(Block& b) {
  Collect c;
  b.visit("", c);
  return c.out;
}

}  // namespace

GradcheckResult check_gradients(const std::string& name, const std::vector<Tensor>& leaves_in,
                                const std::function<std::vector<Tensor>()>& fn, const GradcheckOptions& opts) {
  std::vector<Tensor> leaves = leaves_in;
  Rng rng(opts.seed, "gradcheck." + name);
  const double corrupt = opts.corrupt == name ? 1.5 : 1.0;

  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  const auto outs = fn();
  std::vector<std::vector<double>> r;
  std::vector<Tensor> terms;
  for (const auto& o : outs) {
    r.push_back(rng.normal_vector(o.numel(), 0.0, 1.0));
    terms.push_back(sum(mul(o, Tensor::from(o.shape(), r.back()))));
  }
  sum_all(terms).backward();

  GradcheckResult res;
  res.block = name;
  NoGradGuard guard;
  for (auto& leaf : leaves) {
    const std::size_t n = leaf.numel();
    std::vector<std::size_t> probe(n);
    for (std::size_t i = 0; i < n; ++i) probe[i] = i;
    if (n > opts.samples_per_tensor) {
      const auto perm = rng.permutation(n);
      probe.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(opts.samples_per_tensor));
    }
    const bool has = leaf.has_grad();
    double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
    for (std::size_t i : probe) {
      const double analytic = has ? leaf.grad()[i] * corrupt : 0.0;
      double& v = leaf.mutable_data()[i];
      const double keep = v;
      v = keep + opts.step;
      const double up = probe_loss(fn(), r);
      v = keep - opts.step;
      const double down = probe_loss(fn(), r);
      v = keep;
      const double numeric = (up - down) / (2.0 * opts.step);
      diff2 += (analytic - numeric) * (analytic - numeric);
      an2 += analytic * analytic;
      nu2 += numeric * numeric;
    }
    res.entries += probe.size();
    const double scale_ref = std::max({std::sqrt(an2), std::sqrt(nu2), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, std::sqrt(diff2) / scale_ref);
  }
  res.passed = std::isfinite(res.max_rel_error) && res.max_rel_error < opts.tolerance;
  return res;
}

GradcheckResult gradcheck_block(const std::string& name, const GradcheckOptions& opts) {
  Rng rng(opts.seed, "gradcheck.init." + name);
  ForwardContext ctx;
  BlockOptions bo;

  if (name == "msgdc") {
    Msgdc m(4, 2, 2, rng);
    auto leaves = params_of(m);
    Tensor x = random_input({2, 4, 6, 6}, rng);
    leaves.push_back(x);
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{m.forward(x, ctx)}; }, opts);
  }
  if (name == "ca") {
    ChannelAttention ca(8, 4, rng);
    auto leaves = params_of(ca);
    jitter(leaves, rng);
    Tensor x = random_input({2, 8, 5, 5}, rng);
    leaves.push_back(x);
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{ca.forward(x, ctx)}; }, opts);
  }
  if (name == "emila") {
    Emila e(4, bo, rng, "gc");
    auto leaves = params_of(e);
    jitter(leaves, rng);
    Tensor x = random_input({2, 4, 6, 6}, rng);
    leaves.push_back(x);
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{e.forward(x, ctx)}; }, opts);
  }
  if (name == "erla") {
    Erla e(4, 8, 2, bo, rng, "gc");
    auto leaves = params_of(e);
    jitter(leaves, rng);
    Tensor x = random_input({3, 4, 6, 6}, rng);
    leaves.push_back(x);
    ForwardContext train_ctx;
    train_ctx.training = true;
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{e.forward(x, train_ctx)}; }, opts);
  }
  if (name == "mfifa") {
    FusionParams p = FusionParams::ones(2, 3, true, false);
    std::vector<Tensor> leaves;
    for (auto* v : {&p.alpha, &p.wp, &p.gamma}) leaves.insert(leaves.end(), v->begin(), v->end());
    jitter(leaves, rng);
    std::vector<Tensor> xs{random_input({2, 3, 6, 6}, rng), random_input({2, 3, 6, 6}, rng)};
    leaves.insert(leaves.end(), xs.begin(), xs.end());
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{mfifa(xs, p, true)}; }, opts);
  }
  if (name == "emsca") {
    FusionParams p = FusionParams::ones(2, 3, false, true);
    std::vector<Msgdc> ms{Msgdc(3, 1, 1, rng), Msgdc(3, 1, 1, rng)};
    std::vector<Tensor> leaves(p.theta_i.begin(), p.theta_i.end());
    jitter(leaves, rng);
    for (auto& m : ms) {
      const auto mp = params_of(m);
      leaves.insert(leaves.end(), mp.begin(), mp.end());
    }
    std::vector<Tensor> xs{random_input({2, 3, 8, 8}, rng), random_input({2, 3, 8, 8}, rng)};
    leaves.insert(leaves.end(), xs.begin(), xs.end());
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{emsca(xs, p, ms, ctx)}; }, opts);
  }
  if (name == "emcam") {
    Emcam e(3, 2, EmcamOptions{}, rng, "gc");
    auto leaves = params_of(e);
    jitter(leaves, rng);
    std::vector<Tensor> xs{random_input({2, 3, 8, 8}, rng), random_input({2, 3, 8, 8}, rng)};
    leaves.insert(leaves.end(), xs.begin(), xs.end());
    return check_gradients(name, leaves, [&] { return e.forward(xs, ctx); }, opts);
  }
  if (name == "tmtl") {
    std::vector<std::vector<Tensor>> logits{{random_input({4, 3}, rng), random_input({4, 3}, rng)},
                                            {random_input({4, 2}, rng), random_input({4, 2}, rng)}};
    const std::vector<std::vector<int>> labels{{0, 2, 1, 2}, {1, 0, 0, 1}};
    const std::vector<std::vector<double>> lambda{{0.7, 1.3}, {0.4, 0.9}};
    std::vector<Tensor> leaves;
    for (const auto& row : logits) leaves.insert(leaves.end(), row.begin(), row.end());
    return check_gradients(name, leaves, [&] { return std::vector<Tensor>{tmtl_loss(logits, labels, lambda)}; },
                           opts);
  }
  if (name == "rpan") {
    NetworkConfig cfg;
    cfg.modalities = 2;
    cfg.in_channels = 2;
    cfg.height = cfg.width = 16;
    cfg.stage_channels = {4};
    cfg.stage_depths = {1};
    MailNet net(cfg, opts.seed);
    net.make_robust(RobustOptions{}, opts.seed);
    NoiseSource noise(opts.seed, 0.25, NoiseMode::Frozen);
    ForwardContext rctx;
    rctx.phase = Phase::Inference;
    rctx.noise = &noise;
    std::vector<Tensor> leaves;
    for (const auto& p : net.parameters()) {
      if (p.name.rfind("head.", 0) == 0 || p.name.find(".stem.") != std::string::npos) continue;
      leaves.push_back(p.tensor);
    }
    jitter(leaves, rng);
    std::vector<Tensor> xs{random_input({2, 4, 8, 8}, rng), random_input({2, 4, 8, 8}, rng)};
    leaves.insert(leaves.end(), xs.begin(), xs.end());
    return check_gradients(name, leaves, [&] { return rpan_layer(net, 0, xs, rctx); }, opts);
  }
  throw ConfigError("gradcheck: unknown block '" + name + "'");
}

std::vector<GradcheckResult> gradcheck_suite(const GradcheckOptions& opts) {
  if (!opts.corrupt.empty()) {
    const auto& names = gradcheck_blocks();
    if (std::find(names.begin(), names.end(), opts.corrupt) == names.end()) {
      throw ConfigError("gradcheck.corrupt: unknown block '" + opts.corrupt + "'");
    }
  }
  std::vector<GradcheckResult> out;
  for (const auto& n : gradcheck_blocks()) out.push_back(gradcheck_block(n, opts));
  return out;
}

}  // namespace mail
