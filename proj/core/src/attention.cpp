#include "mail/attention.hpp"

#include <algorithm>
#include <cmath>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

ConvSpec conv_spec(std::size_t in, std::size_t out, std::size_t k, std::size_t groups, std::size_t stride = 1) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = k;
  s.kernel_w = k;
  s.groups = groups;
  s.stride = stride;
  return s;
}

void enable_conv_rpf(Conv2d& conv, const RobustOptions& opts, Rng& rng) {
  if (opts.rpf_fraction < 0.0 || opts.rpf_fraction > 1.0) {
    throw ConfigError("rpf_fraction must lie in [0, 1]");
  }
  const auto n = static_cast<std::size_t>(std::lround(opts.rpf_fraction * static_cast<double>(conv.filter_count())));
  if (n == 0) return;
  const double sigma = opts.rpf_sigma.value_or(1.0 / std::sqrt(static_cast<double>(conv.fan_in())));
  conv.enable_rpf(n, sigma, rng);
}

void check_same_shapes(const std::vector<Tensor>& xs, const char* what) {
  if (xs.empty()) throw ContractError(std::string(what) + ": at least one modality required");
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i].shape() != xs[0].shape()) {
      throw DimensionError(std::string(what) + ": modality " + std::to_string(i) + " has shape " +
                           shape_str(xs[i].shape()) + ", expected " + shape_str(xs[0].shape()));
    }
  }
}

Tensor maybe_scale(const Tensor& t, const Tensor& eta) { return eta.defined() ? mul(eta, t) : t; }

}  // namespace

// ------------------------------------------------------------------- MSGDC

Msgdc::Msgdc(std::size_t channels, std::size_t expansion, std::size_t gpc_groups, Rng& rng) {
  if (expansion == 0) throw ConfigError("msgdc expansion must be positive");
  const std::size_t out = channels * expansion;
  gpc = Conv2d(conv_spec(channels, out, 1, gpc_groups), rng);
  dw3 = Conv2d(conv_spec(channels, out, 3, channels), rng);
  dw5 = Conv2d(conv_spec(channels, out, 5, channels), rng);
}

Tensor Msgdc::forward(const Tensor& x, const ForwardContext& ctx) const {
  return sum_all({gpc.forward(x, ctx), dw3.forward(x, ctx), dw5.forward(x, ctx)});
}

void Msgdc::enable_rpf(const RobustOptions& opts, Rng& rng) {
  enable_conv_rpf(gpc, opts, rng);
  enable_conv_rpf(dw3, opts, rng);
  enable_conv_rpf(dw5, opts, rng);
}

void Msgdc::resample(Phase phase, Rng& rng) {
  gpc.resample(phase, rng);
  dw3.resample(phase, rng);
  dw5.resample(phase, rng);
}

void Msgdc::visit(const std::string& prefix, Visitor& v) {
  gpc.visit(join_name(prefix, "gpc"), v);
  dw3.visit(join_name(prefix, "dw3"), v);
  dw5.visit(join_name(prefix, "dw5"), v);
}

// ------------------------------------------------------- channel attention

ChannelAttention::ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0) throw ConfigError("channel attention reduction ratio must be >= 1");
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  fc1 = Linear(channels, hidden, rng);
  fc2 = Linear(hidden, channels, rng);
  theta_x = Tensor::full({1, channels}, 1.0, true);
}

Tensor ca_descriptor(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("channel attention expects [B, C, H, W], got " + shape_str(x.shape()));
  const Tensor gmp = global_pool(x, PoolKind::Max);
  const Tensor gap = global_pool(x, PoolKind::Avg);
  const Tensor gmn = global_pool(x, PoolKind::Min);
  const Tensor mu = sub(sub(gmp, gap), gmn);
  return reshape(add(sum_all({gmp, gap, gmn}), mu), {x.dim(0), x.dim(1)});
}

Tensor ChannelAttention::attention_map(const Tensor& x, const ForwardContext& ctx, const Tensor& eta) const {
  const std::size_t b = x.dim(0), c = x.dim(1);
  Tensor z = fc2.forward(relu(fc1.forward(ca_descriptor(x), ctx)), ctx);
  z = mul(z, theta_x);
  if (eta.defined()) z = mul(z, reshape(eta, {b, c}));
  return reshape(sigmoid(z), {b, c, 1, 1});
}

Tensor ChannelAttention::forward(const Tensor& x, const ForwardContext& ctx, const Tensor& eta) const {
  return mul(x, attention_map(x, ctx, eta));
}

void ChannelAttention::visit(const std::string& prefix, Visitor& v) {
  fc1.visit(join_name(prefix, "fc1"), v);
  fc2.visit(join_name(prefix, "fc2"), v);
  v.parameter(join_name(prefix, "theta_x"), theta_x);
}

// ------------------------------------------------------------------- EMILA

Emila::Emila(std::size_t channels, const BlockOptions& opts, Rng& rng, const std::string& site_key)
    : key(site_key), shuffle_groups(opts.restore_groups) {
  msgdc = Msgdc(channels, opts.expansion, opts.gpc_groups, rng);
  const std::size_t wide = msgdc.out_channels();
  if (wide % opts.restore_groups != 0 || channels % opts.restore_groups != 0) {
    throw ConfigError("emila: restore groups " + std::to_string(opts.restore_groups) + " must divide " +
                      std::to_string(wide) + " and " + std::to_string(channels) + " channels");
  }
  ca = ChannelAttention(wide, opts.ca_reduction, rng);
  restore = Conv2d(conv_spec(wide, channels, 1, opts.restore_groups), rng);
}

Tensor Emila::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 4 || x.dim(1) != restore.spec().out_channels) {
    throw ConfigError("emila: residual needs " + std::to_string(restore.spec().out_channels) + " channels, got " +
                      shape_str(x.shape()));
  }
  Tensor y = channel_shuffle(msgdc.forward(x, ctx), shuffle_groups);
  y = ca.forward(y, ctx, ca_noise.eta(x.dim(0), ctx));
  return add(x, restore.forward(y, ctx));
}

void Emila::make_robust(const RobustOptions& opts, Rng& rng) {
  if (opts.rpf) msgdc.enable_rpf(opts, rng);
  if (opts.man) ca_noise = ManSite(join_name(key, "ca"), msgdc.out_channels());
}

void Emila::resample(Phase phase, Rng& rng) { msgdc.resample(phase, rng); }

void Emila::visit(const std::string& prefix, Visitor& v) {
  msgdc.visit(join_name(prefix, "msgdc"), v);
  ca.visit(join_name(prefix, "ca"), v);
  restore.visit(join_name(prefix, "restore"), v);
  ca_noise.visit(join_name(prefix, "ca_noise"), v);
}

// -------------------------------------------------------------------- ERLA

Erla::Erla(std::size_t in_channels, std::size_t out_channels, std::size_t stride, const BlockOptions& opts, Rng& rng,
           const std::string& key)
    : first(in_channels, opts, rng, join_name(key, "emila1")),
      second(in_channels, opts, rng, join_name(key, "emila2")),
      bn1(in_channels),
      bn2(out_channels),
      project(conv_spec(in_channels, out_channels, 1, 1, stride), rng) {
  if (stride != 1 || in_channels != out_channels) skip = Conv2d(conv_spec(in_channels, out_channels, 1, 1, stride), rng);
}

Tensor Erla::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = relu(bn1.forward(first.forward(x, ctx), ctx));
  y = bn2.forward(project.forward(second.forward(y, ctx), ctx), ctx);
  return relu(add(skip ? skip->forward(x, ctx) : x, y));
}

void Erla::make_robust(const RobustOptions& opts, Rng& rng) {
  first.make_robust(opts, rng);
  second.make_robust(opts, rng);
}

void Erla::resample(Phase phase, Rng& rng) {
  first.resample(phase, rng);
  second.resample(phase, rng);
}

void Erla::visit(const std::string& prefix, Visitor& v) {
  first.visit(join_name(prefix, "emila1"), v);
  bn1.visit(join_name(prefix, "bn1"), v);
  second.visit(join_name(prefix, "emila2"), v);
  project.visit(join_name(prefix, "project"), v);
  bn2.visit(join_name(prefix, "bn2"), v);
  if (skip) skip->visit(join_name(prefix, "skip"), v);
}

BasicBlock::BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng)
    : conv1(conv_spec(in_channels, out_channels, 3, 1, stride), rng),
      conv2(conv_spec(out_channels, out_channels, 3, 1), rng),
      bn1(out_channels),
      bn2(out_channels) {
  if (stride != 1 || in_channels != out_channels) skip = Conv2d(conv_spec(in_channels, out_channels, 1, 1, stride), rng);
}

Tensor BasicBlock::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = relu(bn1.forward(conv1.forward(x, ctx), ctx));
  y = bn2.forward(conv2.forward(y, ctx), ctx);
  return relu(add(skip ? skip->forward(x, ctx) : x, y));
}

void BasicBlock::visit(const std::string& prefix, Visitor& v) {
  conv1.visit(join_name(prefix, "conv1"), v);
  bn1.visit(join_name(prefix, "bn1"), v);
  conv2.visit(join_name(prefix, "conv2"), v);
  bn2.visit(join_name(prefix, "bn2"), v);
  if (skip) skip->visit(join_name(prefix, "skip"), v);
}

// ------------------------------------------------------------------- MFIFA

FreqComponents mfifa_decompose(const Tensor& x, bool use_dct) {
  if (x.rank() != 4) throw DimensionError("mfifa expects [B, C, H, W], got " + shape_str(x.shape()));
  const Tensor xs = use_dct ? dct2d(x) : x;
  FreqComponents f;
  f.lw1 = global_pool(xs, PoolKind::Min);
  f.lw2 = global_pool(xs, PoolKind::Avg);
  f.lw = add(f.lw1, f.lw2);
  f.h1 = sub(xs, f.lw1);
  f.h2 = sub(xs, f.lw2);
  f.h3 = global_pool(xs, PoolKind::Max);
  f.h = add(add(f.h1, f.h2), f.h3);
  f.a = sub(f.h, f.lw);
  return f;
}

FusionParams FusionParams::ones(std::size_t modalities, std::size_t channels, bool with_mfifa, bool with_emsca) {
  FusionParams p;
  for (std::size_t i = 0; i < modalities; ++i) {
    if (with_mfifa) {
      p.alpha.push_back(Tensor::full({1}, 1.0, true));
      p.wp.push_back(Tensor::full({1}, 1.0, true));
      p.gamma.push_back(Tensor::full({1}, 1.0, true));
    }
    if (with_emsca) p.theta_i.push_back(Tensor::full({1}, 1.0, true));
    p.theta_m.push_back(Tensor::full({1, channels, 1, 1}, 1.0, true));
  }
  if (with_mfifa) p.theta_f = Tensor::full({1}, 1.0, true);
  if (with_emsca) p.theta_s = Tensor::full({1}, 1.0, true);
  return p;
}

Tensor mfifa_logits(const std::vector<Tensor>& xs, const FusionParams& p, bool use_dct, std::span<const Tensor> eta) {
  check_same_shapes(xs, "mfifa");
  if (p.alpha.size() != xs.size() || p.wp.size() != xs.size() || p.gamma.size() != xs.size()) {
    throw ContractError("mfifa: frequency weights configured for " + std::to_string(p.alpha.size()) +
                        " modalities, got " + std::to_string(xs.size()));
  }
  if (!eta.empty() && eta.size() != 3 * xs.size()) throw ContractError("mfifa: expected 3 noise tensors per modality");
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const FreqComponents f = mfifa_decompose(xs[i], use_dct);
    const bool noisy = !eta.empty();
    terms.push_back(maybe_scale(mul(p.alpha[i], f.lw), noisy ? eta[3 * i] : Tensor{}));
    terms.push_back(maybe_scale(mul(p.wp[i], f.h), noisy ? eta[3 * i + 1] : Tensor{}));
    terms.push_back(maybe_scale(mul(p.gamma[i], f.a), noisy ? eta[3 * i + 2] : Tensor{}));
  }
  // lw terms are [B,C,1,1]; summing from a full-resolution term keeps the broadcast shape.
  Tensor acc = terms[1];
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i != 1) acc = add(acc, terms[i]);
  }
  return acc;
}

Tensor mfifa(const std::vector<Tensor>& xs, const FusionParams& p, bool use_dct) {
  return sigmoid(mfifa_logits(xs, p, use_dct));
}

// ------------------------------------------------------------------- EMSCA

Tensor emsca_s(const Tensor& x, const Msgdc& msgdc, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw DimensionError("emsca: spatial extent must be at least 2x2, got " + shape_str(x.shape()));
  }
  const Tensor m = msgdc.forward(x, ctx);
  return add(local_pool(m, PoolKind::Avg), local_pool(m, PoolKind::Max));
}

Tensor emsca(const std::vector<Tensor>& xs, const FusionParams& p, const std::vector<Msgdc>& msgdcs,
             const ForwardContext& ctx, std::span<const Tensor> eta) {
  check_same_shapes(xs, "emsca");
  const std::size_t m = xs.size();
  if (p.theta_i.size() != m || msgdcs.size() != m) {
    throw ContractError("emsca: configured for " + std::to_string(p.theta_i.size()) + " modalities, got " +
                        std::to_string(m));
  }
  if (!eta.empty() && eta.size() != m) throw ContractError("emsca: expected one noise tensor per modality");
  const std::size_t h = xs[0].dim(2), w = xs[0].dim(3);

  std::vector<Tensor> s(m);
  for (std::size_t i = 0; i < m; ++i) s[i] = emsca_s(xs[i], msgdcs[i], ctx);

  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = m - 1 - i;
    const Tensor ss = emsca_s(s[i], msgdcs[i], ctx);
    const Tensor inner =
        sum_all({upsample_nearest(s[i], h, w), upsample_nearest(s[j], h, w), upsample_nearest(ss, h, w)});
    terms.push_back(maybe_scale(mul(p.theta_i[i], inner), eta.empty() ? Tensor{} : eta[i]));
  }
  return sum_all(terms);
}

// ------------------------------------------------------------------- EMCAM

Emcam::Emcam(std::size_t channels, std::size_t modalities, const EmcamOptions& options, Rng& rng,
             const std::string& site_key)
    : key(site_key), opts(options) {
  if (modalities == 0) throw ConfigError("emcam: modality count must be >= 1");
  if (!opts.use_mfifa && !opts.use_emsca) throw ConfigError("emcam: at least one of mfifa/emsca must be enabled");
  params = FusionParams::ones(modalities, channels, opts.use_mfifa, opts.use_emsca);
  if (opts.use_emsca) {
    for (std::size_t i = 0; i < modalities; ++i) msgdc.emplace_back(channels, 1, 1, rng);
  }
}

Tensor Emcam::attention_map(const std::vector<Tensor>& xs, const ForwardContext& ctx) const {
  check_same_shapes(xs, "emcam");
  if (xs.size() != params.modalities()) {
    throw ContractError("emcam: expected " + std::to_string(params.modalities()) + " modalities, got " +
                        std::to_string(xs.size()));
  }
  const std::size_t b = xs[0].dim(0);
  std::vector<Tensor> mf_eta, em_eta;
  for (const auto& site : mfifa_noise) mf_eta.push_back(site.eta(b, ctx));
  for (const auto& site : emsca_noise) em_eta.push_back(site.eta(b, ctx));

  std::vector<Tensor> parts;
  if (opts.use_mfifa) parts.push_back(mul(params.theta_f, mfifa_logits(xs, params, opts.use_dct, mf_eta)));
  if (opts.use_emsca) parts.push_back(mul(params.theta_s, emsca(xs, params, msgdc, ctx, em_eta)));
  Tensor logits = parts.size() == 1 ? parts[0] : add(parts[1], parts[0]);
  return sigmoid(maybe_scale(logits, fusion_noise.eta(b, ctx)));
}

std::vector<Tensor> Emcam::forward(const std::vector<Tensor>& xs, const ForwardContext& ctx) const {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  if (opts.parallel || !opts.use_mfifa || !opts.use_emsca) {
    const Tensor a = attention_map(xs, ctx);
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(mul(mul(xs[i], a), params.theta_m[i]));
    return out;
  }
  // Cascade: EMSCA attends over the MFIFA-recalibrated features.
  check_same_shapes(xs, "emcam");
  const std::size_t b = xs[0].dim(0);
  std::vector<Tensor> mf_eta, em_eta;
  for (const auto& site : mfifa_noise) mf_eta.push_back(site.eta(b, ctx));
  for (const auto& site : emsca_noise) em_eta.push_back(site.eta(b, ctx));
  const Tensor af = sigmoid(mul(params.theta_f, mfifa_logits(xs, params, opts.use_dct, mf_eta)));
  std::vector<Tensor> ys;
  for (const auto& x : xs) ys.push_back(mul(x, af));
  const Tensor as =
      sigmoid(maybe_scale(mul(params.theta_s, emsca(ys, params, msgdc, ctx, em_eta)), fusion_noise.eta(b, ctx)));
  for (std::size_t i = 0; i < ys.size(); ++i) out.push_back(mul(mul(ys[i], as), params.theta_m[i]));
  return out;
}

void Emcam::make_robust(const RobustOptions& o, Rng& rng) {
  const std::size_t m = params.modalities();
  const std::size_t c = params.theta_m.empty() ? 0 : params.theta_m[0].dim(1);
  if (o.rpf) {
    for (auto& conv : msgdc) conv.enable_rpf(o, rng);
  }
  if (!o.man) return;
  static const char* const kTerms[] = {"lw", "h", "a"};
  if (opts.use_mfifa) {
    for (std::size_t i = 0; i < m; ++i) {
      for (const char* t : kTerms) mfifa_noise.emplace_back(key + ".mfifa" + std::to_string(i) + "." + t, c);
    }
  }
  if (opts.use_emsca) {
    for (std::size_t i = 0; i < m; ++i) emsca_noise.emplace_back(key + ".emsca" + std::to_string(i), c);
  }
  fusion_noise = ManSite(key + ".fusion", c);
}

void Emcam::resample(Phase phase, Rng& rng) {
  for (auto& conv : msgdc) conv.resample(phase, rng);
}

void Emcam::visit(const std::string& prefix, Visitor& v) {
  const std::size_t m = params.modalities();
  for (std::size_t i = 0; i < m; ++i) {
    const std::string mi = std::to_string(i);
    if (opts.use_mfifa) {
      v.parameter(join_name(prefix, "alpha" + mi), params.alpha[i]);
      v.parameter(join_name(prefix, "wp" + mi), params.wp[i]);
      v.parameter(join_name(prefix, "gamma" + mi), params.gamma[i]);
    }
    if (opts.use_emsca) {
      v.parameter(join_name(prefix, "theta_i" + mi), params.theta_i[i]);
      msgdc[i].visit(join_name(prefix, "msgdc" + mi), v);
    }
    v.parameter(join_name(prefix, "theta_m" + mi), params.theta_m[i]);
  }
  if (opts.use_mfifa) v.parameter(join_name(prefix, "theta_f"), params.theta_f);
  if (opts.use_emsca) v.parameter(join_name(prefix, "theta_s"), params.theta_s);
  for (std::size_t i = 0; i < mfifa_noise.size(); ++i) {
    mfifa_noise[i].visit(join_name(prefix, "mfifa_noise" + std::to_string(i)), v);
  }
  for (std::size_t i = 0; i < emsca_noise.size(); ++i) {
    emsca_noise[i].visit(join_name(prefix, "emsca_noise" + std::to_string(i)), v);
  }
  fusion_noise.visit(join_name(prefix, "fusion_noise"), v);
}

}  // namespace mail
