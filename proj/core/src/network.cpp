#include "mail/network.hpp"

#include <map>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

std::string stage_name(std::size_t s) { return "stage" + std::to_string(s + 1); }
std::string branch_name(std::size_t i) { return "branch" + std::to_string(i); }

class CollectParams : public Visitor {
 public:
  void parameter(const std::string& name, Tensor& t) override { out.push_back({name, t}); }
  std::vector<NamedTensor> out;
};

/// Flattens every parameter and buffer into raw spans, in visiting order.
class CollectState : public Visitor {
 public:
  void parameter(const std::string&, Tensor& t) override { spans.push_back(t.mutable_data()); }
  void buffer(const std::string&, Tensor& t) override {
    if (t.defined()) spans.push_back(t.mutable_data());
  }
  void buffer(const std::string&, std::vector<double>& v) override { spans.push_back(v); }
  std::vector<std::span<double>> spans;
};

/// Block key for a parameter name: "branchN.<part>" or the first component.
std::string block_key(const std::string& name) {
  const auto dot = name.find('.');
  if (name.rfind("branch", 0) == 0 && dot != std::string::npos) {
    const auto dot2 = name.find('.', dot + 1);
    return name.substr(0, dot2);
  }
  return name.substr(0, dot);
}

}  // namespace

NetworkConfig NetworkConfig::full() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::desk() {
  NetworkConfig c;
  c.height = 64;
  c.width = 64;
  c.stage_channels = {8, 16, 32, 64};
  c.stage_depths = {1, 1, 1, 1};
  return c;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("network." + field + ": " + why);
  };
  if (modalities == 0) fail("modalities", "must be >= 1");
  if (in_channels == 0) fail("in_channels", "must be >= 1");
  if (height == 0 || width == 0) fail("input_size", "must be positive");
  if (stage_channels.empty()) fail("stage_channels", "at least one stage required");
  if (stage_depths.size() != stage_channels.size()) fail("stage_depths", "must have one entry per stage");
  for (std::size_t d : stage_depths) {
    if (d == 0) fail("stage_depths", "every stage needs at least one block");
  }
  for (std::size_t c : stage_channels) {
    if (c == 0) fail("stage_channels", "widths must be positive");
    if (use_erla && c % block.restore_groups != 0) fail("stage_channels", "widths must be divisible by restore groups");
  }
  if (tasks.empty()) fail("tasks", "at least one task required");
  for (const auto& t : tasks) {
    if (t.classes < 2) fail("tasks", "task '" + t.name + "' needs at least 2 classes");
  }
  if (!lambda.empty()) {
    if (lambda.size() != tasks.size()) fail("lambda", "needs one row per task");
    for (const auto& row : lambda) {
      if (row.size() != modalities) fail("lambda", "needs one entry per modality");
      for (double l : row) {
        if (!(l >= 0.0)) fail("lambda", "weights must be non-negative");
      }
    }
  }
  if (block.expansion == 0) fail("block.expansion", "must be >= 1");
  if (block.ca_reduction == 0) fail("block.ca_reduction", "must be >= 1");
  if (block.restore_groups == 0 || block.gpc_groups == 0) fail("block.groups", "must be >= 1");
  // Each stage halves the resolution after stage 1; EMSCA needs S(S(x)).
  std::size_t h = (height + 1) / 2, w = (width + 1) / 2;
  if (stem_pool) h /= 2, w /= 2;
  for (std::size_t s = 1; s < stage_channels.size(); ++s) h = (h + 1) / 2, w = (w + 1) / 2;
  if (use_emsca && (h < 4 || w < 4)) fail("input_size", "too small: last stage would be below 4x4");
}

std::vector<std::vector<double>> NetworkConfig::resolved_lambda() const {
  if (!lambda.empty()) return lambda;
  return std::vector<std::vector<double>>(tasks.size(), std::vector<double>(modalities, 1.0));
}

// ----------------------------------------------------------------- MailNet

void MailNet::Branch::visit(const std::string& prefix, Visitor& v) {
  stem.visit(join_name(prefix, "stem.conv"), v);
  stem_bn.visit(join_name(prefix, "stem.bn"), v);
  for (std::size_t s = 0; s < erla.size(); ++s) {
    for (std::size_t b = 0; b < erla[s].size(); ++b) {
      erla[s][b].visit(join_name(prefix, stage_name(s) + ".erla" + std::to_string(b)), v);
    }
  }
  for (std::size_t s = 0; s < plain.size(); ++s) {
    for (std::size_t b = 0; b < plain[s].size(); ++b) {
      plain[s][b].visit(join_name(prefix, stage_name(s) + ".block" + std::to_string(b)), v);
    }
  }
}

MailNet::MailNet(NetworkConfig config, std::uint64_t root_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(root_seed, "init");
  const auto& cfg = config_;
  const std::size_t stages = cfg.stage_channels.size();

  for (std::size_t i = 0; i < cfg.modalities; ++i) {
    Branch br;
    ConvSpec stem;
    stem.in_channels = cfg.in_channels;
    stem.out_channels = cfg.stage_channels[0];
    stem.kernel_h = stem.kernel_w = 7;
    stem.stride = 2;
    br.stem = Conv2d(stem, rng);
    br.stem_bn = BatchNorm2d(cfg.stage_channels[0]);
    std::size_t in = cfg.stage_channels[0];
    for (std::size_t s = 0; s < stages; ++s) {
      const std::size_t out = cfg.stage_channels[s];
      const std::string key = branch_name(i) + "." + stage_name(s);
      if (cfg.use_erla) br.erla.emplace_back();
      else br.plain.emplace_back();
      for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
        const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
        if (cfg.use_erla) {
          br.erla.back().emplace_back(in, out, stride, cfg.block, rng, key + ".erla" + std::to_string(b));
        } else {
          br.plain.back().emplace_back(in, out, stride, rng);
        }
        in = out;
      }
    }
    branches.push_back(std::move(br));
  }

  EmcamOptions eo;
  eo.use_mfifa = cfg.use_mfifa;
  eo.use_emsca = cfg.use_emsca;
  eo.parallel = cfg.parallel;
  eo.use_dct = cfg.use_dct;
  for (std::size_t s = 0; s < stages; ++s) {
    if (cfg.use_mfifa || cfg.use_emsca) {
      emcam.emplace_back(Emcam(cfg.stage_channels[s], cfg.modalities, eo, rng, "emcam" + std::to_string(s + 1)));
    } else {
      emcam.emplace_back(std::nullopt);
    }
  }
  for (const auto& t : cfg.tasks) heads.emplace_back(cfg.stage_channels.back(), t.classes, rng);
  if (cfg.symmetric_init) symmetrize();
}

std::vector<Tensor> MailNet::forward_stem(const std::vector<Tensor>& xs, const ForwardContext& ctx) {
  if (xs.size() != config_.modalities) {
    throw ContractError("forward: expected " + std::to_string(config_.modalities) + " modalities, got " +
                        std::to_string(xs.size()));
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
      throw DimensionError("forward: modality " + std::to_string(i) + " expects [B, " +
                           std::to_string(config_.in_channels) + ", H, W], got " + shape_str(x.shape()));
    }
    if (i > 0 && x.dim(0) != xs[0].dim(0)) throw DimensionError("forward: modalities disagree on batch size");
    CostScope scope(ctx.cost, branch_name(i) + ".stem");
    Tensor y = relu(branches[i].stem_bn.forward(branches[i].stem.forward(x, ctx), ctx));
    if (config_.stem_pool) y = local_pool(y, PoolKind::Max);
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Tensor> MailNet::forward_stage(std::size_t stage, const std::vector<Tensor>& xs,
                                           const ForwardContext& ctx) {
  if (stage >= stage_count()) throw ContractError("forward_stage: stage index out of range");
  std::vector<Tensor> ys;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CostScope scope(ctx.cost, branch_name(i) + "." + stage_name(stage));
    Tensor y = xs[i];
    if (config_.use_erla) {
      for (auto& blk : branches[i].erla[stage]) y = blk.forward(y, ctx);
    } else {
      for (auto& blk : branches[i].plain[stage]) y = blk.forward(y, ctx);
    }
    ys.push_back(std::move(y));
  }
  if (emcam[stage]) {
    CostScope scope(ctx.cost, "emcam" + std::to_string(stage + 1));
    ys = emcam[stage]->forward(ys, ctx);
  }
  return ys;
}

std::vector<Tensor> MailNet::forward_head(const std::vector<Tensor>& xs, const ForwardContext& ctx) const {
  CostScope scope(ctx.cost, "head");
  const Tensor fused = xs.size() == 1 ? xs[0] : sum_all(xs);
  const Tensor pooled = reshape(global_pool(fused, PoolKind::Avg), {fused.dim(0), fused.dim(1)});
  std::vector<Tensor> logits;
  for (const auto& h : heads) logits.push_back(h.forward(pooled, ctx));
  return logits;
}

std::vector<Tensor> MailNet::forward(const std::vector<Tensor>& xs, const ForwardContext& ctx,
                                     std::vector<std::vector<Tensor>>* stage_outputs) {
  std::vector<Tensor> ys = forward_stem(xs, ctx);
  for (std::size_t s = 0; s < stage_count(); ++s) {
    ys = forward_stage(s, ys, ctx);
    if (stage_outputs) stage_outputs->push_back(ys);
  }
  return forward_head(ys, ctx);
}

void MailNet::make_robust(const RobustOptions& opts, std::uint64_t root_seed) {
  if (robust_) throw StateError("model already carries robust blocks");
  Rng rng(root_seed, "rpf");
  for (auto& br : branches) {
    for (auto& stage : br.erla) {
      for (auto& blk : stage) blk.make_robust(opts, rng);
    }
  }
  for (auto& e : emcam) {
    if (e) e->make_robust(opts, rng);
  }
  robust_ = true;
}

void MailNet::resample(Phase phase, Rng& rng) {
  for (auto& br : branches) {
    for (auto& stage : br.erla) {
      for (auto& blk : stage) blk.resample(phase, rng);
    }
  }
  for (auto& e : emcam) {
    if (e) e->resample(phase, rng);
  }
}

void MailNet::visit(Visitor& v) {
  for (std::size_t i = 0; i < branches.size(); ++i) branches[i].visit(branch_name(i), v);
  for (std::size_t s = 0; s < emcam.size(); ++s) {
    if (emcam[s]) emcam[s]->visit("emcam" + std::to_string(s + 1), v);
  }
  for (std::size_t t = 0; t < heads.size(); ++t) heads[t].visit("head." + config_.tasks[t].name, v);
}

std::vector<NamedTensor> MailNet::parameters() {
  CollectParams c;
  visit(c);
  return std::move(c.out);
}

void MailNet::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void MailNet::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

void MailNet::symmetrize() {
  CollectState src;
  branches[0].visit("", src);
  for (std::size_t i = 1; i < branches.size(); ++i) {
    CollectState dst;
    branches[i].visit("", dst);
    for (std::size_t k = 0; k < src.spans.size(); ++k) {
      std::copy(src.spans[k].begin(), src.spans[k].end(), dst.spans[k].begin());
    }
  }
}

// -------------------------------------------------------------------- loss

Tensor tmtl_loss(const std::vector<std::vector<Tensor>>& logits, const std::vector<std::vector<int>>& labels,
                 const std::vector<std::vector<double>>& lambda) {
  if (logits.size() != labels.size() || logits.size() != lambda.size()) {
    throw ContractError("tmtl_loss: logits, labels and lambda must have one entry per task");
  }
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const auto& row = logits[t];
    if (row.size() != 1 && row.size() != lambda[t].size()) {
      throw ContractError("tmtl_loss: task " + std::to_string(t) + " has " + std::to_string(row.size()) +
                          " logits tensors for " + std::to_string(lambda[t].size()) + " modalities");
    }
    for (double l : lambda[t]) {
      if (!(l >= 0.0)) throw ConfigError("tmtl_loss: lambda must be non-negative");
    }
    if (row.size() == 1) {
      double w = 0.0;
      for (double l : lambda[t]) w += l;
      terms.push_back(scale(cross_entropy(row[0], labels[t]), w));
    } else {
      for (std::size_t m = 0; m < row.size(); ++m) {
        terms.push_back(scale(cross_entropy(row[m], labels[t]), lambda[t][m]));
      }
    }
  }
  if (terms.empty()) throw ContractError("tmtl_loss: no tasks");
  return sum_all(terms);
}

Tensor tmtl_loss(const std::vector<Tensor>& logits, const std::vector<std::vector<int>>& labels,
                 const std::vector<std::vector<double>>& lambda) {
  std::vector<std::vector<Tensor>> rows;
  for (const auto& l : logits) rows.push_back({l});
  return tmtl_loss(rows, labels, lambda);
}

// -------------------------------------------------------------------- cost

CostReport count_params(MailNet& model) {
  CostReport r;
  for (const auto& p : model.parameters()) r.add(block_key(p.name), p.tensor.numel(), 0);
  return r;
}

CostReport count_flops(MailNet& model) {
  const auto& cfg = model.config();
  CostRecorder rec;
  ForwardContext ctx;
  ctx.cost = &rec;
  NoGradGuard guard;
  std::vector<Tensor> xs(cfg.modalities, Tensor::zeros({1, cfg.in_channels, cfg.height, cfg.width}));
  model.forward(xs, ctx);
  CostReport r;
  for (const auto& [block, macs] : rec.entries()) r.add(block, 0, macs);
  return r;
}

CostReport cost_report(MailNet& model) {
  CostReport r = count_params(model);
  for (const auto& e : count_flops(model).per_block) r.add(e.block, 0, e.macs);
  return r;
}

}  // namespace mail
