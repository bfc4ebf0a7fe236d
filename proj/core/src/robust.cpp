#include "mail/robust.hpp"

#include <algorithm>
#include <cmath>

#include "mail/errors.hpp"
#include "mail/metrics.hpp"
#include "mail/ops.hpp"

namespace mail {

AttackFamily parse_attack_family(const std::string& name) {
  if (name == "fgsm") return AttackFamily::Fgsm;
  if (name == "pgd") return AttackFamily::Pgd;
  if (name == "bim") return AttackFamily::Bim;
  if (name == "mim") return AttackFamily::Mim;
  throw ConfigError("unknown attack family '" + name + "' (expected fgsm, pgd, bim or mim)");
}

const char* attack_family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::Fgsm: return "fgsm";
    case AttackFamily::Pgd: return "pgd";
    case AttackFamily::Bim: return "bim";
    case AttackFamily::Mim: return "mim";
  }
  return "?";
}

AttackConfig AttackConfig::normalized() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack.epsilon must be finite and >= 0");
  if (!(clamp_lo < clamp_hi)) throw ConfigError("attack clamp range is empty");
  AttackConfig c = *this;
  if (family == AttackFamily::Fgsm) {
    c.iters = 1;
    c.step = epsilon;
    c.random_init = false;
    return c;
  }
  if (iters == 0) throw ConfigError("attack.iters must be >= 1");
  if (!(step > 0.0)) throw ConfigError("attack.step must be > 0");
  if (!c.random_init) c.random_init = family == AttackFamily::Pgd;
  return c;
}

Tensor AttackTarget::loss(const std::vector<Tensor>& out) const {
  if (out.size() != labels.size()) throw ContractError("attack target: one logits tensor per task expected");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double w = task_weights.empty() ? 1.0 : task_weights.at(t);
    terms.push_back(scale(cross_entropy(out[t], labels[t]), w));
  }
  return sum_all(terms);
}

std::vector<bool> AttackTarget::fooled(const std::vector<Tensor>& out) const {
  std::vector<bool> f(labels.empty() ? 0 : labels[0].size(), false);
  for (std::size_t t = 0; t < out.size(); ++t) {
    const std::size_t k = out[t].dim(1);
    const std::vector<double> scores(out[t].data().begin(), out[t].data().end());
    const auto pred = argmax_rows(scores, k);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (pred[i] != labels[t][i]) f[i] = true;
    }
  }
  return f;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<std::vector<Tensor>> attack_checkpoints(const AttackTarget& target, const std::vector<Tensor>& xs,
                                                    const AttackConfig& config,
                                                    const std::vector<std::size_t>& counts, Rng& rng) {
  const AttackConfig cfg = config.normalized();
  if (xs.empty()) throw ContractError("attack: no input modalities");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > cfg.iters) throw ConfigError("attack checkpoint beyond the configured iteration count");
    if (i > 0 && counts[i] <= counts[i - 1]) throw ConfigError("attack checkpoints must be strictly ascending");
  }
  const std::size_t batch = xs[0].dim(0);
  const std::size_t m = xs.size();

  std::vector<std::vector<double>> orig(m), cur(m);
  std::vector<std::size_t> per(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (xs[j].dim(0) != batch) throw DimensionError("attack: modalities disagree on batch size");
    orig[j].assign(xs[j].data().begin(), xs[j].data().end());
    per[j] = xs[j].numel() / batch;
  }

  auto snapshot = [&](const std::vector<std::vector<double>>& vals) {
    std::vector<Tensor> out;
    for (std::size_t j = 0; j < m; ++j) out.push_back(Tensor::from(xs[j].shape(), vals[j]));
    return out;
  };

  std::vector<std::vector<Tensor>> result;
  if (cfg.epsilon == 0.0) {
    for (std::size_t i = 0; i < counts.size(); ++i) result.push_back(snapshot(orig));
    return result;
  }

  const double eps = cfg.epsilon;
  cur = orig;
  if (*cfg.random_init) {
    for (std::size_t j = 0; j < m; ++j) {
      for (double& v : cur[j]) v = std::clamp(v + rng.uniform(-eps, eps), cfg.clamp_lo, cfg.clamp_hi);
    }
  }

  std::vector<bool> frozen(batch, false);
  std::vector<std::vector<double>> kept = cur;  // values of frozen samples
  std::vector<std::vector<double>> velocity(m);
  for (std::size_t j = 0; j < m; ++j) velocity[j].assign(cur[j].size(), 0.0);

  auto freeze = [&](std::size_t i) {
    frozen[i] = true;
    for (std::size_t j = 0; j < m; ++j) {
      std::copy_n(cur[j].begin() + static_cast<std::ptrdiff_t>(i * per[j]), per[j],
                  kept[j].begin() + static_cast<std::ptrdiff_t>(i * per[j]));
    }
  };
  auto current = [&]() {
    std::vector<std::vector<double>> vals = cur;
    for (std::size_t i = 0; i < batch; ++i) {
      if (!frozen[i]) continue;
      for (std::size_t j = 0; j < m; ++j) {
        std::copy_n(kept[j].begin() + static_cast<std::ptrdiff_t>(i * per[j]), per[j],
                    vals[j].begin() + static_cast<std::ptrdiff_t>(i * per[j]));
      }
    }
    return vals;
  };

  std::size_t next = 0;
  for (std::size_t k = 0;; ++k) {
    if (k == cfg.iters) {
      while (next < counts.size()) result.push_back(snapshot(current())), ++next;
      break;
    }
    std::vector<Tensor> leaves;
    for (std::size_t j = 0; j < m; ++j) leaves.push_back(Tensor::from(xs[j].shape(), cur[j], true));
    const auto logits = target.logits(leaves);
    if (cfg.keep_first_success) {
      const auto f = target.fooled(logits);
      for (std::size_t i = 0; i < batch; ++i) {
        if (f[i] && !frozen[i]) freeze(i);
      }
    }
    if (next < counts.size() && counts[next] == k) result.push_back(snapshot(current())), ++next;

    target.loss(logits).backward();

    std::vector<double> l1(batch, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const auto g = leaves[j].grad();
      for (std::size_t e = 0; e < g.size(); ++e) {
        if (!std::isfinite(g[e])) {
          throw NumericError("attack: non-finite input gradient at iteration " + std::to_string(k) + ", modality " +
                             std::to_string(j) + ", sample " + std::to_string(e / per[j]) + ", element " +
                             std::to_string(e % per[j]));
        }
        l1[e / per[j]] += std::abs(g[e]);
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      const auto g = leaves[j].grad();
      for (std::size_t e = 0; e < g.size(); ++e) {
        const std::size_t i = e / per[j];
        if (frozen[i]) continue;
        double dir;
        if (cfg.family == AttackFamily::Mim) {
          velocity[j][e] = cfg.momentum * velocity[j][e] + (l1[i] > 0.0 ? g[e] / l1[i] : 0.0);
          dir = sign(velocity[j][e]);
        } else {
          dir = sign(g[e]);
        }
        const double x0 = orig[j][e];
        const double stepped = std::clamp(cur[j][e] + cfg.step * dir, x0 - eps, x0 + eps);
        cur[j][e] = std::clamp(stepped, cfg.clamp_lo, cfg.clamp_hi);
      }
    }
  }
  return result;
}

std::vector<Tensor> attack(const AttackTarget& target, const std::vector<Tensor>& xs, const AttackConfig& cfg,
                           Rng& rng) {
  const AttackConfig c = cfg.normalized();
  return attack_checkpoints(target, xs, c, {c.iters}, rng).front();
}

AttackTarget network_target(MailNet& net, const std::vector<std::vector<int>>& labels, Phase phase,
                            NoiseSource* noise) {
  AttackTarget t;
  t.labels = labels;
  for (const auto& row : net.config().resolved_lambda()) {
    double w = 0.0;
    for (double l : row) w += l;
    t.task_weights.push_back(w);
  }
  t.logits = [&net, phase, noise](const std::vector<Tensor>& xs) {
    ForwardContext ctx;
    ctx.training = false;
    ctx.phase = phase;
    ctx.noise = noise;
    return net.forward(xs, ctx);
  };
  return t;
}

std::vector<Tensor> rpan_layer(MailNet& net, std::size_t stage, const std::vector<Tensor>& xs,
                               const ForwardContext& ctx) {
  if (!net.robust()) throw StateError("rpan_layer: the network carries no random projection banks");
  if (stage >= net.stage_count()) throw ContractError("rpan_layer: stage index out of range");
  return net.forward_stage(stage, xs, ctx);
}

void RobustConfig::validate() const {
  if (!(blocks.rpf_fraction >= 0.0 && blocks.rpf_fraction <= 1.0)) {
    throw ConfigError("robust.rpf_fraction must lie in [0, 1]");
  }
  if (blocks.rpf_sigma && !(*blocks.rpf_sigma > 0.0)) throw ConfigError("robust.rpf_sigma must be > 0");
  if (!(man_std >= 0.0)) throw ConfigError("robust.man_std must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("robust.weight_decay must be >= 0");
}

RobustRuntime::RobustRuntime(std::uint64_t root_seed, double man_std)
    : resample_rng(root_seed, "resample"),
      attack_rng(root_seed, "attack"),
      noise_attack(derive_seed(root_seed, "man_attack"), man_std),
      noise_inference(derive_seed(root_seed, "man_inference"), man_std) {}

namespace {

class SelectParams : public Visitor {
 public:
  explicit SelectParams(std::function<bool(const std::string&)> keep) : keep_(std::move(keep)) {}
  void parameter(const std::string& name, Tensor& t) override {
    if (keep_(name) && t.numel() > 0) parts.push_back(reshape(t, {t.numel()}));
  }
  std::vector<Tensor> parts;

 private:
  std::function<bool(const std::string&)> keep_;
};

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

Tensor group_norm(MailNet& net, std::function<bool(const std::string&)> keep) {
  SelectParams sel(std::move(keep));
  net.visit(sel);
  if (sel.parts.empty()) return {};
  return l2_norm(sel.parts.size() == 1 ? sel.parts[0] : concat0(sel.parts));
}

}  // namespace

Tensor rpf_trainable_norm(MailNet& net) {
  if (!net.robust()) return {};
  return group_norm(net, [](const std::string& n) {
    return n.find("msgdc") != std::string::npos && ends_with(n, ".weight");
  });
}

Tensor man_delta_norm(MailNet& net) {
  return group_norm(net, [](const std::string& n) { return ends_with(n, ".delta"); });
}

TrainStepStats train_step(MailNet& net, const std::vector<Tensor>& xs, const std::vector<std::vector<int>>& labels,
                          Sgd& opt, const ForwardContext& ctx, double rho) {
  opt.zero_grad();
  const Tensor task = tmtl_loss(net.forward(xs, ctx), labels, net.config().resolved_lambda());
  TrainStepStats st;
  st.samples = labels.empty() ? 0 : labels[0].size();
  st.loss = task.item();
  if (!std::isfinite(st.loss)) throw NumericError("training loss is not finite");
  Tensor total = task;
  if (rho > 0.0) {
    std::vector<Tensor> norms;
    if (Tensor a = rpf_trainable_norm(net); a.defined()) norms.push_back(a);
    if (Tensor b = man_delta_norm(net); b.defined()) norms.push_back(b);
    if (!norms.empty()) {
      const Tensor reg = scale(sum_all(norms), rho);
      st.reg = reg.item();
      total = add(task, reg);
    }
  }
  total.backward();
  opt.step();
  return st;
}

TrainStepStats adversarial_train_step(MailNet& net, const Batch& batch, const RobustConfig& rcfg,
                                      const AttackConfig& acfg, Sgd& opt, RobustRuntime& rt) {
  rcfg.validate();
  net.resample(Phase::Attack, rt.resample_rng);
  std::vector<Tensor> adv;
  {
    FrozenParams frozen(net);
    const AttackTarget target = network_target(net, batch.labels, Phase::Attack, &rt.noise_attack);
    adv = attack(target, batch.xs, acfg, rt.attack_rng);
  }
  net.resample(Phase::Inference, rt.resample_rng);
  ForwardContext ctx;
  ctx.training = true;
  ctx.phase = Phase::Inference;
  ctx.noise = &rt.noise_inference;
  return train_step(net, adv, batch.labels, opt, ctx, rcfg.weight_decay);
}

}  // namespace mail
