#include "mail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mail/errors.hpp"
#include "mail/ops.hpp"

namespace mail {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.shapes = ds.shapes;
  out.task_classes = ds.task_classes;
  out.labels.assign(ds.labels.size(), {});
  const std::size_t sb = ds.sample_bytes();
  out.pixels.reserve(idx.size() * sb);
  for (std::size_t i : idx) {
    const std::uint8_t* p = ds.sample(i, 0);
    out.pixels.insert(out.pixels.end(), p, p + sb);
    for (std::size_t t = 0; t < ds.labels.size(); ++t) out.labels[t].push_back(ds.labels[t][i]);
    out.splits.push_back(ds.splits[i]);
  }
  return out;
}

std::vector<int> joint_correct(const std::vector<Tensor>& logits, const std::vector<std::vector<int>>& labels) {
  const std::size_t n = labels.empty() ? 0 : labels[0].size();
  std::vector<int> ok(n, 1);
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const std::vector<double> s(logits[t].data().begin(), logits[t].data().end());
    const auto pred = argmax_rows(s, logits[t].dim(1));
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] != labels[t][i]) ok[i] = 0;
    }
  }
  return ok;
}

std::vector<Tensor> forward_eval(MailNet& net, const std::vector<Tensor>& xs, const EvalOptions& opts) {
  NoGradGuard guard;
  ForwardContext ctx;
  ctx.training = false;
  ctx.phase = opts.phase;
  ctx.noise = opts.noise;
  return net.forward(xs, ctx);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch < 2) throw ConfigError("train.batch must be >= 2");
  if (!(sgd.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(target_acc >= 0.0 && target_acc <= 1.0)) throw ConfigError("train.target_acc must lie in [0, 1]");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) throw ConfigError("train.plateau_factor must lie in (0, 1)");
  if (eval_batch == 0) throw ConfigError("eval batch must be >= 1");
}

std::string EpochLog::line() const {
  return "epoch=" + std::to_string(epoch) + " train_loss=" + fmt("%.6f", train_loss) +
         " val_loss=" + fmt("%.6f", val_loss) + " val_acc=" + fmt("%.4f", val_acc) + " lr=" + fmt("%.3g", lr);
}

Split monitor_split(const Dataset& ds) {
  return ds.indices(Split::Val).empty() ? Split::Test : Split::Val;
}

EvalOptions eval_options(const MailNet& net, RobustRuntime* runtime, bool stochastic_inference, std::size_t batch) {
  EvalOptions o;
  o.phase = Phase::Inference;
  o.noise = (net.robust() && runtime && stochastic_inference) ? &runtime->noise_inference : nullptr;
  o.batch = batch;
  return o;
}

TrainResult train(MailNet& net, const Dataset& ds, const TrainConfig& cfg, std::uint64_t seed,
                  RobustRuntime* runtime, const RobustConfig* robust, const AttackConfig* attack,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  ds.validate();
  if (cfg.adversarial && (!runtime || !robust || !attack)) {
    throw ConfigError("adversarial training needs robust and attack settings");
  }
  if (net.robust() && !runtime) throw ConfigError("a robust network needs a runtime for its random streams");

  Dataset train_set = subset(ds, ds.indices(Split::Train));
  if (train_set.size() < 2) throw DataError("training split holds fewer than two samples");
  if (cfg.augment) {
    Rng aug(seed, "augment");
    train_set = augment_dataset(train_set, cfg.augment_spec, aug);
  }

  TrainResult result;
  result.monitored = monitor_split(ds);
  if (ds.indices(result.monitored).empty()) throw DataError("no validation or test samples to monitor");

  Sgd opt(net.parameters(), cfg.sgd);
  PlateauScheduler sched(cfg.sgd.lr, cfg.plateau);
  Rng shuffle(seed, "shuffle");
  const double rho = robust ? robust->weight_decay : 0.0;
  const bool stochastic = robust ? robust->stochastic_inference : true;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr_used = opt.lr();
    const auto perm = shuffle.permutation(train_set.size());
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch) {
      const std::size_t end = std::min(perm.size(), start + cfg.batch);
      if (end - start < 2) break;  // batch statistics need two samples
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                         perm.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch b = train_set.batch(idx);
      TrainStepStats st;
      if (cfg.adversarial) {
        st = adversarial_train_step(net, b, *robust, *attack, opt, *runtime);
      } else {
        ForwardContext ctx;
        ctx.training = true;
        ctx.phase = Phase::Inference;
        if (net.robust()) {
          net.resample(Phase::Inference, runtime->resample_rng);
          ctx.noise = &runtime->noise_inference;
        }
        st = train_step(net, b.xs, b.labels, opt, ctx, rho);
      }
      loss_sum += st.loss * static_cast<double>(st.samples);
      seen += st.samples;
    }
    const Evaluation ev = evaluate(net, ds, result.monitored, eval_options(net, runtime, stochastic, cfg.eval_batch));
    opt.set_lr(sched.step(ev.loss));

    EpochLog log{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1)), ev.loss, ev.joint_acc,
                 lr_used};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (cfg.target_acc > 0.0 && ev.joint_acc >= cfg.target_acc) {
      result.target_epoch = epoch;
      break;
    }
  }
  result.final_train_acc =
      evaluate(net, ds, Split::Train, eval_options(net, runtime, stochastic, cfg.eval_batch)).joint_acc;
  return result;
}

std::vector<Tensor> predict(MailNet& net, const Dataset& ds, const std::vector<std::size_t>& idx,
                            const EvalOptions& opts) {
  const std::size_t tasks = ds.task_classes.size();
  std::vector<std::vector<double>> rows(tasks);
  for (std::size_t start = 0; start < idx.size(); start += opts.batch) {
    const std::size_t end = std::min(idx.size(), start + opts.batch);
    const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                        idx.begin() + static_cast<std::ptrdiff_t>(end));
    const auto out = forward_eval(net, ds.batch(part).xs, opts);
    for (std::size_t t = 0; t < tasks; ++t) rows[t].insert(rows[t].end(), out[t].data().begin(), out[t].data().end());
  }
  std::vector<Tensor> logits;
  for (std::size_t t = 0; t < tasks; ++t) {
    logits.push_back(Tensor::from({idx.size(), ds.task_classes[t]}, std::move(rows[t])));
  }
  return logits;
}

Evaluation evaluate_logits(const std::vector<Tensor>& logits, const std::vector<std::vector<int>>& labels,
                           const std::vector<std::vector<double>>& lambda) {
  Evaluation ev;
  for (std::size_t t = 0; t < logits.size(); ++t) ev.tasks.push_back(compute_metrics(logits[t], labels[t]));
  {
    NoGradGuard guard;
    ev.loss = tmtl_loss(logits, labels, lambda).item();
  }
  const auto ok = joint_correct(logits, labels);
  double c = 0.0;
  for (int v : ok) c += v;
  ev.joint_acc = ok.empty() ? 0.0 : c / static_cast<double>(ok.size());
  return ev;
}

Evaluation evaluate(MailNet& net, const Dataset& ds, Split split, const EvalOptions& opts) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw DataError(std::string("split '") + split_name(split) + "' is empty");
  std::vector<std::vector<int>> labels(ds.labels.size());
  for (std::size_t t = 0; t < ds.labels.size(); ++t) {
    for (std::size_t i : idx) labels[t].push_back(static_cast<int>(ds.labels[t][i]));
  }
  return evaluate_logits(predict(net, ds, idx, opts), labels, net.config().resolved_lambda());
}

double prediction_agreement(MailNet& net, const Dataset& ds, Split split, RobustRuntime& runtime) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw DataError(std::string("split '") + split_name(split) + "' is empty");
  const EvalOptions opts = eval_options(net, &runtime, true);
  std::vector<std::vector<std::vector<int>>> preds;
  for (int pass = 0; pass < 2; ++pass) {
    net.resample(Phase::Inference, runtime.resample_rng);
    const auto logits = predict(net, ds, idx, opts);
    std::vector<std::vector<int>> p;
    for (const auto& l : logits) {
      const std::vector<double> s(l.data().begin(), l.data().end());
      p.push_back(argmax_rows(s, l.dim(1)));
    }
    preds.push_back(std::move(p));
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    bool same = true;
    for (std::size_t t = 0; t < preds[0].size(); ++t) same = same && preds[0][t][i] == preds[1][t][i];
    agree += same ? 1 : 0;
  }
  return static_cast<double>(agree) / static_cast<double>(idx.size());
}

std::vector<SweepRow> attack_sweep(MailNet& net, const Dataset& ds, Split split, const AttackConfig& base,
                                   const std::vector<std::size_t>& iters, std::size_t max_samples,
                                   std::uint64_t seed, RobustRuntime* runtime, bool stochastic_inference,
                                   std::size_t batch) {
  if (iters.empty()) throw ConfigError("attack sweep needs at least one iteration count");
  if (net.robust() && !runtime) throw ConfigError("a robust network needs a runtime for its random streams");
  if (batch == 0) throw ConfigError("attack batch must be >= 1");
  AttackConfig cfg = base;
  std::vector<std::size_t> counts = iters;
  if (cfg.family == AttackFamily::Fgsm) {
    if (counts != std::vector<std::size_t>{1}) throw ConfigError("fgsm takes exactly one step; use attack.iters = 1");
  } else {
    cfg.iters = counts.back();
  }
  cfg = cfg.normalized();

  auto idx = ds.indices(split);
  if (max_samples > 0 && idx.size() > max_samples) idx.resize(max_samples);
  if (idx.empty()) throw DataError(std::string("split '") + split_name(split) + "' is empty");

  Rng rng(seed, "attack");
  const EvalOptions eo = eval_options(net, runtime, stochastic_inference);
  std::size_t clean = 0;
  std::vector<std::size_t> robust(counts.size(), 0);
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::size_t end = std::min(idx.size(), start + batch);
    const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                        idx.begin() + static_cast<std::ptrdiff_t>(end));
    const Batch b = ds.batch(part);
    if (runtime && net.robust()) net.resample(Phase::Inference, runtime->resample_rng);
    for (int v : joint_correct(forward_eval(net, b.xs, eo), b.labels)) clean += static_cast<std::size_t>(v);

    std::vector<std::vector<Tensor>> adv;
    {
      FrozenParams frozen(net);
      if (runtime && net.robust()) net.resample(Phase::Attack, runtime->resample_rng);
      const AttackTarget target =
          runtime && net.robust()
              ? network_target(net, b.labels, Phase::Attack, &runtime->noise_attack)
              : network_target(net, b.labels, Phase::Inference, nullptr);
      adv = attack_checkpoints(target, b.xs, cfg, counts, rng);
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
      for (int v : joint_correct(forward_eval(net, adv[c], eo), b.labels)) robust[c] += static_cast<std::size_t>(v);
    }
  }
  std::vector<SweepRow> rows;
  const double n = static_cast<double>(idx.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    rows.push_back({attack_family_name(cfg.family), cfg.epsilon, counts[c], static_cast<double>(clean) / n,
                    static_cast<double>(robust[c]) / n, seed});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "attack,epsilon,iters,clean_acc,robust_acc,seed\n";
  for (const auto& r : rows) {
    out += r.attack + "," + fmt("%.8f", r.epsilon) + "," + std::to_string(r.iters) + "," +
           fmt("%.6f", r.clean_acc) + "," + fmt("%.6f", r.robust_acc) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "samples " << r.samples << "\n";
  os << "acc " << fmt("%.17g", r.acc) << "\n";
  os << "macro_f1 " << fmt("%.17g", r.macro_f1) << "\n";
  os << "macro_auc " << (r.auc_defined ? fmt("%.17g", r.macro_auc) : std::string("undefined")) << "\n";
  for (std::size_t k = 0; k < r.classes; ++k) {
    os << "class " << k << " support " << r.support[k] << " precision " << fmt("%.17g", r.precision[k])
       << " recall " << fmt("%.17g", r.recall[k]) << " f1 " << fmt("%.17g", r.f1[k]) << "\n";
  }
  os << "confusion";
  for (const auto& row : r.confusion) {
    os << "\n ";
    for (std::size_t v : row) os << " " << v;
  }
  os << "\n";
  return os.str();
}

}  // namespace mail
