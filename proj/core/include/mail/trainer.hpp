#pragma once

// Training loop, evaluation and attack sweeps over a Dataset.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mail/augment.hpp"
#include "mail/dataset.hpp"
#include "mail/metrics.hpp"
#include "mail/network.hpp"
#include "mail/optim.hpp"
#include "mail/robust.hpp"

namespace mail {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 32;
  SgdConfig sgd;
  PlateauConfig plateau;
  /// Stop as soon as the monitored accuracy reaches this value; 0 disables.
  double target_acc = 0.0;
  bool adversarial = false;
  bool augment = false;
  AugmentSpec augment_spec;
  std::size_t eval_batch = 100;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;

  /// "epoch=3 train_loss=... val_loss=... val_acc=... lr=..."
  std::string line() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<std::size_t> target_epoch;  // first epoch meeting target_acc
  Split monitored = Split::Val;
  /// Accuracy on the (unaugmented) training split after the last epoch.
  double final_train_acc = 0.0;
};

/// Inputs to a forward pass at evaluation time.
struct EvalOptions {
  Phase phase = Phase::Inference;
  NoiseSource* noise = nullptr;
  std::size_t batch = 100;
};

struct Evaluation {
  std::vector<MetricsReport> tasks;
  double loss = 0.0;     // mean task loss over samples
  double joint_acc = 0;  // every task correct
};

/// Split used to monitor training: validation when present, else test.
Split monitor_split(const Dataset& ds);

/// Trains in place. Adversarial training requires `robust` and `attack`;
/// when the network is robust, stochastic forward passes use `runtime`.
TrainResult train(MailNet& net, const Dataset& ds, const TrainConfig& cfg, std::uint64_t seed,
                  RobustRuntime* runtime = nullptr, const RobustConfig* robust = nullptr,
                  const AttackConfig* attack = nullptr,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Per-task logits for the given samples, eval mode.
std::vector<Tensor> predict(MailNet& net, const Dataset& ds, const std::vector<std::size_t>& idx,
                            const EvalOptions& opts);
Evaluation evaluate(MailNet& net, const Dataset& ds, Split split, const EvalOptions& opts);
Evaluation evaluate_logits(const std::vector<Tensor>& logits, const std::vector<std::vector<int>>& labels,
                           const std::vector<std::vector<double>>& lambda);

/// Evaluation options for a network: robust networks draw fresh [I]-phase
/// noise when stochastic inference is on.
EvalOptions eval_options(const MailNet& net, RobustRuntime* runtime, bool stochastic_inference,
                         std::size_t batch = 100);

/// Fraction of samples whose predicted labels agree across two inference
/// passes separated by an [I]-phase resample.
double prediction_agreement(MailNet& net, const Dataset& ds, Split split, RobustRuntime& runtime);

struct SweepRow {
  std::string attack;
  double epsilon = 0.0;
  std::size_t iters = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  std::uint64_t seed = 0;
};

/// Attacks up to `max_samples` samples of `split` once per batch and reports
/// robust accuracy at every iteration count in `iters` (ascending). With a
/// runtime the attack sees [A]-phase banks and scoring uses [I]-phase banks.
std::vector<SweepRow> attack_sweep(MailNet& net, const Dataset& ds, Split split, const AttackConfig& base,
                                   const std::vector<std::size_t>& iters, std::size_t max_samples,
                                   std::uint64_t seed, RobustRuntime* runtime = nullptr,
                                   bool stochastic_inference = true, std::size_t batch = 50);

/// CSV with header attack,epsilon,iters,clean_acc,robust_acc,seed.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Deterministic plain-text rendering of a metrics report.
std::string format_report(const MetricsReport& r);

}  // namespace mail
