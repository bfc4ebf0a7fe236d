#pragma once

// Robust-MAIL: white-box attacks, the RPAN layer wrapper and the adversarial
// training step with attack-phase / inference-phase resampling.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mail/dataset.hpp"
#include "mail/network.hpp"
#include "mail/noise.hpp"
#include "mail/optim.hpp"
#include "mail/rng.hpp"

namespace mail {

enum class AttackFamily { Fgsm, Pgd, Bim, Mim };

AttackFamily parse_attack_family(const std::string& name);
const char* attack_family_name(AttackFamily f);

struct AttackConfig {
  AttackFamily family = AttackFamily::Pgd;
  double epsilon = 4.0 / 255.0;
  double step = 10.0 / 255.0;
  std::size_t iters = 10;
  /// Uniform start inside the ball. Defaults on for pgd, off otherwise.
  std::optional<bool> random_init;
  double momentum = 1.0;  // mim decay
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  /// Keep, per sample, the first iterate that is misclassified instead of
  /// continuing to ascend from it. Makes robust accuracy monotone in the
  /// iteration count within one run.
  bool keep_first_success = false;

  /// Throws ConfigError on a negative epsilon, zero iterations or a
  /// non-positive step. fgsm is normalized to one step of size epsilon.
  AttackConfig normalized() const;
};

/// A differentiable classifier seen by the attacks.
struct AttackTarget {
  /// Per-task logits [B, K_t] for the given per-modality inputs.
  std::function<std::vector<Tensor>(const std::vector<Tensor>&)> logits;
  std::vector<std::vector<int>> labels;  // [task][B]
  std::vector<double> task_weights;      // empty: every task weighs 1

  Tensor loss(const std::vector<Tensor>& logits_out) const;
  /// Per-sample flag: true when any task is misclassified.
  std::vector<bool> fooled(const std::vector<Tensor>& logits_out) const;
};

/// X* after cfg.iters steps.
std::vector<Tensor> attack(const AttackTarget& target, const std::vector<Tensor>& xs, const AttackConfig& cfg,
                           Rng& rng);

/// X* at every requested iteration count from a single run. Counts must be
/// ascending and at most cfg.iters; count 0 is the starting point.
std::vector<std::vector<Tensor>> attack_checkpoints(const AttackTarget& target, const std::vector<Tensor>& xs,
                                                    const AttackConfig& cfg, const std::vector<std::size_t>& counts,
                                                    Rng& rng);

/// Attack target for a network in eval mode under the given phase and noise.
AttackTarget network_target(MailNet& net, const std::vector<std::vector<int>>& labels, Phase phase,
                            NoiseSource* noise);

/// Disables parameter gradients for the lifetime of the guard.
class FrozenParams {
 public:
  explicit FrozenParams(MailNet& net) : net_(net) { net_.set_requires_grad(false); }
  ~FrozenParams() { net_.set_requires_grad(true); }
  FrozenParams(const FrozenParams&) = delete;
  FrozenParams& operator=(const FrozenParams&) = delete;

 private:
  MailNet& net_;
};

/// One RPAN layer of a robust network: the ERLA blocks of stage `stage` in
/// every branch followed by the noisy EMCAM recalibration.
std::vector<Tensor> rpan_layer(MailNet& net, std::size_t stage, const std::vector<Tensor>& xs,
                               const ForwardContext& ctx);

struct RobustConfig {
  RobustOptions blocks;
  double man_std = 0.25;       // stddev of eta_l around 1
  double weight_decay = 1e-4;  // rho
  bool stochastic_inference = true;

  void validate() const;
};

/// Random streams of the robust pipeline, all derived from one root seed.
struct RobustRuntime {
  RobustRuntime(std::uint64_t root_seed, double man_std);

  Rng resample_rng;
  Rng attack_rng;
  NoiseSource noise_attack;
  NoiseSource noise_inference;
};

/// L2 norm of the trainable rows of every RPF convolution.
Tensor rpf_trainable_norm(MailNet& net);
/// L2 norm of the learnable MAN channel weights.
Tensor man_delta_norm(MailNet& net);

struct TrainStepStats {
  double loss = 0.0;  // task loss
  double reg = 0.0;   // rho * (norms), zero when rho == 0
  std::size_t samples = 0;
};

/// Plain supervised step on (already transformed) inputs.
TrainStepStats train_step(MailNet& net, const std::vector<Tensor>& xs, const std::vector<std::vector<int>>& labels,
                          Sgd& opt, const ForwardContext& ctx, double rho = 0.0);

/// Resample [A], craft X*, resample [I], minimize the task loss on X* plus
/// rho * (trainable RPF norm + MAN weight norm), step.
TrainStepStats adversarial_train_step(MailNet& net, const Batch& batch, const RobustConfig& rcfg,
                                      const AttackConfig& acfg, Sgd& opt, RobustRuntime& rt);

}  // namespace mail
