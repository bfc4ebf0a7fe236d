#pragma once

// Multi-branch MAIL network: one convolutional branch per modality, four
// stages of ERLA blocks each followed by EMCAM fusion across branches, and a
// linear head per task on the summed modality representation.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mail/attention.hpp"
#include "mail/cost.hpp"
#include "mail/layers.hpp"
#include "mail/tensor.hpp"

namespace mail {

struct TaskSpec {
  std::string name;
  std::size_t classes = 2;
};

struct NetworkConfig {
  std::size_t modalities = 2;
  std::size_t in_channels = 3;
  std::size_t height = 128;
  std::size_t width = 128;
  std::vector<std::size_t> stage_channels{64, 128, 256, 512};
  std::vector<std::size_t> stage_depths{2, 2, 2, 2};
  bool stem_pool = false;  // optional 2x2 max pool after the 7x7 stem
  std::vector<TaskSpec> tasks{{"task0", 4}};
  /// lambda[t][m]; empty means 1 everywhere.
  std::vector<std::vector<double>> lambda;

  bool use_erla = true;
  bool use_mfifa = true;
  bool use_emsca = true;
  bool parallel = true;
  bool use_dct = true;
  bool symmetric_init = false;
  BlockOptions block;

  /// Paper-scale layout used for cost reporting.
  static NetworkConfig full();
  /// Desk-scale layout used for training runs.
  static NetworkConfig desk();

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// lambda with defaults applied: [tasks][modalities].
  std::vector<std::vector<double>> resolved_lambda() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class MailNet {
 public:
  MailNet(NetworkConfig config, std::uint64_t root_seed);

  /// Per-task logits [B, K_t]. `stage_outputs`, when given, receives the
  /// per-modality outputs of every stage (after EMCAM).
  std::vector<Tensor> forward(const std::vector<Tensor>& xs, const ForwardContext& ctx,
                              std::vector<std::vector<Tensor>>* stage_outputs = nullptr);

  /// Per-modality stem output.
  std::vector<Tensor> forward_stem(const std::vector<Tensor>& xs, const ForwardContext& ctx);
  /// One stage: the ERLA blocks of every branch followed by EMCAM fusion.
  std::vector<Tensor> forward_stage(std::size_t stage, const std::vector<Tensor>& xs, const ForwardContext& ctx);
  std::vector<Tensor> forward_head(const std::vector<Tensor>& xs, const ForwardContext& ctx) const;

  /// Replaces a fraction of the MSGDC filters by random projections and
  /// installs noise sites at every attention modulation.
  void make_robust(const RobustOptions& opts, std::uint64_t root_seed);
  bool robust() const { return robust_; }
  /// Redraws every random projection bank of the given phase.
  void resample(Phase phase, Rng& rng);

  void visit(Visitor& v);
  /// Learnable tensors in visiting order.
  std::vector<NamedTensor> parameters();
  void set_requires_grad(bool on);
  void zero_grad();

  /// Copies every parameter and buffer of branch 0 into the other branches.
  void symmetrize();

  const NetworkConfig& config() const { return config_; }
  std::size_t stage_count() const { return config_.stage_channels.size(); }

  struct Branch {
    Conv2d stem;
    BatchNorm2d stem_bn;
    std::vector<std::vector<Erla>> erla;         // [stage][block]
    std::vector<std::vector<BasicBlock>> plain;  // [stage][block] when ERLA is off
    void visit(const std::string& prefix, Visitor& v);
  };

  std::vector<Branch> branches;
  std::vector<std::optional<Emcam>> emcam;  // per stage; empty when both fusion blocks are off
  std::vector<Linear> heads;

 private:
  NetworkConfig config_;
  bool robust_ = false;
};

/// sum_t sum_m lambda[t][m] * CE(logits[t][m], labels[t]). When a task
/// carries a single logits tensor it stands for every modality of that task.
Tensor tmtl_loss(const std::vector<std::vector<Tensor>>& logits, const std::vector<std::vector<int>>& labels,
                 const std::vector<std::vector<double>>& lambda);
/// Fused-head form: one logits tensor per task.
Tensor tmtl_loss(const std::vector<Tensor>& logits, const std::vector<std::vector<int>>& labels,
                 const std::vector<std::vector<double>>& lambda);

/// Learnable scalars per top-level block (RPF banks and BN statistics excluded).
CostReport count_params(MailNet& model);
/// MACs of one forward pass at batch size 1 and the configured input size.
CostReport count_flops(MailNet& model);
/// Parameters and MACs merged by block.
CostReport cost_report(MailNet& model);

}  // namespace mail
