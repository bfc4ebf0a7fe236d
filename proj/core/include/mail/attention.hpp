#pragma once

// Attention blocks of the MAIL network.
//
//   MSGDC  sum of a 1x1 group-pointwise conv and 3x3 / 5x5 depthwise convs
//   CA     channel attention over GMP/GAP/GMN descriptors
//   EMILA  x + GPC(CA(shuffle(MSGDC(x))))
//   ERLA   ReLU(skip(x) + BN(GPC(EMILA(ReLU(BN(EMILA(x)))))))
//   MFIFA  frequency-domain attention from pooled low/high/mean components
//   EMSCA  spatial attention from pooled MSGDC features with modality pairing
//   EMCAM  A_m = sigmoid(theta_f * MFIFA + theta_s * EMSCA), x_i * A_m * theta_m

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mail/layers.hpp"
#include "mail/noise.hpp"
#include "mail/rng.hpp"
#include "mail/tensor.hpp"

namespace mail {

/// Hyperparameters shared by the convolutional attention blocks.
struct BlockOptions {
  std::size_t expansion = 2;       // MSGDC width multiplier inside EMILA
  std::size_t gpc_groups = 1;      // groups of the MSGDC pointwise branch
  std::size_t restore_groups = 2;  // groups of the restoring GPC (and shuffle)
  std::size_t ca_reduction = 4;    // hidden width of f is C / reduction
};

/// Stochastic defenses applied to a block after construction.
struct RobustOptions {
  double rpf_fraction = 0.5;          // share of filters replaced per MSGDC conv
  std::optional<double> rpf_sigma;    // default 1 / sqrt(fan_in)
  bool rpf = true;
  bool man = true;
};

// ------------------------------------------------------------------- MSGDC

class Msgdc {
 public:
  Msgdc() = default;
  Msgdc(std::size_t channels, std::size_t expansion, std::size_t gpc_groups, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  std::size_t out_channels() const { return gpc.spec().out_channels; }

  void enable_rpf(const RobustOptions& opts, Rng& rng);
  void resample(Phase phase, Rng& rng);
  void visit(const std::string& prefix, Visitor& v);

  Conv2d gpc;
  Conv2d dw3;
  Conv2d dw5;
};

// ------------------------------------------------------- channel attention

class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng);

  /// A_c as [B, C, 1, 1]. `eta` (may be undefined) multiplies the modulation.
  Tensor attention_map(const Tensor& x, const ForwardContext& ctx, const Tensor& eta = {}) const;
  Tensor forward(const Tensor& x, const ForwardContext& ctx, const Tensor& eta = {}) const;

  void visit(const std::string& prefix, Visitor& v);

  Linear fc1;
  Linear fc2;
  Tensor theta_x;  // [1, C]
};

/// Per-channel descriptor (GMP + GAP + GMN) + (GMP - GAP - GMN) as [B, C].
Tensor ca_descriptor(const Tensor& x);

// ------------------------------------------------------------------- EMILA

class Emila {
 public:
  Emila() = default;
  Emila(std::size_t channels, const BlockOptions& opts, Rng& rng, const std::string& key);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  void make_robust(const RobustOptions& opts, Rng& rng);
  void resample(Phase phase, Rng& rng);
  void visit(const std::string& prefix, Visitor& v);

  std::string key;
  Msgdc msgdc;
  ChannelAttention ca;
  Conv2d restore;
  std::size_t shuffle_groups = 1;
  ManSite ca_noise;
};

// -------------------------------------------------------------------- ERLA

class Erla {
 public:
  Erla() = default;
  Erla(std::size_t in_channels, std::size_t out_channels, std::size_t stride, const BlockOptions& opts, Rng& rng,
       const std::string& key);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);

  void make_robust(const RobustOptions& opts, Rng& rng);
  void resample(Phase phase, Rng& rng);
  void visit(const std::string& prefix, Visitor& v);

  Emila first;
  Emila second;
  BatchNorm2d bn1;
  BatchNorm2d bn2;
  Conv2d project;              // 1x1 in -> out, carries the stride
  std::optional<Conv2d> skip;  // 1x1 projection when shapes differ
};

/// Plain residual block with two 3x3 convolutions; the ERLA-off counterpart.
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void visit(const std::string& prefix, Visitor& v);

  Conv2d conv1;
  Conv2d conv2;
  BatchNorm2d bn1;
  BatchNorm2d bn2;
  std::optional<Conv2d> skip;
};

// ------------------------------------------------------------------- MFIFA

/// Frequency components of one modality. lw1, lw2, lw and h3 are [B,C,1,1];
/// h1, h2, h and a are full resolution.
struct FreqComponents {
  Tensor lw1, lw2, lw, h1, h2, h3, h, a;
};

FreqComponents mfifa_decompose(const Tensor& x, bool use_dct);

/// Learnable scalars of the fusion blocks. Every entry starts at 1.0.
struct FusionParams {
  std::vector<Tensor> alpha;    // [1] per modality
  std::vector<Tensor> wp;       // [1] per modality
  std::vector<Tensor> gamma;    // [1] per modality
  std::vector<Tensor> theta_i;  // [1] per modality
  std::vector<Tensor> theta_m;  // [1, C, 1, 1] per modality
  Tensor theta_f;               // [1]
  Tensor theta_s;               // [1]

  static FusionParams ones(std::size_t modalities, std::size_t channels, bool mfifa = true, bool emsca = true);
  std::size_t modalities() const { return theta_m.size(); }
};

/// Pre-sigmoid sum over modalities of alpha*lw + wp*h + gamma*a. `eta` holds
/// 3 injection tensors per modality (lw, h, a order) or is empty.
Tensor mfifa_logits(const std::vector<Tensor>& xs, const FusionParams& p, bool use_dct,
                    std::span<const Tensor> eta = {});
/// A_f = sigmoid(mfifa_logits).
Tensor mfifa(const std::vector<Tensor>& xs, const FusionParams& p, bool use_dct);

// ------------------------------------------------------------------- EMSCA

/// S(x) = AP(MSGDC(x)) + MP(MSGDC(x)) with 2x2 / stride-2 pools.
Tensor emsca_s(const Tensor& x, const Msgdc& msgdc, const ForwardContext& ctx);

/// sum_i theta_i * (up(S(x_i)) + up(S(x_{m-i+1})) + up(S(S(x_i)))), before
/// the sigmoid. `eta` holds one injection tensor per modality or is empty.
Tensor emsca(const std::vector<Tensor>& xs, const FusionParams& p, const std::vector<Msgdc>& msgdcs,
             const ForwardContext& ctx, std::span<const Tensor> eta = {});

// ------------------------------------------------------------------- EMCAM

struct EmcamOptions {
  bool use_mfifa = true;
  bool use_emsca = true;
  bool parallel = true;  // false: EMSCA runs on MFIFA-recalibrated features
  bool use_dct = true;
};

class Emcam {
 public:
  Emcam() = default;
  Emcam(std::size_t channels, std::size_t modalities, const EmcamOptions& opts, Rng& rng, const std::string& key);

  std::vector<Tensor> forward(const std::vector<Tensor>& xs, const ForwardContext& ctx) const;
  /// The shared multimodal attention map A_m.
  Tensor attention_map(const std::vector<Tensor>& xs, const ForwardContext& ctx) const;

  void make_robust(const RobustOptions& opts, Rng& rng);
  void resample(Phase phase, Rng& rng);
  void visit(const std::string& prefix, Visitor& v);

  std::string key;
  EmcamOptions opts;
  FusionParams params;
  std::vector<Msgdc> msgdc;        // one per modality, used by EMSCA
  std::vector<ManSite> mfifa_noise;  // 3 per modality
  std::vector<ManSite> emsca_noise;  // 1 per modality
  ManSite fusion_noise;
};

}  // namespace mail
