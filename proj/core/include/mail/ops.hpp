#pragma once

// Differentiable primitives. Image tensors use (batch, channel, height, width).

#include <cstddef>
#include <optional>
#include <vector>

#include "mail/tensor.hpp"

namespace mail {

// ---------------------------------------------------------------- elementwise

/// Binary ops broadcast numpy-style (trailing alignment, extent 1 stretches).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Sum of a list of equally-shaped tensors.
Tensor sum_all(const std::vector<Tensor>& terms);

Tensor sum(const Tensor& a);   // -> [1]
Tensor mean(const Tensor& a);  // -> [1]
/// Euclidean norm over every entry -> [1].
Tensor l2_norm(const Tensor& a);
/// Sum of squares over every entry -> [1].
Tensor sum_squares(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates along axis 0.
Tensor concat0(const std::vector<Tensor>& parts);

/// y = x W^T + b for x [B, in], W [out, in], b [out] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --------------------------------------------------------------- convolution

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t groups = 1;
  std::size_t stride = 1;
  /// Zero padding per side; std::nullopt means "same" ((k - 1) / 2).
  std::optional<std::size_t> pad_h;
  std::optional<std::size_t> pad_w;

  std::size_t padding_h() const { return pad_h.value_or((kernel_h - 1) / 2); }
  std::size_t padding_w() const { return pad_w.value_or((kernel_w - 1) / 2); }
  std::size_t out_extent_h(std::size_t h) const;
  std::size_t out_extent_w(std::size_t w) const;
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel_h, kernel_w}; }
  /// Throws ConfigError on zero sizes or channels not divisible by groups.
  void validate() const;
};

/// Grouped 2D cross-correlation. Depthwise is groups == in_channels.
Tensor conv2d(const Tensor& input, const Tensor& weight, const ConvSpec& spec);

// ------------------------------------------------------------------- pooling

enum class PoolKind { Avg, Max, Min };

/// Per-channel reduction over the full spatial extent -> [B, C, 1, 1].
/// Max/min route the gradient to the first attaining element (row-major).
Tensor global_pool(const Tensor& input, PoolKind kind);

/// Window/stride pooling (avg or max); trailing rows/cols that do not fill a
/// window are dropped.
Tensor local_pool(const Tensor& input, PoolKind kind, std::size_t window = 2,
                  std::size_t stride = 2);

/// Nearest-neighbour resize to (out_h, out_w): src = floor(dst * in / out).
Tensor upsample_nearest(const Tensor& input, std::size_t out_h, std::size_t out_w);

// ------------------------------------------------------------- channel mixing

/// View C as (groups, C / groups), transpose, flatten.
Tensor channel_shuffle(const Tensor& input, std::size_t groups);
/// Channel index permutation applied by channel_shuffle: out[c] = in[perm[c]].
std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups);

// ------------------------------------------------------------------ spectral

/// Orthonormal 2D DCT-II per (batch, channel) plane; inverse is DCT-III.
Tensor dct2d(const Tensor& input, bool inverse = false);

// ------------------------------------------------------------- normalization

/// Running statistics for batch normalization. Empty vectors mean the
/// statistics have never been initialized.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  bool initialized() const { return !running_mean.empty(); }
  void reset(std::size_t channels);
};

/// Training mode normalizes with biased batch moments and updates the running
/// statistics; evaluation mode uses the running statistics.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool training);

// ---------------------------------------------------------------------- loss

/// Mean softmax cross-entropy over the batch. logits [B, K], labels in [0, K).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Row-wise softmax without graph recording.
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace mail
