#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mail/dataset.hpp"
#include "mail/rng.hpp"

namespace mail {

/// Planar [C, H, W] image in double precision.
struct Image {
  std::size_t channels = 1, height = 1, width = 1;
  std::vector<double> v;

  double& at(std::size_t c, std::size_t y, std::size_t x) { return v[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return v[(c * height + y) * width + x]; }
};

struct AugmentSpec {
  double rotation_deg = 20.0;  // maximum |angle|
  int translation_px = 5;      // maximum |shift| per axis
  double blur_sigma = 0.8;     // 3x3 Gaussian
};

/// Normalized 3x3 Gaussian kernel, row-major.
std::array<double, 9> gaussian_kernel3(double sigma);

/// Rotation about the image center, bilinear sampling, zero fill.
Image rotate(const Image& img, double degrees);
/// Integer shift, zero fill: out(y, x) = in(y - dy, x - dx).
Image translate(const Image& img, int dx, int dy);
/// 3x3 Gaussian blur with replicated borders.
Image blur3(const Image& img, double sigma);

/// Rotated, translated and blurred variants with uniformly drawn magnitudes.
std::array<Image, 3> augment(const Image& img, const AugmentSpec& spec, Rng& rng);

/// Original samples followed by three variants each (same draw for every
/// modality of a sample), then shuffled with a seeded permutation.
Dataset augment_dataset(const Dataset& ds, const AugmentSpec& spec, Rng& rng);

enum class ModalityMode { Identity, Blur };
ModalityMode parse_modality_mode(const std::string& name);
/// Second-modality image derived from the first.
Image modality_synthesize(const Image& img, ModalityMode mode);
/// Appends a synthesized modality to every sample of a single-modality dataset.
Dataset add_synthetic_modality(const Dataset& ds, ModalityMode mode);

Image image_from_bytes(const std::uint8_t* bytes, const ModalityShape& shape);
void image_to_bytes(const Image& img, std::uint8_t* bytes);

}  // namespace mail
