#pragma once

#include <cstdint>

#include "mail/dataset.hpp"

namespace mail {

/// Seeded class-conditional grating task. Class k renders an oriented
/// sinusoid (orientation k*pi/K, frequency from a small bank) with a random
/// per-sample phase; modality m renders the same latent phase shifted by
/// m*pi/2. Gaussian pixel noise is added before 8-bit quantization.
struct SynthConfig {
  std::size_t train = 2000;
  std::size_t val = 0;
  std::size_t test = 500;
  std::size_t classes = 4;
  std::size_t size = 64;
  std::size_t modalities = 2;
  std::size_t channels = 3;
  double amplitude = 0.1;
  double noise = 0.1;
};

Dataset synth_generate(std::uint64_t seed, const SynthConfig& config);
/// All `n` samples tagged as training data.
Dataset synth_generate(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size, std::size_t modalities);

/// Grating cycles across the image for class k.
double synth_cycles(std::size_t k);

}  // namespace mail
