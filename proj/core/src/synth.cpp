#include "mail/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mail/errors.hpp"
#include "mail/rng.hpp"

namespace mail {

double synth_cycles(std::size_t k) { return 3.0 + static_cast<double>(k / 4); }

Dataset synth_generate(std::uint64_t seed, const SynthConfig& c) {
  const std::size_t n = c.train + c.val + c.test;
  if (c.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (c.modalities == 0 || c.channels == 0) throw ConfigError("synth: modalities and channels must be positive");
  if (n < c.classes) throw ConfigError("synth: sample count below class count");
  const double max_cycles = synth_cycles(c.classes - 1);
  if (static_cast<double>(c.size) < 4.0 * max_cycles) {
    throw ConfigError("synth: size " + std::to_string(c.size) + " too small for the pattern bank (needs >= " +
                      std::to_string(static_cast<std::size_t>(4.0 * max_cycles)) + ")");
  }
  Rng rng(seed, "data");
  Dataset ds;
  const auto side = static_cast<std::uint32_t>(c.size);
  ds.shapes.assign(c.modalities, ModalityShape{static_cast<std::uint32_t>(c.channels), side, side});
  ds.task_classes = {static_cast<std::uint32_t>(c.classes)};
  ds.labels.assign(1, {});
  ds.pixels.resize(n * ds.sample_bytes());

  const double pi = std::numbers::pi;
  const double sz = static_cast<double>(c.size);
  std::size_t i = 0;
  auto emit = [&](std::size_t count, Split split) {
    for (std::size_t j = 0; j < count; ++j, ++i) {
      const std::size_t k = j % c.classes;
      const double theta = pi * static_cast<double>(k) / static_cast<double>(c.classes);
      const double omega = 2.0 * pi * synth_cycles(k) / sz;
      const double ct = std::cos(theta), st = std::sin(theta);
      const double phase = rng.uniform(-pi / 2.0, pi / 2.0);
      for (std::size_t m = 0; m < c.modalities; ++m) {
        std::uint8_t* dst = ds.sample(i, m);
        const double shift = static_cast<double>(m) * pi / 2.0;
        for (std::size_t ch = 0; ch < c.channels; ++ch) {
          const double gain = 1.0 - 0.2 * static_cast<double>(ch) / static_cast<double>(c.channels);
          for (std::size_t y = 0; y < c.size; ++y) {
            for (std::size_t x = 0; x < c.size; ++x) {
              const double u = static_cast<double>(x) * ct + static_cast<double>(y) * st;
              double v = 0.5 + c.amplitude * gain * std::cos(omega * u + phase + shift) + rng.normal(0.0, c.noise);
              v = std::clamp(v, 0.0, 1.0);
              dst[(ch * c.size + y) * c.size + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
          }
        }
      }
      ds.labels[0].push_back(static_cast<std::uint32_t>(k));
      ds.splits.push_back(split);
    }
  };
  emit(c.train, Split::Train);
  emit(c.val, Split::Val);
  emit(c.test, Split::Test);
  ds.validate();
  return ds;
}

Dataset synth_generate(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size,
                       std::size_t modalities) {
  SynthConfig c;
  c.train = n;
  c.val = 0;
  c.test = 0;
  c.classes = classes;
  c.size = size;
  c.modalities = modalities;
  return synth_generate(seed, c);
}

}  // namespace mail
