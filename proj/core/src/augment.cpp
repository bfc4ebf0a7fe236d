#include "mail/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mail/errors.hpp"

namespace mail {

std::array<double, 9> gaussian_kernel3(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("blur sigma must be positive");
  std::array<double, 9> k{};
  double total = 0.0;
  for (int y = -1; y <= 1; ++y) {
    for (int x = -1; x <= 1; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>((y + 1) * 3 + x + 1)] = v;
      total += v;
    }
  }
  for (double& v : k) v /= total;
  return k;
}

Image rotate(const Image& img, double degrees) {
  Image out = img;
  std::fill(out.v.begin(), out.v.end(), 0.0);
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // Inverse map: source = R(-a) (dst - center) + center.
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sx = ca * dx + sa * dy + cx;
      const double sy = -sa * dx + ca * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double tx = sx - fx, ty = sy - fy;
      const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t c = 0; c < img.channels; ++c) {
        auto px = [&](long yy, long xx) {
          return (yy < 0 || yy >= h || xx < 0 || xx >= w)
                     ? 0.0
                     : img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        };
        double v = (1 - ty) * (1 - tx) * px(y0, x0);
        if (tx > 0) v += (1 - ty) * tx * px(y0, x0 + 1);
        if (ty > 0) v += ty * (1 - tx) * px(y0 + 1, x0);
        if (tx > 0 && ty > 0) v += ty * tx * px(y0 + 1, x0 + 1);
        out.at(c, y, x) = v;
      }
    }
  }
  return out;
}

Image translate(const Image& img, int dx, int dy) {
  Image out = img;
  std::fill(out.v.begin(), out.v.end(), 0.0);
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (long y = 0; y < h; ++y) {
      const long sy = y - dy;
      if (sy < 0 || sy >= h) continue;
      for (long x = 0; x < w; ++x) {
        const long sx = x - dx;
        if (sx < 0 || sx >= w) continue;
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            img.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

Image blur3(const Image& img, double sigma) {
  const auto k = gaussian_kernel3(sigma);
  Image out = img;
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -1; i <= 1; ++i) {
          const long yy = std::clamp(y + i, 0L, h - 1);
          for (int j = -1; j <= 1; ++j) {
            const long xx = std::clamp(x + j, 0L, w - 1);
            acc += k[static_cast<std::size_t>((i + 1) * 3 + j + 1)] *
                   img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
    }
  }
  return out;
}

namespace {

struct Draw {
  double angle;
  int dx, dy;
};

Draw draw(const AugmentSpec& spec, Rng& rng) {
  Draw d;
  d.angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
  d.dx = static_cast<int>(rng.uniform_int(-spec.translation_px, spec.translation_px));
  d.dy = static_cast<int>(rng.uniform_int(-spec.translation_px, spec.translation_px));
  return d;
}

std::array<Image, 3> apply(const Image& img, const AugmentSpec& spec, const Draw& d) {
  return {rotate(img, d.angle), translate(img, d.dx, d.dy), blur3(img, spec.blur_sigma)};
}

}  // namespace

std::array<Image, 3> augment(const Image& img, const AugmentSpec& spec, Rng& rng) {
  return apply(img, spec, draw(spec, rng));
}

Image image_from_bytes(const std::uint8_t* bytes, const ModalityShape& s) {
  Image img{s.channels, s.height, s.width, std::vector<double>(s.size())};
  for (std::size_t i = 0; i < s.size(); ++i) img.v[i] = static_cast<double>(bytes[i]) / 255.0;
  return img;
}

void image_to_bytes(const Image& img, std::uint8_t* bytes) {
  for (std::size_t i = 0; i < img.v.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.v[i], 0.0, 1.0) * 255.0));
  }
}

Dataset augment_dataset(const Dataset& ds, const AugmentSpec& spec, Rng& rng) {
  ds.validate();
  const std::size_t n = ds.size();
  Dataset grown;
  grown.shapes = ds.shapes;
  grown.task_classes = ds.task_classes;
  grown.labels.assign(ds.labels.size(), {});
  grown.pixels.resize(4 * n * ds.sample_bytes());
  // Slot layout before shuffling: 4i is the original, 4i+1..3 its variants.
  std::vector<std::size_t> slot_src(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Draw d = draw(spec, rng);
    for (std::size_t m = 0; m < ds.modalities(); ++m) {
      const Image img = image_from_bytes(ds.sample(i, m), ds.shapes[m]);
      const auto variants = apply(img, spec, d);
      std::copy(ds.sample(i, m), ds.sample(i, m) + ds.shapes[m].size(), grown.sample(4 * i, m));
      for (std::size_t v = 0; v < 3; ++v) image_to_bytes(variants[v], grown.sample(4 * i + 1 + v, m));
    }
    for (std::size_t v = 0; v < 4; ++v) slot_src[4 * i + v] = i;
  }
  const auto perm = rng.permutation(4 * n);
  Dataset out;
  out.shapes = ds.shapes;
  out.task_classes = ds.task_classes;
  out.labels.assign(ds.labels.size(), std::vector<std::uint32_t>(4 * n));
  out.splits.resize(4 * n);
  out.pixels.resize(grown.pixels.size());
  const std::size_t sb = ds.sample_bytes();
  for (std::size_t j = 0; j < 4 * n; ++j) {
    const std::size_t from = perm[j];
    std::copy(grown.pixels.begin() + static_cast<std::ptrdiff_t>(from * sb),
              grown.pixels.begin() + static_cast<std::ptrdiff_t>((from + 1) * sb),
              out.pixels.begin() + static_cast<std::ptrdiff_t>(j * sb));
    for (std::size_t t = 0; t < ds.labels.size(); ++t) out.labels[t][j] = ds.labels[t][slot_src[from]];
    out.splits[j] = ds.splits[slot_src[from]];
  }
  return out;
}

ModalityMode parse_modality_mode(const std::string& name) {
  if (name == "identity") return ModalityMode::Identity;
  if (name == "blur") return ModalityMode::Blur;
  throw ConfigError("unknown modality synthesis mode '" + name + "' (expected identity or blur)");
}

Image modality_synthesize(const Image& img, ModalityMode mode) {
  switch (mode) {
    case ModalityMode::Identity: return img;
    case ModalityMode::Blur: return blur3(img, 0.8);
  }
  throw ConfigError("unknown modality synthesis mode");
}

Dataset add_synthetic_modality(const Dataset& ds, ModalityMode mode) {
  if (ds.modalities() != 1) throw DataError("modality synthesis expects a single-modality dataset");
  Dataset out;
  out.shapes = {ds.shapes[0], ds.shapes[0]};
  out.task_classes = ds.task_classes;
  out.labels = ds.labels;
  out.splits = ds.splits;
  out.pixels.resize(ds.size() * out.sample_bytes());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::uint8_t* src = ds.sample(i, 0);
    std::copy(src, src + ds.shapes[0].size(), out.sample(i, 0));
    image_to_bytes(modality_synthesize(image_from_bytes(src, ds.shapes[0]), mode), out.sample(i, 1));
  }
  return out;
}

}  // namespace mail
