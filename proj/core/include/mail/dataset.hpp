#pragma once

// MIC1 multimodal image container.
//
//   "MIC1" | u32 version | u64 samples | u32 modalities |
//   per modality: u32 channels, u32 height, u32 width |
//   u32 tasks | per task: u32 classes |
//   pixels: samples x (sum of modality plane sizes) bytes, sample-major,
//           modalities in order, each stored C x H x W |
//   labels: tasks x samples u32, task-major |
//   splits: samples u8 (0 train, 1 val, 2 test)
//
// All integers little-endian. Pixels are 8-bit and map to [0, 1] on load.

#include <cstdint>
#include <string>
#include <vector>

#include "mail/tensor.hpp"

namespace mail {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split s);

struct ModalityShape {
  std::uint32_t channels = 1;
  std::uint32_t height = 1;
  std::uint32_t width = 1;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool operator==(const ModalityShape&) const = default;
};

struct Batch {
  std::vector<Tensor> xs;                // one [B, C, H, W] tensor per modality
  std::vector<std::vector<int>> labels;  // [task][B]
  std::size_t size() const { return labels.empty() ? 0 : labels[0].size(); }
};

struct Dataset {
  std::vector<ModalityShape> shapes;
  std::vector<std::uint32_t> task_classes;
  std::vector<std::uint8_t> pixels;
  std::vector<std::vector<std::uint32_t>> labels;  // [task][sample]
  std::vector<Split> splits;

  std::size_t size() const { return splits.size(); }
  std::size_t modalities() const { return shapes.size(); }
  std::size_t sample_bytes() const;

  /// Throws DataError when labels, splits or payload disagree with the header.
  void validate() const;

  std::vector<std::size_t> indices(Split split) const;
  Batch batch(const std::vector<std::size_t>& idx) const;
  /// Raw bytes of modality `m` of sample `i`.
  const std::uint8_t* sample(std::size_t i, std::size_t m) const;
  std::uint8_t* sample(std::size_t i, std::size_t m);
  void append(const Dataset& other);
};

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
/// Header is validated before any payload allocation; malformed input raises
/// FormatError with the byte offset.
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// One line per sample: "<id> <split> <label_task0>[,<label_task1>...]".
std::string manifest(const Dataset& ds);
void write_manifest(const Dataset& ds, const std::string& path);

}  // namespace mail
