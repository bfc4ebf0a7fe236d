#pragma once

// Flat binary checkpoint container.
//
//   "MCK1" | u32 version | u64 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 extents... |
//               little-endian f64 values
//
// Parameters and persistent buffers (BN statistics, random projection banks)
// are stored in the model's visiting order.

#include <cstdint>
#include <string>
#include <vector>

#include "mail/network.hpp"

namespace mail {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::vector<CheckpointEntry> snapshot(MailNet& model);
/// Writes values back into the model. Names and shapes must match exactly.
void restore(MailNet& model, const std::vector<CheckpointEntry>& entries);

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(MailNet& model, const std::string& path);
void load_checkpoint(MailNet& model, const std::string& path);

/// Whole-file helpers shared by the binary formats; failures raise IoError.
std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mail
