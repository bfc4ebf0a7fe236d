#include "mail/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "mail/checkpoint.hpp"
#include "mail/errors.hpp"

namespace mail {

namespace {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'I', 'C', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxModalities = 64;
constexpr std::uint32_t kMaxTasks = 64;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* what) {
  if (b.size() - pos < sizeof(T)) {
    throw FormatError(std::string("container header truncated while reading ") + what, pos);
  }
  T v;
  std::memcpy(&v, b.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::size_t Dataset::sample_bytes() const {
  std::size_t n = 0;
  for (const auto& s : shapes) n += s.size();
  return n;
}

void Dataset::validate() const {
  if (shapes.empty()) throw DataError("dataset has no modalities");
  if (task_classes.empty()) throw DataError("dataset has no tasks");
  if (pixels.size() != size() * sample_bytes()) {
    throw DataError("pixel payload holds " + std::to_string(pixels.size()) + " bytes, expected " +
                    std::to_string(size() * sample_bytes()));
  }
  if (labels.size() != task_classes.size()) throw DataError("label rows do not match task count");
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t].size() != size()) throw DataError("task " + std::to_string(t) + " label count mismatch");
    for (std::size_t i = 0; i < labels[t].size(); ++i) {
      if (labels[t][i] >= task_classes[t]) {
        throw DataError("sample " + std::to_string(i) + " task " + std::to_string(t) + " label " +
                        std::to_string(labels[t][i]) + " >= class count " + std::to_string(task_classes[t]));
      }
    }
  }
  for (Split s : splits) {
    if (static_cast<std::uint8_t>(s) > 2) throw DataError("invalid split tag");
  }
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

const std::uint8_t* Dataset::sample(std::size_t i, std::size_t m) const {
  std::size_t off = i * sample_bytes();
  for (std::size_t k = 0; k < m; ++k) off += shapes[k].size();
  return pixels.data() + off;
}

std::uint8_t* Dataset::sample(std::size_t i, std::size_t m) {
  return const_cast<std::uint8_t*>(static_cast<const Dataset&>(*this).sample(i, m));
}

Batch Dataset::batch(const std::vector<std::size_t>& idx) const {
  Batch b;
  const std::size_t n = idx.size();
  for (std::size_t m = 0; m < modalities(); ++m) {
    const auto& s = shapes[m];
    std::vector<double> v(n * s.size());
    for (std::size_t k = 0; k < n; ++k) {
      if (idx[k] >= size()) throw DataError("sample index " + std::to_string(idx[k]) + " out of range");
      const std::uint8_t* src = sample(idx[k], m);
      for (std::size_t p = 0; p < s.size(); ++p) v[k * s.size() + p] = static_cast<double>(src[p]) / 255.0;
    }
    b.xs.push_back(Tensor::from({n, s.channels, s.height, s.width}, std::move(v)));
  }
  for (const auto& row : labels) {
    std::vector<int> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = static_cast<int>(row[idx[k]]);
    b.labels.push_back(std::move(y));
  }
  return b;
}

void Dataset::append(const Dataset& other) {
  if (other.shapes != shapes || other.task_classes != task_classes) {
    throw DataError("cannot append datasets with different schemas");
  }
  pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    labels[t].insert(labels[t].end(), other.labels[t].begin(), other.labels[t].end());
  }
  splits.insert(splits.end(), other.splits.begin(), other.splits.end());
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, ds.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.shapes.size()));
  for (const auto& s : ds.shapes) {
    put<std::uint32_t>(out, s.channels);
    put<std::uint32_t>(out, s.height);
    put<std::uint32_t>(out, s.width);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.task_classes.size()));
  for (auto c : ds.task_classes) put<std::uint32_t>(out, c);
  out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
  for (const auto& row : ds.labels) {
    for (auto y : row) put<std::uint32_t>(out, y);
  }
  for (Split s : ds.splits) out.push_back(static_cast<std::uint8_t>(s));
  return out;
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad container magic (expected \"MIC1\")", 0);
  }
  pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos, "version");
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version), 4);
  const auto n = get<std::uint64_t>(bytes, pos, "sample count");
  const auto m = get<std::uint32_t>(bytes, pos, "modality count");
  if (m == 0 || m > kMaxModalities) throw FormatError("implausible modality count " + std::to_string(m), pos - 4);
  Dataset ds;
  for (std::uint32_t k = 0; k < m; ++k) {
    ModalityShape s;
    s.channels = get<std::uint32_t>(bytes, pos, "channels");
    s.height = get<std::uint32_t>(bytes, pos, "height");
    s.width = get<std::uint32_t>(bytes, pos, "width");
    if (s.size() == 0) throw FormatError("modality " + std::to_string(k) + " has an empty shape", pos - 12);
    ds.shapes.push_back(s);
  }
  const auto t = get<std::uint32_t>(bytes, pos, "task count");
  if (t == 0 || t > kMaxTasks) throw FormatError("implausible task count " + std::to_string(t), pos - 4);
  for (std::uint32_t k = 0; k < t; ++k) ds.task_classes.push_back(get<std::uint32_t>(bytes, pos, "class count"));

  // Check the full length before touching the payload.
  const std::size_t header = pos;
  const std::size_t per_sample = ds.sample_bytes() + 4 * static_cast<std::size_t>(t) + 1;
  if (n > (std::numeric_limits<std::size_t>::max() - header) / per_sample) {
    throw FormatError("sample count " + std::to_string(n) + " overflows the addressable size", 8);
  }
  const std::size_t expected = header + static_cast<std::size_t>(n) * per_sample;
  if (bytes.size() != expected) {
    throw FormatError(std::string(bytes.size() < expected ? "payload truncated" : "trailing bytes after payload") +
                          ": expected " + std::to_string(expected) + " bytes in total, found " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), expected));
  }
  const std::size_t pix = static_cast<std::size_t>(n) * ds.sample_bytes();
  ds.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + pix));
  pos += pix;
  ds.labels.assign(t, std::vector<std::uint32_t>(n));
  for (auto& row : ds.labels) {
    for (auto& y : row) y = get<std::uint32_t>(bytes, pos, "label");
  }
  ds.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t s = bytes[pos++];
    if (s > 2) throw FormatError("invalid split tag " + std::to_string(s), pos - 1);
    ds.splits[i] = static_cast<Split>(s);
  }
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw FormatError(e.what(), header);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) { write_file(path, encode_dataset(ds)); }

Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

std::string manifest(const Dataset& ds) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << i << ' ' << split_name(ds.splits[i]) << ' ';
    for (std::size_t t = 0; t < ds.labels.size(); ++t) os << (t ? "," : "") << ds.labels[t][i];
    os << '\n';
  }
  return os.str();
}

void write_manifest(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << manifest(ds);
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace mail
