#include "mail/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mail/errors.hpp"

namespace mail {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void read(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + ": need " + std::to_string(n) +
                            " bytes, " + std::to_string(bytes_.size() - pos_) + " available",
                        pos_);
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

class Snapshot : public Visitor {
 public:
  void parameter(const std::string& name, Tensor& t) override { out.push_back({name, t.shape(), to_vec(t)}); }
  void buffer(const std::string& name, Tensor& t) override {
    if (t.defined()) out.push_back({name, t.shape(), to_vec(t)});
  }
  void buffer(const std::string& name, std::vector<double>& v) override { out.push_back({name, {v.size()}, v}); }
  std::vector<CheckpointEntry> out;

 private:
  static std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
};

class Restore : public Visitor {
 public:
  explicit Restore(const std::vector<CheckpointEntry>& e) : entries_(e) {}
  void parameter(const std::string& name, Tensor& t) override { copy(name, t.shape(), t.mutable_data()); }
  void buffer(const std::string& name, Tensor& t) override {
    if (t.defined()) copy(name, t.shape(), t.mutable_data());
  }
  void buffer(const std::string& name, std::vector<double>& v) override { copy(name, {v.size()}, v); }
  std::size_t consumed() const { return next_; }

 private:
  void copy(const std::string& name, const Shape& shape, std::span<double> dst) {
    if (next_ >= entries_.size()) throw StateError("checkpoint has no entry for '" + name + "'");
    const auto& e = entries_[next_++];
    if (e.name != name) throw StateError("checkpoint entry '" + e.name + "' found where '" + name + "' expected");
    if (e.shape != shape) {
      throw StateError("checkpoint entry '" + name + "' has shape " + shape_str(e.shape) + ", model expects " +
                       shape_str(shape));
    }
    std::copy(e.values.begin(), e.values.end(), dst.begin());
  }
  const std::vector<CheckpointEntry>& entries_;
  std::size_t next_ = 0;
};

}  // namespace

std::vector<CheckpointEntry> snapshot(MailNet& model) {
  Snapshot s;
  model.visit(s);
  return std::move(s.out);
}

void restore(MailNet& model, const std::vector<CheckpointEntry>& entries) {
  Restore r(entries);
  model.visit(r);
  if (r.consumed() != entries.size()) {
    throw StateError("checkpoint holds " + std::to_string(entries.size()) + " tensors, model consumed " +
                     std::to_string(r.consumed()));
  }
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.values.data());
    out.insert(out.end(), p, p + e.values.size() * sizeof(double));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto count = r.get<std::uint64_t>("tensor count");
  std::vector<CheckpointEntry> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.get<std::uint32_t>("name length");
    if (len > r.remaining()) throw FormatError("checkpoint name length exceeds file", r.pos() - 4);
    e.name.resize(len);
    r.read(e.name.data(), len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("extent")));
    const std::size_t n = shape_numel(e.shape);
    if (n > r.remaining() / sizeof(double)) {
      throw FormatError("checkpoint tensor '" + e.name + "' expects " + std::to_string(n * sizeof(double)) +
                            " value bytes, " + std::to_string(r.remaining()) + " available",
                        r.pos());
    }
    e.values.resize(n);
    r.read(e.values.data(), n * sizeof(double), "values");
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload", r.pos());
  return entries;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

void save_checkpoint(MailNet& model, const std::string& path) { write_file(path, encode_checkpoint(snapshot(model))); }

void load_checkpoint(MailNet& model, const std::string& path) { restore(model, decode_checkpoint(read_file(path))); }

}  // namespace mail
