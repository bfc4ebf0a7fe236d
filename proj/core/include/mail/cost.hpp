#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mail {

struct CostEntry {
  std::string block;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

/// Exact learnable-parameter and multiply-accumulate totals with a per-block
/// breakdown. Totals always equal the sum of the breakdown.
struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::vector<CostEntry> per_block;

  void add(const std::string& block, std::uint64_t params, std::uint64_t macs);
  void print(std::ostream& os) const;
};

/// Collects MACs from layers during a single instrumented forward pass. The
/// active scope names the block that receives the charge.
class CostRecorder {
 public:
  void add_macs(std::uint64_t macs);
  void push(const std::string& scope);
  void pop();
  const std::vector<std::pair<std::string, std::uint64_t>>& entries() const { return entries_; }
  std::uint64_t total() const;

 private:
  std::vector<std::string> stack_;
  std::vector<std::pair<std::string, std::uint64_t>> entries_;
};

class CostScope {
 public:
  CostScope(CostRecorder* rec, const std::string& scope) : rec_(rec) {
    if (rec_) rec_->push(scope);
  }
  ~CostScope() {
    if (rec_) rec_->pop();
  }
  CostScope(const CostScope&) = delete;
  CostScope& operator=(const CostScope&) = delete;

 private:
  CostRecorder* rec_;
};

}  // namespace mail
