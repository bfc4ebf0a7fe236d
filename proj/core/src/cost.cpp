#include "mail/cost.hpp"

#include <iomanip>
#include <ostream>

namespace mail {

void CostReport::add(const std::string& block, std::uint64_t p, std::uint64_t m) {
  for (auto& e : per_block) {
    if (e.block == block) {
      e.params += p;
      e.macs += m;
      params += p;
      macs += m;
      return;
    }
  }
  per_block.push_back({block, p, m});
  params += p;
  macs += m;
}

void CostReport::print(std::ostream& os) const {
  std::size_t width = 5;
  for (const auto& e : per_block) width = std::max(width, e.block.size());
  os << std::left << std::setw(static_cast<int>(width)) << "block" << "  " << std::right << std::setw(14) << "params"
     << "  " << std::setw(16) << "macs" << '\n';
  for (const auto& e : per_block) {
    os << std::left << std::setw(static_cast<int>(width)) << e.block << "  " << std::right << std::setw(14) << e.params
       << "  " << std::setw(16) << e.macs << '\n';
  }
  os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << std::right << std::setw(14) << params
     << "  " << std::setw(16) << macs << '\n';
}

void CostRecorder::push(const std::string& scope) {
  stack_.push_back(stack_.empty() ? scope : stack_.back() + "." + scope);
}

void CostRecorder::pop() {
  if (!stack_.empty()) stack_.pop_back();
}

void CostRecorder::add_macs(std::uint64_t macs) {
  const std::string key = stack_.empty() ? std::string("(root)") : stack_.back();
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v += macs;
      return;
    }
  }
  entries_.emplace_back(key, macs);
}

std::uint64_t CostRecorder::total() const {
  std::uint64_t t = 0;
  for (const auto& e : entries_) t += e.second;
  return t;
}

}  // namespace mail
