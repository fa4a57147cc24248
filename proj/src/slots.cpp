// SPDX-License-Identifier: Apache-2.0
#include "precis/slots.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace precis {

namespace {
constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "out_spheres", "grad_out_spheres", "out_vec", "closest_pt", "closest_pt_swept"};
}

std::string_view slot_name(Slot slot) { return kSlotNames[static_cast<int>(slot)]; }

std::optional<Slot> parse_slot(std::string_view name) {
  for (Slot s : kAllSlots) {
    if (slot_name(s) == name) return s;
  }
  return std::nullopt;
}

PrecisionConfig PrecisionConfig::uniform(FpFormat fmt) {
  PrecisionConfig c;
  c.formats.fill(fmt);
  return c;
}

PrecisionConfig PrecisionConfig::single(Slot slot, FpFormat fmt) {
  PrecisionConfig c = uniform(fp32());
  c[slot] = fmt;
  return c;
}

int total_bits(const PrecisionConfig& config) {
  return std::accumulate(config.formats.begin(), config.formats.end(), 0,
                         [](int acc, const FpFormat& f) { return acc + f.total_bits(); });
}

std::string to_string(const PrecisionConfig& config) {
  std::string out;
  for (const FpFormat& f : config.formats) {
    if (!out.empty()) out += ',';
    out += f.name();
  }
  return out;
}

PrecisionConfig parse_config(std::string_view text) {
  PrecisionConfig c;
  std::size_t slot = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    if (slot >= c.formats.size()) throw InvalidFormat("too many formats in '" + std::string(text) + "'");
    c.formats[slot++] = parse_format(text.substr(start, comma - start));
    start = comma + 1;
  }
  if (slot != c.formats.size()) {
    throw InvalidFormat("expected 5 formats in '" + std::string(text) + "'");
  }
  return c;
}

void SparsityCounter::add(Slot slot, std::span<const float> values) {
  const auto zeros = std::count(values.begin(), values.end(), 0.0f);
  zeros_[static_cast<int>(slot)].fetch_add(zeros, std::memory_order_relaxed);
  totals_[static_cast<int>(slot)].fetch_add(static_cast<std::int64_t>(values.size()),
                                            std::memory_order_relaxed);
}

double SparsityCounter::fraction(Slot slot) const {
  const auto total = totals_[static_cast<int>(slot)].load();
  if (total == 0) return 1.0;
  return static_cast<double>(zeros_[static_cast<int>(slot)].load()) / static_cast<double>(total);
}

std::int64_t SparsityCounter::elements(Slot slot) const {
  return totals_[static_cast<int>(slot)].load();
}

double sparsity_stats(std::span<const float> values) {
  if (values.empty()) return 1.0;
  const auto zeros = std::count(values.begin(), values.end(), 0.0f);
  return static_cast<double>(zeros) / static_cast<double>(values.size());
}

}  // namespace precis
