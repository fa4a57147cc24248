// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "precis/fpcodec.hpp"

namespace precis {

/// The five large intermediate tensors that receive quantization hooks.
enum class Slot : int {
  kOutSpheres = 0,      // forward kinematics output
  kGradOutSpheres = 1,  // backward kinematics input
  kOutVec = 2,          // self-collision penetration vector
  kClosestPt = 3,       // collision field, IK
  kClosestPtSwept = 4,  // collision field, trajectory optimization
};

inline constexpr int kSlotCount = 5;
inline constexpr std::array<Slot, kSlotCount> kAllSlots = {
    Slot::kOutSpheres, Slot::kGradOutSpheres, Slot::kOutVec, Slot::kClosestPt,
    Slot::kClosestPtSwept};

std::string_view slot_name(Slot slot);
std::optional<Slot> parse_slot(std::string_view name);

/// One format per tensor slot. Default constructed is all-E8M23.
struct PrecisionConfig {
  std::array<FpFormat, kSlotCount> formats{};

  FpFormat& operator[](Slot s) { return formats[static_cast<int>(s)]; }
  const FpFormat& operator[](Slot s) const { return formats[static_cast<int>(s)]; }

  static PrecisionConfig uniform(FpFormat fmt);
  /// All slots E8M23 except `slot`.
  static PrecisionConfig single(Slot slot, FpFormat fmt);

  friend bool operator==(const PrecisionConfig&, const PrecisionConfig&) = default;
  friend auto operator<=>(const PrecisionConfig&, const PrecisionConfig&) = default;
};

int total_bits(const PrecisionConfig& config);

/// "E5M10,E2M1,E2M1,E2M1,E2M1" in slot order.
std::string to_string(const PrecisionConfig& config);
PrecisionConfig parse_config(std::string_view text);

/// Zero/total element counters per slot, safe to share between workers.
class SparsityCounter {
 public:
  void add(Slot slot, std::span<const float> values);
  /// Fraction of exact zeros; 1.0 when nothing was recorded.
  double fraction(Slot slot) const;
  std::int64_t elements(Slot slot) const;

 private:
  std::array<std::atomic<std::int64_t>, kSlotCount> zeros_{};
  std::array<std::atomic<std::int64_t>, kSlotCount> totals_{};
};

/// Fraction of exact zeros in `values`; an empty tensor counts as fully sparse.
double sparsity_stats(std::span<const float> values);

/// Quantize-dequantize injection points. A default-constructed hook set is a
/// no-op; with a precision config every slot tensor is rounded in place.
struct TensorHooks {
  const PrecisionConfig* precision = nullptr;
  SparsityCounter* sparsity = nullptr;

  void apply(Slot slot, std::span<float> values) const {
    if (precision != nullptr) quantize_tensor(values, (*precision)[slot]);
    if (sparsity != nullptr) sparsity->add(slot, values);
  }
  // Hooks only exist on the 32-bit path; double evaluations are untouched.
  void apply(Slot, std::span<double>) const {}
};

}  // namespace precis
