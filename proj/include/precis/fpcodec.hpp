// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace precis {

class InvalidFormat : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatTooWide : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sign + exponent + mantissa minifloat layout. Every exponent code encodes a
/// finite value (no inf/NaN codes); the exponent bias is 2^(E-1) - 1 and
/// subnormals are supported.
class FpFormat {
 public:
  static constexpr int kMinExponentBits = 2;
  static constexpr int kMaxExponentBits = 8;

  constexpr FpFormat() = default;

  int exponent_bits() const { return exponent_bits_; }
  int mantissa_bits() const { return mantissa_bits_; }
  int total_bits() const { return 1 + exponent_bits_ + mantissa_bits_; }
  int bias() const { return (1 << (exponent_bits_ - 1)) - 1; }

  /// Number of values packed into one 32-bit register.
  int packing_factor() const { return 32 / total_bits(); }

  /// Largest finite magnitude, capped at the largest value that also fits the
  /// 32-bit container (only relevant for 8-bit exponents).
  double max_finite() const;

  /// Smallest positive (subnormal) magnitude.
  double min_positive() const;

  /// True for E8M23, which leaves every 32-bit value untouched.
  bool is_identity() const { return exponent_bits_ == 8 && mantissa_bits_ == 23; }

  /// Canonical "E<e>M<m>" spelling.
  std::string name() const;

  friend bool operator==(const FpFormat&, const FpFormat&) = default;
  friend auto operator<=>(const FpFormat& a, const FpFormat& b) {
    if (auto c = a.total_bits() <=> b.total_bits(); c != 0) return c;
    return a.exponent_bits_ <=> b.exponent_bits_;
  }

 private:
  friend FpFormat make_format(int exponent_bits, int mantissa_bits);
  constexpr FpFormat(int e, int m) : exponent_bits_(e), mantissa_bits_(m) {}

  int exponent_bits_ = 8;
  int mantissa_bits_ = 23;
};

/// Throws InvalidFormat unless E in [2, 8], M >= 1 and 1 + E + M <= 32.
FpFormat make_format(int exponent_bits, int mantissa_bits);

/// The full-width E8M23 format.
FpFormat fp32();

/// Parses "E<e>M<m>" (case-insensitive). Throws InvalidFormat.
FpFormat parse_format(std::string_view text);

using FormatSpace = std::vector<FpFormat>;

/// The 21 candidate formats: every split at 4, 5, 6, 8 and 10 bits, plus
/// E5M10, E8M7 and E8M23. Sorted by total bits, then exponent bits.
FormatSpace enumerate_formats();

/// Every valid (E, M) split with the given total width, ascending E.
FormatSpace splits_at(int total_bits);

/// Subset of `space` with total_bits >= min_bits, order preserved.
FormatSpace formats_at_or_above(const FormatSpace& space, int min_bits);

/// Round-to-nearest-even quantize/dequantize through `fmt`. Magnitudes above
/// max_finite saturate, NaN passes through, the sign of zero is kept.
float quantize(float value, FpFormat fmt);

void quantize_tensor(std::span<float> values, FpFormat fmt);

/// Every nonnegative value of `fmt` in ascending order. Enumeration is only
/// offered for formats of at most 12 bits; wider formats throw FormatTooWide.
std::vector<double> representable_values(FpFormat fmt);

struct DataMovement {
  double bytes = 0.0;
  int compression = 1;
};

/// Packed-register transfer size of `element_count` values stored in `fmt`.
DataMovement data_movement_model(std::int64_t element_count, FpFormat fmt);

}  // namespace precis
