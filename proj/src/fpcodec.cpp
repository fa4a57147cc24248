// SPDX-License-Identifier: Apache-2.0
#include "precis/fpcodec.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cfloat>
#include <charconv>
#include <cmath>
#include <cstdint>

namespace precis {

double FpFormat::max_finite() const {
  const int top_exponent = std::min((1 << exponent_bits_) - 1 - bias(), FLT_MAX_EXP - 1);
  return std::ldexp(2.0 - std::ldexp(1.0, -mantissa_bits_), top_exponent);
}

double FpFormat::min_positive() const {
  return std::ldexp(1.0, 1 - bias() - mantissa_bits_);
}

std::string FpFormat::name() const {
  return "E" + std::to_string(exponent_bits_) + "M" + std::to_string(mantissa_bits_);
}

FpFormat make_format(int exponent_bits, int mantissa_bits) {
  if (exponent_bits < FpFormat::kMinExponentBits || exponent_bits > FpFormat::kMaxExponentBits ||
      mantissa_bits < 1 || 1 + exponent_bits + mantissa_bits > 32) {
    throw InvalidFormat("invalid format E" + std::to_string(exponent_bits) + "M" +
                        std::to_string(mantissa_bits));
  }
  return FpFormat(exponent_bits, mantissa_bits);
}

FpFormat fp32() { return make_format(8, 23); }

FpFormat parse_format(std::string_view text) {
  auto fail = [&] { return InvalidFormat("cannot parse format '" + std::string(text) + "'"); };
  if (text.size() < 4 || std::toupper(static_cast<unsigned char>(text[0])) != 'E') throw fail();
  const auto m_pos = text.find_first_of("mM");
  if (m_pos == std::string_view::npos) throw fail();
  int e = 0;
  int m = 0;
  const auto e_part = text.substr(1, m_pos - 1);
  const auto m_part = text.substr(m_pos + 1);
  auto [e_end, e_ec] = std::from_chars(e_part.data(), e_part.data() + e_part.size(), e);
  auto [m_end, m_ec] = std::from_chars(m_part.data(), m_part.data() + m_part.size(), m);
  if (e_ec != std::errc() || m_ec != std::errc() || e_end != e_part.data() + e_part.size() ||
      m_end != m_part.data() + m_part.size() || e_part.empty() || m_part.empty()) {
    throw fail();
  }
  return make_format(e, m);
}

FormatSpace splits_at(int total_bits) {
  FormatSpace out;
  for (int e = FpFormat::kMinExponentBits; e <= FpFormat::kMaxExponentBits; ++e) {
    const int m = total_bits - 1 - e;
    if (m >= 1) out.push_back(make_format(e, m));
  }
  return out;
}

FormatSpace enumerate_formats() {
  FormatSpace out;
  for (int bits : {4, 5, 6, 8, 10}) {
    const FormatSpace s = splits_at(bits);
    out.insert(out.end(), s.begin(), s.end());
  }
  out.push_back(make_format(5, 10));
  out.push_back(make_format(8, 7));
  out.push_back(make_format(8, 23));
  return out;
}

FormatSpace formats_at_or_above(const FormatSpace& space, int min_bits) {
  FormatSpace out;
  std::copy_if(space.begin(), space.end(), std::back_inserter(out),
               [&](const FpFormat& f) { return f.total_bits() >= min_bits; });
  return out;
}

namespace {

double pow2(int k) { return std::bit_cast<double>(static_cast<std::uint64_t>(k + 1023) << 52); }

// Per-format constants hoisted out of the element loop.
struct Rounder {
  double max_finite;
  int min_normal_exponent;
  int mantissa_bits;

  explicit Rounder(FpFormat fmt)
      : max_finite(fmt.max_finite()),
        min_normal_exponent(1 - fmt.bias()),
        mantissa_bits(fmt.mantissa_bits()) {}

  float operator()(float value) const {
    if (std::isnan(value)) return value;
    const double magnitude = std::fabs(static_cast<double>(value));
    if (magnitude == 0.0) return value;
    if (magnitude >= max_finite) return static_cast<float>(std::copysign(max_finite, value));

    // Every float is a normal double, so the biased exponent field gives
    // floor(log2(magnitude)) directly. The spacing of representable values is
    // 2^(exponent - M) for normals and fixed below the normal range.
    const int exponent = static_cast<int>((std::bit_cast<std::uint64_t>(magnitude) >> 52) & 0x7ff) - 1023;
    const int quantum = std::max(exponent, min_normal_exponent) - mantissa_bits;
    // The scaled value is below 2^25, so adding and removing 2^52 rounds it to
    // an integer under the default ties-to-even mode. Power-of-two scaling is exact.
    const double scaled = magnitude * pow2(-quantum);
    double rounded = ((scaled + 0x1p52) - 0x1p52) * pow2(quantum);
    rounded = std::min(rounded, max_finite);
    return static_cast<float>(std::copysign(rounded, value));
  }
};

}  // namespace

float quantize(float value, FpFormat fmt) {
  if (fmt.is_identity()) return value;
  return Rounder(fmt)(value);
}

void quantize_tensor(std::span<float> values, FpFormat fmt) {
  if (fmt.is_identity()) return;
  const Rounder round(fmt);
  for (float& v : values) v = round(v);
}

std::vector<double> representable_values(FpFormat fmt) {
  if (fmt.total_bits() > 12) {
    throw FormatTooWide("representable_values is limited to 12-bit formats, got " + fmt.name());
  }
  const int mantissa_codes = 1 << fmt.mantissa_bits();
  const int exponent_codes = 1 << fmt.exponent_bits();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(mantissa_codes) * exponent_codes);
  for (int e = 0; e < exponent_codes; ++e) {
    for (int m = 0; m < mantissa_codes; ++m) {
      if (e == 0) {
        out.push_back(std::ldexp(static_cast<double>(m), 1 - fmt.bias() - fmt.mantissa_bits()));
      } else {
        out.push_back(std::ldexp(1.0 + static_cast<double>(m) / mantissa_codes, e - fmt.bias()));
      }
    }
  }
  return out;
}

DataMovement data_movement_model(std::int64_t element_count, FpFormat fmt) {
  const int packing = fmt.packing_factor();
  return {static_cast<double>(element_count) * 4.0 / packing, packing};
}

}  // namespace precis
