#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cfloat>
#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "precis/fpcodec.hpp"

using namespace precis;

TEST_CASE("format construction and naming") {
  const FpFormat f = make_format(3, 1);
  CHECK(f.total_bits() == 5);
  CHECK(f.bias() == 3);
  CHECK(f.name() == "E3M1");
  CHECK(parse_format("e5m10") == make_format(5, 10));
  CHECK(parse_format("E8M23").is_identity());

  CHECK_THROWS_AS(make_format(1, 3), InvalidFormat);
  CHECK_THROWS_AS(make_format(9, 3), InvalidFormat);
  CHECK_THROWS_AS(make_format(4, 0), InvalidFormat);
  CHECK_THROWS_AS(make_format(8, 24), InvalidFormat);
  CHECK_THROWS_AS(parse_format("E5"), InvalidFormat);
  CHECK_THROWS_AS(parse_format("FP16"), InvalidFormat);
  CHECK_THROWS_AS(parse_format("E5M10x"), InvalidFormat);
}

TEST_CASE("extreme magnitudes") {
  CHECK(make_format(2, 1).max_finite() == 6.0);
  CHECK(make_format(3, 1).max_finite() == 24.0);
  CHECK(make_format(4, 3).max_finite() == 480.0);
  CHECK(make_format(5, 10).max_finite() == 131008.0);
  CHECK(make_format(2, 1).min_positive() == 0.5);
  CHECK(make_format(5, 10).min_positive() == std::ldexp(1.0, -24));
  CHECK(fp32().max_finite() == static_cast<double>(FLT_MAX));
  CHECK(make_format(8, 7).max_finite() <= static_cast<double>(FLT_MAX));
  CHECK(make_format(8, 7).max_finite() == std::ldexp(2.0 - std::ldexp(1.0, -7), 127));
}

TEST_CASE("catalogue of candidate formats") {
  const FormatSpace all = enumerate_formats();
  REQUIRE(all.size() == 21);
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(all.front() == make_format(2, 1));
  CHECK(all.back() == fp32());

  const FormatSpace wide = formats_at_or_above(all, 13);
  REQUIRE(wide.size() == 3);
  CHECK(wide[0] == make_format(5, 10));
  CHECK(wide[1] == make_format(8, 7));
  CHECK(wide[2] == fp32());
  CHECK(formats_at_or_above(all, 4).size() == 21);
  CHECK(formats_at_or_above(all, 5).size() == 20);

  CHECK(splits_at(4).size() == 1);
  CHECK(splits_at(8).size() == 5);
  CHECK(splits_at(16).size() == 7);
  CHECK(splits_at(32).size() == 7);
  CHECK(splits_at(3).empty());

  int packing[] = {8, 6, 5, 4, 3, 2, 1};
  int bits[] = {4, 5, 6, 8, 10, 16, 32};
  for (int i = 0; i < 7; ++i) CHECK(splits_at(bits[i]).front().packing_factor() == packing[i]);
}

TEST_CASE("representable values agree with the bit-field definition") {
  for (const FpFormat& f : oracle::narrow_formats(12)) {
    CHECK(representable_values(f) == oracle::format_values(f.exponent_bits(), f.mantissa_bits()));
  }
  const auto e2m1 = representable_values(make_format(2, 1));
  CHECK(e2m1 == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0});
  CHECK_THROWS_AS(representable_values(make_format(5, 10)), FormatTooWide);
}

TEST_CASE("quantize matches the nearest-value oracle for narrow formats") {
  CHECK(oracle::codec_mismatches(10, 20000, 11) == 0);
}

TEST_CASE("E2M1 rounding by hand") {
  const FpFormat f = make_format(2, 1);
  CHECK(quantize(0.2f, f) == 0.0f);
  CHECK(quantize(0.25f, f) == 0.0f);  // tie goes to the even code
  CHECK(quantize(0.26f, f) == 0.5f);
  CHECK(quantize(0.75f, f) == 1.0f);
  CHECK(quantize(1.25f, f) == 1.0f);
  CHECK(quantize(2.5f, f) == 2.0f);
  CHECK(quantize(5.0f, f) == 4.0f);
  CHECK(quantize(5.1f, f) == 6.0f);
  CHECK(quantize(1e30f, f) == 6.0f);
  CHECK(quantize(-7.0f, f) == -6.0f);
  CHECK(std::signbit(quantize(-0.1f, f)));
  CHECK(std::isnan(quantize(std::numeric_limits<float>::quiet_NaN(), f)));
  CHECK(quantize(std::numeric_limits<float>::infinity(), f) == 6.0f);
}

TEST_CASE("E5M10 equals a binary16 round trip in range") {
  CHECK(oracle::binary16_mismatches(100000, 5) == 0);
  // Beyond the IEEE range the extra exponent code stays finite.
  CHECK(quantize(70000.0f, make_format(5, 10)) == 70016.0f);
  CHECK(quantize(1e9f, make_format(5, 10)) == 131008.0f);
}

TEST_CASE("E8M23 leaves every value untouched") {
  std::mt19937 rng(3);
  for (int i = 0; i < 100000; ++i) {
    const float x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    const float q = quantize(x, fp32());
    if (std::isnan(x)) {
      CHECK(std::isnan(q));
    } else {
      REQUIRE(std::bit_cast<std::uint32_t>(q) == std::bit_cast<std::uint32_t>(x));
    }
  }
}

TEST_CASE("E8M7 matches bfloat16 rounding") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
  for (int i = 0; i < 10000; ++i) {
    const float x = u(rng);
    std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
    bits += 0x7fffu + ((bits >> 16) & 1u);
    bits &= 0xffff0000u;
    REQUIRE(quantize(x, make_format(8, 7)) == std::bit_cast<float>(bits));
  }
}

TEST_CASE("idempotence, monotonicity and symmetry") {
  const auto c = oracle::codec_property_violations(200000, 9);
  CHECK(c.idempotence == 0);
  CHECK(c.monotonicity == 0);
  CHECK(c.symmetry == 0);
}

TEST_CASE("tensor quantization matches elementwise") {
  std::vector<float> v = {0.1f, -3.3f, 1e-9f, 250.0f, -0.0f};
  std::vector<float> expect;
  const FpFormat f = make_format(4, 3);
  for (float x : v) expect.push_back(quantize(x, f));
  quantize_tensor(v, f);
  CHECK(v == expect);
}

TEST_CASE("data movement model") {
  CHECK(data_movement_model(1000, fp32()).bytes == 4000.0);
  CHECK(data_movement_model(1000, make_format(5, 10)).bytes == 2000.0);
  CHECK(data_movement_model(1000, make_format(2, 1)).bytes == 500.0);
  CHECK(data_movement_model(1000, make_format(2, 1)).compression == 8);
  CHECK(data_movement_model(1000, make_format(3, 2)).compression == 5);
}
