// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "core/numrep.hpp"
#include "support/testutil.hpp"

using namespace tinyquant::numrep;

TEST_CASE("posit decode of the documented 8-bit pattern") {
  const PositFormat fmt{8, 2};
  CHECK(posit_decode(0b01101101, fmt) == 160.0);
  CHECK(posit_decode(0b00000000, fmt) == 0.0);
  CHECK(posit_decode(0b01000000, fmt) == 1.0);
  CHECK(std::isnan(posit_decode(0b10000000, fmt)));
  CHECK(posit_is_nar(0b10000000, fmt));
}

TEST_CASE("posit encode golden cases") {
  const PositFormat fmt{8, 2};
  CHECK(posit_encode(160.0, fmt) == 0b01101101);
  CHECK(posit_encode(1.0, fmt) == 0b01000000);
  CHECK(posit_encode(0.0, fmt) == 0);
  // Nearest code to -6.54965 decodes to -6.5.
  CHECK(posit_decode(posit_encode(-6.54965, fmt), fmt) == -6.5);
  // Non-finite values map to the not-a-real pattern.
  CHECK(posit_is_nar(posit_encode(std::numeric_limits<double>::infinity(), fmt), fmt));
  CHECK(posit_is_nar(posit_encode(std::numeric_limits<double>::quiet_NaN(), fmt), fmt));
}

TEST_CASE("posit saturation at maxpos and minpos") {
  const PositFormat fmt{8, 2};
  const double maxpos = posit_maxpos(fmt);
  const double minpos = posit_minpos(fmt);
  CHECK(posit_decode(posit_encode(maxpos * 64, fmt), fmt) == maxpos);
  CHECK(posit_decode(posit_encode(minpos / 64, fmt), fmt) == minpos);
  CHECK(posit_decode(posit_encode(-maxpos * 64, fmt), fmt) == -maxpos);
}

TEST_CASE("posit round trip, injectivity and monotonicity for small formats") {
  for (int n = 4; n <= 10; ++n) {
    for (int es = 0; es <= 2; ++es) {
      const PositFormat fmt{n, es};
      const std::uint32_t count = 1u << n;
      std::set<double> seen;
      double previous = 0;
      bool have_previous = false;
      for (std::uint32_t code = 0; code < count; ++code) {
        if (posit_is_nar(code, fmt)) continue;
        const double value = posit_decode(code, fmt);
        CHECK(seen.insert(value).second);  // injective
        CHECK(posit_encode(value, fmt) == code);
      }
      // Monotonicity over signed code order.
      for (std::int64_t sc = -(1 << (n - 1)) + 1; sc < (1 << (n - 1)); ++sc) {
        const std::uint32_t code = static_cast<std::uint32_t>(sc) & ((1u << n) - 1u);
        const double value = posit_decode(code, fmt);
        if (have_previous) CHECK(value > previous);
        previous = value;
        have_previous = true;
      }
    }
  }
}

TEST_CASE("posit decode matches the slow field-walk oracle") {
  for (int n : {8, 16}) {
    for (int es = 0; es <= 2; ++es) {
      const PositFormat fmt{n, es};
      for (std::uint32_t code = 0; code < (1u << n); ++code) {
        const double fast = posit_decode(code, fmt);
        const double slow = testutil::slow_posit_decode(code, n, es);
        if (std::isnan(slow)) {
          CHECK(std::isnan(fast));
        } else {
          CHECK(fast == slow);
        }
      }
    }
  }
}

TEST_CASE("posit quantization error is bounded by the local code gap") {
  const PositFormat fmt{8, 2};
  // Oracle neighbor table: every representable value, sorted.
  std::vector<double> values;
  for (std::uint32_t code = 0; code < 256; ++code)
    if (!posit_is_nar(code, fmt)) values.push_back(posit_decode(code, fmt));
  std::sort(values.begin(), values.end());

  testutil::Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const double r = rng.uniform(-200.0, 200.0);
    if (std::fabs(r) >= posit_maxpos(fmt) || std::fabs(r) <= posit_minpos(fmt)) continue;
    const double q = posit_decode(posit_encode(r, fmt), fmt);
    const auto above = std::lower_bound(values.begin(), values.end(), r);
    REQUIRE(above != values.begin());
    REQUIRE(above != values.end());
    const double gap = *above - *(above - 1);
    CHECK(std::fabs(q - r) <= gap);
  }
}

TEST_CASE("fixed-point scale selection") {
  CHECK(fixed_scale_for(1.6181, 16) == 14);
  CHECK(fixed_scale_for(0.0, 16) == 14);
  CHECK(fixed_scale_for(0.9, 8) == 7);
  CHECK(0.9 * 128.0 < 128.0);  // 0.9 * 2^7 = 115.2 stays below 2^(8-1)
  CHECK_THROWS(fixed_scale_for(1.0, 1));
}

TEST_CASE("fixed-point encode and decode golden values") {
  const FixedFormat fmt16{16, 14};
  CHECK(fixed_encode(1.6181, fmt16) == 26510);
  CHECK(fixed_decode(26510, fmt16) == doctest::Approx(1.61804).epsilon(1e-5));
  CHECK(fixed_encode(0.0, fmt16) == 0);
  const FixedFormat fmt13{16, 13};
  CHECK(fixed_encode(-2.139562, fmt13) == -17528);  // floor(-2.139562 * 8192)

  // Out-of-range values saturate rather than fail.
  const FixedFormat tiny{8, 7};
  CHECK(fixed_encode(1e9, tiny) == 127);
  CHECK(fixed_encode(-1e9, tiny) == -128);
}

TEST_CASE("fixed-point never overflows at the profiled scale") {
  testutil::Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 4 + rng.below(13);
    std::vector<double> values;
    double maxabs = 0;
    for (int i = 0; i < 20; ++i) {
      values.push_back(rng.uniform(-50.0, 50.0));
      maxabs = std::max(maxabs, std::fabs(values.back()));
    }
    const FixedFormat fmt{bits, fixed_scale_for(maxabs, bits)};
    for (double v : values) {
      const std::int64_t q = fixed_encode(v, fmt);
      CHECK(q > fixed_min(bits));  // saturation would clamp to the endpoints
      CHECK(q < fixed_max(bits));
    }
  }
}

TEST_CASE("zero-skew parameters and codes") {
  const ZeroSkewFormat sym = zeroskew_params(-2.0, 2.0, 8);
  CHECK(sym.skew == doctest::Approx(4.0 / 255.0).epsilon(1e-12));
  CHECK(sym.zero_point == 128);
  CHECK(zeroskew_encode(1.6181, sym) == 231);
  CHECK(zeroskew_decode(231, sym) == doctest::Approx(1.6157).epsilon(1e-4));

  const ZeroSkewFormat anchored = zeroskew_params(0.0, 1.0, 8);
  CHECK(anchored.skew == doctest::Approx(1.0 / 255.0));
  CHECK(anchored.zero_point == 0);

  const ZeroSkewFormat shifted = zeroskew_params(-1.0, 3.0, 8);
  CHECK(shifted.skew == doctest::Approx(4.0 / 255.0));
  CHECK(shifted.zero_point == 64);

  CHECK(zeroskew_encode(0.0, sym) == 128);
  CHECK(zeroskew_decode(sym.zero_point, sym) == 0.0);
  CHECK(zeroskew_encode(10.0, sym) == 255);  // clamped

  // Ranges that exclude zero are widened to include it.
  const ZeroSkewFormat widened = zeroskew_params(1.0, 3.0, 8);
  CHECK(zeroskew_decode(widened.zero_point, widened) == 0.0);
}

TEST_CASE("truncated float round trip stays within 2^-8 relative error") {
  testutil::Rng rng(13);
  for (int trial = 0; trial < 2000; ++trial) {
    const float x = static_cast<float>(rng.uniform(-1000.0, 1000.0));
    if (x == 0.0f) continue;
    const float back = truncfloat_decode(truncfloat_encode(x));
    CHECK(std::fabs(back - x) / std::fabs(x) <= std::ldexp(1.0, -8));
  }
  CHECK(truncfloat_decode(truncfloat_encode(1.0f)) == 1.0f);
  CHECK(truncfloat_decode(truncfloat_encode(-2.0f)) == -2.0f);
}

TEST_CASE("quantize facade is idempotent across representations") {
  testutil::Rng rng(99);
  std::vector<Codec> codecs;
  codecs.push_back(Codec{Rep::Posit, PositFormat{8, 2}, {}, {}});
  codecs.push_back(Codec{Rep::Posit, PositFormat{16, 1}, {}, {}});
  codecs.push_back(Codec{Rep::Fixed, {}, FixedFormat{12, 7}, {}});
  codecs.push_back(Codec{Rep::ZeroSkew, {}, {}, zeroskew_params(-4.0, 4.0, 8)});
  codecs.push_back(Codec{Rep::TruncFloat, {}, {}, {}});
  codecs.push_back(Codec{Rep::Float, {}, {}, {}});
  for (const auto& codec : codecs) {
    for (int trial = 0; trial < 300; ++trial) {
      const double r = rng.uniform(-8.0, 8.0);
      const auto once = codec.quantize(r);
      REQUIRE(once.has_value());
      const auto twice = codec.quantize(*once);
      REQUIRE(twice.has_value());
      CHECK(*twice == *once);
    }
    CHECK_FALSE(codec.quantize(std::numeric_limits<double>::quiet_NaN()).has_value());
  }
}

TEST_CASE("quantize golden values from the worked example") {
  Codec p16{Rep::Posit, PositFormat{16, 2}, {}, {}};
  Codec p8{Rep::Posit, PositFormat{8, 2}, {}, {}};
  CHECK(*p16.quantize(1.185109) == doctest::Approx(1.18506).epsilon(1e-5));
  CHECK(*p8.quantize(-2.206466) == -2.25);
  Codec fx{Rep::Fixed, {}, FixedFormat{16, 14}, {}};
  CHECK(*fx.quantize(0.0) == 0.0);
}

TEST_CASE("parameter set derives codecs from profiles") {
  ParamSet params;
  params.rep = Rep::Fixed;
  params.profile["w"] = TensorProfile{-1.6181, 1.6181, 1.6181};
  CHECK(params.codec_for("w", 16).fixed.scale == 14);
  CHECK(params.codec_for("w", 8).fixed.scale == 6);
  CHECK_THROWS(params.codec_for("unknown", 16));

  ParamSet posits;
  posits.rep = Rep::Posit;
  posits.es_by_bits[8] = 0;
  CHECK(posits.codec_for("t", 8).posit.es == 0);
  CHECK(posits.codec_for("t", 16).posit.es == 2);  // default
}
