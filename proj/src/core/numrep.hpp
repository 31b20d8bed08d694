// SPDX-License-Identifier: Apache-2.0
//
// Number representation codecs: posit, fixed-point, zero-skew and truncated
// 16-bit float, plus a uniform per-tensor quantizer built on top of them.
// All functions here are pure; formats are plain value types.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace tinyquant::numrep {

// ---------------------------------------------------------------------------
// Posit

struct PositFormat {
  int n = 16;  // total bits, 4..32
  int es = 2;  // max exponent bits, 0..3
};

bool posit_format_valid(const PositFormat& fmt);

// Code of the single not-a-real pattern (1 followed by zeros).
std::uint32_t posit_nar(const PositFormat& fmt);
bool posit_is_nar(std::uint32_t code, const PositFormat& fmt);

// Decodes an n-bit pattern. NaR decodes to a quiet NaN; use posit_is_nar to
// distinguish it. Negative codes are handled by two's-complement negation.
double posit_decode(std::uint32_t code, const PositFormat& fmt);

// Nearest representable posit, ties to the even code. Zero maps to the
// all-zero code, non-finite inputs to NaR, and magnitudes outside
// [minpos, maxpos] saturate instead of wrapping to zero or NaR.
std::uint32_t posit_encode(double value, const PositFormat& fmt);

double posit_maxpos(const PositFormat& fmt);
double posit_minpos(const PositFormat& fmt);

// ---------------------------------------------------------------------------
// Fixed-point

struct FixedFormat {
  int bits = 16;
  int scale = 0;  // real r is stored as the integer floor(r * 2^scale)
};

// Largest scale such that encoding any |v| <= maxabs cannot overflow a
// signed `bits`-wide integer. maxabs == 0 falls back to bits - 2.
int fixed_scale_for(double maxabs, int bits);

// floor(r * 2^scale), saturated to the signed `bits` range.
std::int64_t fixed_encode(double value, const FixedFormat& fmt);
double fixed_decode(std::int64_t q, const FixedFormat& fmt);

std::int64_t fixed_min(int bits);
std::int64_t fixed_max(int bits);

// ---------------------------------------------------------------------------
// Zero-skew (affine unsigned quantization r = S * (q - Z))

struct ZeroSkewFormat {
  int bits = 8;
  double skew = 1.0;   // S > 0
  int zero_point = 0;  // Z in [0, 2^bits - 1]; decode(Z) == 0 exactly
};

// Parameters covering [lo, hi]; the range is widened to include zero first.
ZeroSkewFormat zeroskew_params(double lo, double hi, int bits);

std::uint32_t zeroskew_encode(double value, const ZeroSkewFormat& fmt);
double zeroskew_decode(std::uint32_t q, const ZeroSkewFormat& fmt);

// ---------------------------------------------------------------------------
// Truncated 16-bit float: binary32 with the mantissa rounded to 7 explicit
// bits, round-to-nearest-even (the upper half of the float bit pattern).

std::uint16_t truncfloat_encode(float value);
float truncfloat_decode(std::uint16_t code);

// ---------------------------------------------------------------------------
// Uniform facade

enum class Rep { Float, Fixed, Posit, ZeroSkew, TruncFloat };

const char* rep_name(Rep rep);
std::optional<Rep> rep_from_name(const std::string& name);

// A per-tensor quantizer at one specific bitwidth.
struct Codec {
  Rep rep = Rep::Float;
  PositFormat posit{};
  FixedFormat fixed{};
  ZeroSkewFormat zskew{};

  // decode(encode(value)); idempotent. nullopt when the value is not
  // representable (non-finite input, posit NaR).
  std::optional<double> quantize(double value) const;
};

// Runtime range of one tensor, gathered from the float reference run.
struct TensorProfile {
  double lo = 0.0;
  double hi = 0.0;
  double maxabs = 0.0;
};

// Representation parameters for a whole program: the representation, the
// chosen posit es per bitwidth, and per-tensor profiles from which fixed
// scales and zero-skew parameters are derived at any bitwidth.
struct ParamSet {
  Rep rep = Rep::Float;
  std::map<int, int> es_by_bits;  // posit only; absent bitwidths use es = 2
  std::map<std::string, TensorProfile> profile;

  int es_for(int bits) const;
  Codec codec_for(const std::string& tensor, int bits) const;

  static ParamSet reference() { return ParamSet{}; }
};

}  // namespace tinyquant::numrep
