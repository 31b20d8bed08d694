// SPDX-License-Identifier: Apache-2.0
#include "core/numrep.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "core/common.hpp"

namespace tinyquant::numrep {

namespace {

std::uint32_t low_mask(int n) {
  return n >= 32 ? 0xffffffffu : ((1u << n) - 1u);
}

}  // namespace

// ---------------------------------------------------------------------------
// Posit

bool posit_format_valid(const PositFormat& fmt) {
  return fmt.n >= 4 && fmt.n <= 32 && fmt.es >= 0 && fmt.es <= 3;
}

static void require_valid(const PositFormat& fmt) {
  if (!posit_format_valid(fmt))
    throw Error("invalid posit format (need 4 <= n <= 32, 0 <= es <= 3)", "numrep");
}

std::uint32_t posit_nar(const PositFormat& fmt) {
  return 1u << (fmt.n - 1);
}

bool posit_is_nar(std::uint32_t code, const PositFormat& fmt) {
  return (code & low_mask(fmt.n)) == posit_nar(fmt);
}

double posit_decode(std::uint32_t code, const PositFormat& fmt) {
  require_valid(fmt);
  const int n = fmt.n;
  code &= low_mask(n);
  if (code == 0) return 0.0;
  if (code == posit_nar(fmt)) return std::numeric_limits<double>::quiet_NaN();

  const bool negative = (code >> (n - 1)) & 1u;
  std::uint32_t mag = negative ? ((~code + 1u) & low_mask(n)) : code;

  // Walk the n-1 bits below the sign: regime run, delimiter, exponent,
  // fraction. Exponent bits cut off by the regime are zero-filled on the
  // right, as if the pattern continued with zeros.
  const int body = n - 1;
  const std::uint32_t first = (mag >> (body - 1)) & 1u;
  int run = 0;
  while (run < body && (((mag >> (body - 1 - run)) & 1u) == first)) ++run;
  const int regime = first ? run - 1 : -run;

  int pos = body - run - 1;  // bits remaining after regime and delimiter
  if (run == body) pos = 0;  // regime consumed everything, no delimiter

  const int e_count = std::min(fmt.es, pos);
  std::uint32_t e_bits = 0;
  if (e_count > 0) e_bits = (mag >> (pos - e_count)) & low_mask(e_count);
  const int exponent = static_cast<int>(e_bits) << (fmt.es - e_count);

  const int f_count = pos - e_count;
  const std::uint32_t f_bits = f_count > 0 ? (mag & low_mask(f_count)) : 0;
  const double significand = 1.0 + std::ldexp(static_cast<double>(f_bits), -f_count);

  const double value = std::ldexp(significand, (regime << fmt.es) + exponent);
  return negative ? -value : value;
}

double posit_maxpos(const PositFormat& fmt) {
  return posit_decode(low_mask(fmt.n - 1), fmt);  // 0111...1
}

double posit_minpos(const PositFormat& fmt) {
  return posit_decode(1u, fmt);
}

std::uint32_t posit_encode(double value, const PositFormat& fmt) {
  require_valid(fmt);
  if (!std::isfinite(value)) return posit_nar(fmt);
  if (value == 0.0) return 0u;

  const bool negative = value < 0.0;
  const double mag = std::fabs(value);
  const std::uint32_t top = low_mask(fmt.n - 1);  // maxpos code

  std::uint32_t code;
  if (mag >= posit_maxpos(fmt)) {
    code = top;
  } else if (mag <= posit_minpos(fmt)) {
    code = 1u;
  } else {
    // Positive decode is strictly increasing in the code, so binary search
    // for the largest code at or below the magnitude, then round between
    // the two neighbours, ties to the even code.
    std::uint32_t lo = 1u, hi = top;
    while (lo + 1u < hi) {
      const std::uint32_t mid = lo + (hi - lo) / 2u;
      if (posit_decode(mid, fmt) <= mag) lo = mid; else hi = mid;
    }
    const double below = posit_decode(lo, fmt);
    const double above = posit_decode(hi, fmt);
    if (mag - below < above - mag) code = lo;
    else if (mag - below > above - mag) code = hi;
    else code = (lo & 1u) == 0u ? lo : hi;
  }

  if (negative) code = (~code + 1u) & low_mask(fmt.n);
  return code;
}

// ---------------------------------------------------------------------------
// Fixed-point

int fixed_scale_for(double maxabs, int bits) {
  if (bits < 2) throw Error("fixed-point bitwidth must be >= 2", "numrep");
  if (!(maxabs >= 0.0) || !std::isfinite(maxabs))
    throw Error("fixed-point profile bound must be finite and non-negative", "numrep");
  if (maxabs == 0.0) return bits - 2;
  return (bits - 2) - std::ilogb(maxabs);
}

std::int64_t fixed_min(int bits) { return -(std::int64_t{1} << (bits - 1)); }
std::int64_t fixed_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

std::int64_t fixed_encode(double value, const FixedFormat& fmt) {
  const double scaled = std::floor(std::ldexp(value, fmt.scale));
  if (std::isnan(scaled)) throw Error("fixed_encode of NaN", "numrep");
  if (scaled <= static_cast<double>(fixed_min(fmt.bits))) return fixed_min(fmt.bits);
  if (scaled >= static_cast<double>(fixed_max(fmt.bits))) return fixed_max(fmt.bits);
  return static_cast<std::int64_t>(scaled);
}

double fixed_decode(std::int64_t q, const FixedFormat& fmt) {
  return std::ldexp(static_cast<double>(q), -fmt.scale);
}

// ---------------------------------------------------------------------------
// Zero-skew

ZeroSkewFormat zeroskew_params(double lo, double hi, int bits) {
  if (!(lo <= hi)) throw Error("zero-skew range requires lo <= hi", "numrep");
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  const double qmax = static_cast<double>((std::uint64_t{1} << bits) - 1);

  ZeroSkewFormat fmt;
  fmt.bits = bits;
  if (hi == lo) {
    fmt.skew = 1.0;
    fmt.zero_point = static_cast<int>(std::lround(-lo));
  } else {
    fmt.skew = (hi - lo) / qmax;
    fmt.zero_point = static_cast<int>(std::lround(-lo / fmt.skew));
  }
  fmt.zero_point = std::max(0, std::min(static_cast<int>(qmax), fmt.zero_point));
  return fmt;
}

std::uint32_t zeroskew_encode(double value, const ZeroSkewFormat& fmt) {
  const double qmax = static_cast<double>((std::uint64_t{1} << fmt.bits) - 1);
  const double q = std::floor(value / fmt.skew) + fmt.zero_point;
  if (std::isnan(q)) throw Error("zeroskew_encode of NaN", "numrep");
  if (q <= 0.0) return 0u;
  if (q >= qmax) return static_cast<std::uint32_t>(qmax);
  return static_cast<std::uint32_t>(q);
}

double zeroskew_decode(std::uint32_t q, const ZeroSkewFormat& fmt) {
  return fmt.skew * (static_cast<double>(q) - fmt.zero_point);
}

// ---------------------------------------------------------------------------
// Truncated float

std::uint16_t truncfloat_encode(float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  // Round to nearest even on the discarded 16 low bits; NaN stays NaN.
  if ((bits & 0x7f800000u) == 0x7f800000u && (bits & 0x007fffffu) != 0)
    return static_cast<std::uint16_t>((bits >> 16) | 0x0040u);
  bits += 0x7fffu + ((bits >> 16) & 1u);
  return static_cast<std::uint16_t>(bits >> 16);
}

float truncfloat_decode(std::uint16_t code) {
  const std::uint32_t bits = static_cast<std::uint32_t>(code) << 16;
  float value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

// ---------------------------------------------------------------------------
// Facade

const char* rep_name(Rep rep) {
  switch (rep) {
    case Rep::Float: return "float";
    case Rep::Fixed: return "fixed";
    case Rep::Posit: return "posit";
    case Rep::ZeroSkew: return "zeroskew";
    case Rep::TruncFloat: return "truncfloat";
  }
  return "?";
}

std::optional<Rep> rep_from_name(const std::string& name) {
  if (name == "float") return Rep::Float;
  if (name == "fixed") return Rep::Fixed;
  if (name == "posit") return Rep::Posit;
  if (name == "zeroskew") return Rep::ZeroSkew;
  if (name == "truncfloat") return Rep::TruncFloat;
  return std::nullopt;
}

std::optional<double> Codec::quantize(double value) const {
  if (!std::isfinite(value)) return std::nullopt;
  switch (rep) {
    case Rep::Float:
      return value;
    case Rep::Fixed:
      return fixed_decode(fixed_encode(value, fixed), fixed);
    case Rep::Posit: {
      const std::uint32_t code = posit_encode(value, posit);
      if (posit_is_nar(code, posit)) return std::nullopt;
      return posit_decode(code, posit);
    }
    case Rep::ZeroSkew:
      return zeroskew_decode(zeroskew_encode(value, zskew), zskew);
    case Rep::TruncFloat:
      return static_cast<double>(truncfloat_decode(truncfloat_encode(static_cast<float>(value))));
  }
  return std::nullopt;
}

int ParamSet::es_for(int bits) const {
  const auto it = es_by_bits.find(bits);
  return it == es_by_bits.end() ? 2 : it->second;
}

Codec ParamSet::codec_for(const std::string& tensor, int bits) const {
  Codec codec;
  codec.rep = rep;
  switch (rep) {
    case Rep::Float:
      break;
    case Rep::Posit:
      codec.posit = PositFormat{bits, es_for(bits)};
      break;
    case Rep::TruncFloat:
      break;
    case Rep::Fixed:
    case Rep::ZeroSkew: {
      const auto it = profile.find(tensor);
      if (it == profile.end())
        throw Error("no runtime profile for tensor '" + tensor + "'", "numrep");
      if (rep == Rep::Fixed)
        codec.fixed = FixedFormat{bits, fixed_scale_for(it->second.maxabs, bits)};
      else
        codec.zskew = zeroskew_params(it->second.lo, it->second.hi, bits);
      break;
    }
  }
  return codec;
}

}  // namespace tinyquant::numrep
