#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <span>
#include <vector>

#include "mlrtl/fixedpoint.hpp"

namespace mlrtl::testing {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline BigInt pow2(int e) { return BigInt(1) << e; }

inline BigInt big(int128 v) {
  const bool neg = v < 0;
  unsigned __int128 u = neg ? -static_cast<unsigned __int128>(v) : static_cast<unsigned __int128>(v);
  BigInt r = BigInt(static_cast<std::uint64_t>(u >> 64)) << 64;
  r += static_cast<std::uint64_t>(u);
  return neg ? BigInt(-r) : r;
}

inline Rational exact(double x) {
  int e = 0;
  double m = std::frexp(x, &e);
  auto mant = static_cast<long long>(std::ldexp(m, 53));
  e -= 53;
  return e >= 0 ? Rational(BigInt(mant) << e) : Rational(BigInt(mant), pow2(-e));
}

inline Rational value(int128 raw, const FixedPointFormat& f) {
  return Rational(big(raw), pow2(f.total_bits - f.integer_bits));
}

inline BigInt floor_of(const Rational& q) {
  BigInt n = numerator(q), d = denominator(q);
  BigInt t = n / d;
  if (n < 0 && t * d != n) t -= 1;
  return t;
}

inline BigInt min_raw(const FixedPointFormat& f) { return f.is_signed ? BigInt(-pow2(f.total_bits - 1)) : BigInt(0); }
inline BigInt max_raw(const FixedPointFormat& f) {
  return f.is_signed ? BigInt(pow2(f.total_bits - 1) - 1) : BigInt(pow2(f.total_bits) - 1);
}

// Rounds q * 2^F per the format, then saturates or wraps.
inline BigInt cast_raw(const Rational& q, const FixedPointFormat& f) {
  Rational s = q * Rational(pow2(f.total_bits - f.integer_bits));
  BigInt r = floor_of(s);
  if (f.rounding == Rounding::RoundNearestEven) {
    Rational frac = s - Rational(r);
    if (frac > Rational(1, 2) || (frac == Rational(1, 2) && (r & 1) != 0)) r += 1;
  }
  if (f.overflow == Overflow::Saturate) {
    if (r < min_raw(f)) return min_raw(f);
    if (r > max_raw(f)) return max_raw(f);
    return r;
  }
  BigInt m = pow2(f.total_bits);
  r %= m;
  if (r < 0) r += m;
  if (f.is_signed && r >= pow2(f.total_bits - 1)) r -= m;
  return r;
}

inline double to_double(const Rational& q) { return q.convert_to<double>(); }

// Pairwise brute-force AUC: P(score_pos > score_neg) + P(tie) / 2.
inline double brute_auc(std::span<const double> s, std::span<const int> l) {
  long long num2 = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      ++pairs;
      num2 += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(num2) / (2.0 * static_cast<double>(pairs));
}

}  // namespace mlrtl::testing
