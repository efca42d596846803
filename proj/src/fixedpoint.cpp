#include "mlrtl/fixedpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

// Every exact intermediate (aligned sums of two 64-bit raws, full products of
// two 64-bit raws, left shifts by up to 64 places) stays below 2^200.
using Wide = boost::multiprecision::int256_t;

Wide pow2(int n) { return Wide(1) << n; }

Wide floor_shift(const Wide& v, int s) {
  if (s == 0) return v;
  if (v >= 0) return v >> s;
  Wide mag = -v;
  return -((mag + pow2(s) - 1) >> s);
}

bool is_odd(const Wide& v) { return v - (floor_shift(v, 1) << 1) != 0; }

Wide round_shift(const Wide& v, int s, Rounding mode) {
  if (s > 220) {
    // |v| < 2^210 for every caller, so the result collapses.
    return (mode == Rounding::TruncateTowardNegInf && v < 0) ? Wide(-1) : Wide(0);
  }
  Wide q = floor_shift(v, s);
  if (mode == Rounding::TruncateTowardNegInf) return q;
  Wide rem = v - (q << s);
  Wide half = pow2(s - 1);
  if (rem > half || (rem == half && is_odd(q))) q += 1;
  return q;
}

int128 apply_overflow(const Wide& q, const FixedPointFormat& fmt) {
  Wide lo = Wide(fmt.min_raw());
  Wide hi = Wide(fmt.max_raw());
  if (q >= lo && q <= hi) return static_cast<int128>(q);
  if (fmt.overflow == Overflow::Saturate) return q < lo ? fmt.min_raw() : fmt.max_raw();
  Wide m = q - (floor_shift(q, fmt.total_bits) << fmt.total_bits);
  if (fmt.is_signed && m >= pow2(fmt.total_bits - 1)) m -= pow2(fmt.total_bits);
  return static_cast<int128>(m);
}

// Casts the exact value mant * 2^-frac into fmt.
int128 cast_exact(const Wide& mant, int frac, const FixedPointFormat& fmt) {
  if (mant == 0) return 0;
  int s = frac - fmt.fractional_bits();
  if (s > 0) return apply_overflow(round_shift(mant, s, fmt.rounding), fmt);
  if (s < -150) {
    // Magnitude >= 2^150: out of range for every format; low W bits are 0.
    if (fmt.overflow == Overflow::Wrap) return 0;
    return mant < 0 ? fmt.min_raw() : fmt.max_raw();
  }
  return apply_overflow(mant << -s, fmt);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(const std::string& tok, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw Error(ErrorCode::InvalidFormat, "bad integer '" + tok + "' in format '" +
                                              std::string(whole) + "'");
  return v;
}

}  // namespace

bool FixedPointFormat::valid() const noexcept {
  return total_bits >= 1 && total_bits <= 64 && integer_bits >= 0 &&
         integer_bits <= total_bits;
}

void FixedPointFormat::check() const {
  if (!valid())
    throw Error(ErrorCode::InvalidFormat,
                "invalid fixed-point format W=" + std::to_string(total_bits) +
                    " I=" + std::to_string(integer_bits));
}

int128 FixedPointFormat::min_raw() const noexcept {
  if (!is_signed) return 0;
  return -(int128(1) << (total_bits - 1));
}

int128 FixedPointFormat::max_raw() const noexcept {
  if (!is_signed) return (int128(1) << total_bits) - 1;
  return (int128(1) << (total_bits - 1)) - 1;
}

double FixedPointFormat::max_value() const noexcept {
  return std::ldexp(static_cast<double>(max_raw()), -fractional_bits());
}

FixedPointFormat make_format(int total_bits, int integer_bits, bool is_signed,
                             Rounding rounding, Overflow overflow) {
  FixedPointFormat f{total_bits, integer_bits, is_signed, rounding, overflow};
  f.check();
  return f;
}

FixedPointFormat parse_format(std::string_view text) {
  std::string s = trim(text);
  const std::string prefix = "fixed<";
  auto close = s.find('>');
  if (s.rfind(prefix, 0) != 0 || close == std::string::npos)
    throw Error(ErrorCode::InvalidFormat, "expected fixed<W,I,...>, got '" + s + "'");

  std::vector<std::string> tokens;
  auto split_into = [&tokens](const std::string& part) {
    std::size_t start = 0;
    while (start <= part.size()) {
      auto comma = part.find(',', start);
      if (comma == std::string::npos) comma = part.size();
      tokens.push_back(trim(std::string_view(part).substr(start, comma - start)));
      start = comma + 1;
    }
  };
  split_into(s.substr(prefix.size(), close - prefix.size()));
  std::string tail = trim(std::string_view(s).substr(close + 1));
  if (!tail.empty()) {
    if (tail.front() != ',')
      throw Error(ErrorCode::InvalidFormat, "unexpected text after '>' in '" + s + "'");
    split_into(tail.substr(1));
  }
  if (tokens.size() < 2)
    throw Error(ErrorCode::InvalidFormat, "format needs W and I: '" + s + "'");

  FixedPointFormat f;
  f.total_bits = parse_int(tokens[0], s);
  f.integer_bits = parse_int(tokens[1], s);
  bool seen_sign = false, seen_round = false, seen_ovf = false;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    bool* seen = nullptr;
    if (t == "s" || t == "u") {
      seen = &seen_sign;
      f.is_signed = t == "s";
    } else if (t == "rne" || t == "trn") {
      seen = &seen_round;
      f.rounding = t == "rne" ? Rounding::RoundNearestEven : Rounding::TruncateTowardNegInf;
    } else if (t == "sat" || t == "wrap") {
      seen = &seen_ovf;
      f.overflow = t == "sat" ? Overflow::Saturate : Overflow::Wrap;
    } else {
      throw Error(ErrorCode::InvalidFormat, "unknown token '" + t + "' in '" + s + "'");
    }
    if (*seen) throw Error(ErrorCode::InvalidFormat, "repeated option '" + t + "' in '" + s + "'");
    *seen = true;
  }
  f.check();
  return f;
}

std::string to_string(const FixedPointFormat& fmt) {
  std::string out = "fixed<" + std::to_string(fmt.total_bits) + "," +
                    std::to_string(fmt.integer_bits) + "," + (fmt.is_signed ? "s" : "u");
  out += fmt.rounding == Rounding::RoundNearestEven ? ",rne" : ",trn";
  out += fmt.overflow == Overflow::Saturate ? ",sat>" : ",wrap>";
  return out;
}

FixedPointFormat product_format(const FixedPointFormat& a, const FixedPointFormat& b) {
  FixedPointFormat p;
  p.is_signed = a.is_signed || b.is_signed;
  p.total_bits = a.total_bits + b.total_bits;
  p.integer_bits = a.integer_bits + b.integer_bits;
  p.rounding = Rounding::TruncateTowardNegInf;
  p.overflow = Overflow::Saturate;
  if (!p.valid())
    throw Error(ErrorCode::WidthTooSmall,
                "product of " + to_string(a) + " and " + to_string(b) + " exceeds 64 bits");
  return p;
}

bool raw_fits(int128 raw, const FixedPointFormat& fmt) noexcept {
  return raw >= fmt.min_raw() && raw <= fmt.max_raw();
}

double FixedPointValue::to_double() const noexcept { return dequantize(*this); }

FixedPointValue from_raw(int128 raw, const FixedPointFormat& fmt) {
  fmt.check();
  if (!raw_fits(raw, fmt))
    throw Error(ErrorCode::InvalidArgument,
                "raw " + int128_to_string(raw) + " does not fit " + to_string(fmt));
  return {raw, fmt};
}

FixedPointValue quantize_real(double x, const FixedPointFormat& fmt) {
  if (std::isnan(x) || x == 0.0) return {0, fmt};
  if (std::isinf(x)) {
    if (fmt.overflow == Overflow::Wrap) return {0, fmt};
    return {x < 0 ? fmt.min_raw() : fmt.max_raw(), fmt};
  }
  int exp = 0;
  double frac = std::frexp(x, &exp);
  auto mant = static_cast<std::int64_t>(std::ldexp(frac, 53));
  // x == mant * 2^(exp - 53) exactly.
  return {cast_exact(Wide(mant), 53 - exp, fmt), fmt};
}

double dequantize(const FixedPointValue& v) noexcept {
  return std::ldexp(static_cast<double>(v.raw), -v.format.fractional_bits());
}

FixedPointValue fxp_add(const FixedPointValue& a, const FixedPointValue& b,
                        const FixedPointFormat& out_fmt) {
  int fa = a.format.fractional_bits();
  int fb = b.format.fractional_bits();
  int f = std::max(fa, fb);
  Wide sum = (Wide(a.raw) << (f - fa)) + (Wide(b.raw) << (f - fb));
  return {cast_exact(sum, f, out_fmt), out_fmt};
}

FixedPointValue fxp_mul(const FixedPointValue& a, const FixedPointValue& b,
                        const FixedPointFormat& out_fmt) {
  Wide prod = Wide(a.raw) * Wide(b.raw);
  return {cast_exact(prod, a.format.fractional_bits() + b.format.fractional_bits(), out_fmt),
          out_fmt};
}

FixedPointValue fxp_cast(const FixedPointValue& v, const FixedPointFormat& out_fmt) {
  return {cast_exact(Wide(v.raw), v.format.fractional_bits(), out_fmt), out_fmt};
}

std::strong_ordering fxp_compare(const FixedPointValue& a, const FixedPointValue& b) noexcept {
  int fa = a.format.fractional_bits();
  int fb = b.format.fractional_bits();
  if (fa == fb) return a.raw <=> b.raw;
  int f = std::max(fa, fb);
  Wide x = Wide(a.raw) << (f - fa);
  Wide y = Wide(b.raw) << (f - fb);
  if (x < y) return std::strong_ordering::less;
  if (x > y) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

int128 fxp_floor_scaled(const FixedPointValue& v, int scale_log2) noexcept {
  int s = v.format.fractional_bits() - scale_log2;
  if (s >= 0) return static_cast<int128>(floor_shift(Wide(v.raw), s));
  return static_cast<int128>(Wide(v.raw) << -s);
}

std::string int128_to_string(int128 v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  // Magnitude as unsigned avoids overflow at the minimum value.
  unsigned __int128 mag = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1
                              : static_cast<unsigned __int128>(v);
  std::string digits;
  while (mag != 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(mag % 10)));
    mag /= 10;
  }
  if (neg) digits.push_back('-');
  std::reverse(digits.begin(), digits.end());
  return digits;
}

int128 int128_from_string(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) throw Error(ErrorCode::ParseError, "empty integer");
  bool neg = s[0] == '-';
  std::size_t i = (neg || s[0] == '+') ? 1 : 0;
  if (i == s.size()) throw Error(ErrorCode::ParseError, "bad integer '" + s + "'");
  Wide acc = 0;
  for (; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::ParseError, "bad integer '" + s + "'");
    acc = acc * 10 + (s[i] - '0');
    if (acc > pow2(127)) throw Error(ErrorCode::ParseError, "integer out of range '" + s + "'");
  }
  if (neg) acc = -acc;
  if (acc >= pow2(127)) throw Error(ErrorCode::ParseError, "integer out of range '" + s + "'");
  return static_cast<int128>(acc);
}

}  // namespace mlrtl
