#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace mlrtl {

__extension__ typedef __int128 int128;

enum class Rounding { TruncateTowardNegInf, RoundNearestEven };
enum class Overflow { Saturate, Wrap };

// fixed<W,I,s|u>: W total bits, I integer bits (sign bit included when
// signed), W - I fractional bits. Real value of a raw r is r * 2^-(W-I).
struct FixedPointFormat {
  int total_bits = 16;
  int integer_bits = 8;
  bool is_signed = true;
  Rounding rounding = Rounding::RoundNearestEven;
  Overflow overflow = Overflow::Saturate;

  int fractional_bits() const noexcept { return total_bits - integer_bits; }
  bool valid() const noexcept;
  // Throws Error(InvalidFormat) when an invariant does not hold.
  void check() const;

  int128 min_raw() const noexcept;
  int128 max_raw() const noexcept;
  double max_value() const noexcept;

  bool same_grid(const FixedPointFormat& other) const noexcept {
    return total_bits == other.total_bits && integer_bits == other.integer_bits &&
           is_signed == other.is_signed;
  }

  bool operator==(const FixedPointFormat&) const = default;
};

FixedPointFormat make_format(int total_bits, int integer_bits, bool is_signed = true,
                             Rounding rounding = Rounding::RoundNearestEven,
                             Overflow overflow = Overflow::Saturate);

// "fixed<W,I,s|u>[,rne|trn][,sat|wrap]". The optional tokens may also appear
// inside the angle brackets, e.g. "fixed<18,8,s,rne,sat>". Missing
// signedness defaults to signed, missing modes default to rne/sat.
FixedPointFormat parse_format(std::string_view text);
std::string to_string(const FixedPointFormat& fmt);

// Full-precision format of a product of two operands.
FixedPointFormat product_format(const FixedPointFormat& a, const FixedPointFormat& b);

bool raw_fits(int128 raw, const FixedPointFormat& fmt) noexcept;

struct FixedPointValue {
  int128 raw = 0;
  FixedPointFormat format;

  double to_double() const noexcept;
  bool operator==(const FixedPointValue&) const = default;
};

// Throws Error(InvalidArgument) if raw does not fit.
FixedPointValue from_raw(int128 raw, const FixedPointFormat& fmt);

// Nearest representable value under fmt.rounding, then fmt.overflow.
// NaN maps to 0; infinities behave like out-of-range finite values.
FixedPointValue quantize_real(double x, const FixedPointFormat& fmt);
double dequantize(const FixedPointValue& v) noexcept;

// Exact result, cast once into out_fmt.
FixedPointValue fxp_add(const FixedPointValue& a, const FixedPointValue& b,
                        const FixedPointFormat& out_fmt);
FixedPointValue fxp_mul(const FixedPointValue& a, const FixedPointValue& b,
                        const FixedPointFormat& out_fmt);
FixedPointValue fxp_cast(const FixedPointValue& v, const FixedPointFormat& out_fmt);
std::strong_ordering fxp_compare(const FixedPointValue& a, const FixedPointValue& b) noexcept;

// floor(v * 2^scale_log2) for the real value of v, as an integer. Used for
// table lookups indexed by a scaled datapath value.
int128 fxp_floor_scaled(const FixedPointValue& v, int scale_log2) noexcept;

std::string int128_to_string(int128 v);
int128 int128_from_string(std::string_view text);

}  // namespace mlrtl
