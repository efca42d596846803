#include "doctest.h"
#include "generators.hpp"
#include "mlrtl/error.hpp"
#include "mlrtl/fixedpoint.hpp"
#include "oracle.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

namespace {

FixedPointFormat q(int w, int i, bool s = true) { return make_format(w, i, s); }
FixedPointValue v(int128 raw, const FixedPointFormat& f) { return from_raw(raw, f); }

}  // namespace

TEST_SUITE("fixedpoint") {

TEST_CASE("quantize_real examples") {
  auto f = q(8, 1);
  CHECK(quantize_real(0.0, f).raw == 0);
  CHECK(quantize_real(0.75, f).raw == 96);
  CHECK(quantize_real(0.3, f).raw == 38);
  CHECK(dequantize(quantize_real(0.3, f)) == 0.296875);
  CHECK(quantize_real(5.0, f).raw == 127);
  CHECK(quantize_real(-5.0, f).raw == -128);
}

TEST_CASE("dequantize examples") {
  CHECK(dequantize(v(0, q(8, 1))) == 0.0);
  CHECK(dequantize(v(96, q(8, 1))) == 0.75);
  CHECK(dequantize(v(-128, q(8, 1))) == -1.0);
}

TEST_CASE("fxp_add examples") {
  auto f = q(8, 1);
  CHECK(fxp_add(v(0, f), v(0, f), f).raw == 0);
  CHECK(fxp_add(quantize_real(0.25, f), quantize_real(0.5, f), f).raw == 96);
  CHECK(fxp_add(v(127, f), v(127, f), f).raw == 127);
}

TEST_CASE("fxp_mul examples") {
  auto f = q(8, 1);
  CHECK(fxp_mul(v(77, f), v(0, f), f).raw == 0);
  CHECK(fxp_mul(quantize_real(0.5, f), quantize_real(0.5, f), f).raw == 32);
  CHECK(fxp_mul(v(38, f), v(38, f), f).raw == 11);
  CHECK(dequantize(fxp_mul(v(38, f), v(38, f), f)) == 0.0859375);
}

TEST_CASE("fxp_compare examples") {
  CHECK(fxp_compare(v(38, q(8, 1)), v(38, q(8, 1))) == std::strong_ordering::equal);
  CHECK(fxp_compare(quantize_real(0.5, q(8, 1)), quantize_real(0.5, q(16, 2))) == std::strong_ordering::equal);
  CHECK(fxp_compare(v(38, q(8, 1)), quantize_real(0.3, q(16, 1))) == std::strong_ordering::less);
}

TEST_CASE("format strings") {
  auto f = parse_format("fixed<18,8,s,rne,sat>");
  CHECK(f == make_format(18, 8));
  CHECK(parse_format("fixed<12,4,u>,trn,wrap") ==
        make_format(12, 4, false, Rounding::TruncateTowardNegInf, Overflow::Wrap));
  CHECK(parse_format("fixed<8,1>") == make_format(8, 1));
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    auto g = random_format(rng);
    CHECK(parse_format(to_string(g)) == g);
  }
  for (const char* bad : {"fixed<0,0>", "fixed<65,1>", "fixed<8,9>", "fixed<8,-1>", "fixed<8>", "float<8,1>",
                          "fixed<8,1,x>", "fixed<8,1,s,rne,rne>", ""}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_format(bad), Error);
  }
}

TEST_CASE("from_raw rejects raws outside the format") {
  CHECK_THROWS_AS(from_raw(128, q(8, 1)), Error);
  CHECK_THROWS_AS(from_raw(-1, q(8, 1, false)), Error);
  CHECK(from_raw(255, q(8, 1, false)).raw == 255);
  CHECK(from_raw(q(64, 1).min_raw(), q(64, 1)).raw == q(64, 1).min_raw());
}

TEST_CASE("NaN quantizes to zero, infinities saturate") {
  CHECK(quantize_real(std::nan(""), q(8, 1)).raw == 0);
  CHECK(quantize_real(INFINITY, q(8, 1)).raw == 127);
  CHECK(quantize_real(-INFINITY, q(8, 1)).raw == -128);
}

TEST_CASE("oracle equivalence for add, mul, cast and quantize_real") {
  Rng rng(2024);
  for (int i = 0; i < 20000; ++i) {
    auto fa = random_format(rng), fb = random_format(rng), fo = random_format(rng);
    auto a = random_value(rng, fa), b = random_value(rng, fb);
    CAPTURE(to_string(fa));
    CAPTURE(to_string(fb));
    CAPTURE(to_string(fo));
    REQUIRE(big(fxp_add(a, b, fo).raw) == cast_raw(value(a.raw, fa) + value(b.raw, fb), fo));
    REQUIRE(big(fxp_mul(a, b, fo).raw) == cast_raw(value(a.raw, fa) * value(b.raw, fb), fo));
    REQUIRE(big(fxp_cast(a, fo).raw) == cast_raw(value(a.raw, fa), fo));
    double x = random_real(rng, fo);
    CAPTURE(x);
    REQUIRE(big(quantize_real(x, fo).raw) == cast_raw(exact(x), fo));
    auto ord = fxp_compare(a, b);
    Rational va = value(a.raw, fa), vb = value(b.raw, fb);
    REQUIRE((ord < 0) == (va < vb));
    REQUIRE((ord == 0) == (va == vb));
  }
}

TEST_CASE("round-trip error bounds") {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    auto f = random_format(rng, 52);
    f.overflow = Overflow::Saturate;
    const int frac = f.fractional_bits();
    double x = std::ldexp(static_cast<double>(random_raw(rng, f)) + uniform(rng, 0, 1), -frac);
    if (x > dequantize({f.max_raw(), f}) || x < dequantize({f.min_raw(), f})) continue;
    Rational err = value(quantize_real(x, f).raw, f) - exact(x);
    Rational ulp(1, pow2(frac));
    CAPTURE(x);
    CAPTURE(to_string(f));
    if (f.rounding == Rounding::RoundNearestEven) {
      CHECK(abs(err) <= ulp / 2);
    } else {
      CHECK(err <= 0);
      CHECK(-err < ulp);
    }
  }
}

TEST_CASE("widening is lossless") {
  Rng rng(6);
  for (int i = 0; i < 20000; ++i) {
    auto f = random_format(rng, 40);
    auto a = random_value(rng, f);
    FixedPointFormat g = f;
    g.integer_bits += uniform_int(rng, f.is_signed ? 0 : 1, 8);
    g.total_bits = g.integer_bits + f.fractional_bits() + uniform_int(rng, 0, 8);
    g.is_signed = true;
    g.rounding = uniform_int(rng, 0, 1) ? Rounding::RoundNearestEven : Rounding::TruncateTowardNegInf;
    g.overflow = uniform_int(rng, 0, 1) ? Overflow::Saturate : Overflow::Wrap;
    if (g.total_bits > 64) continue;
    CHECK(value(fxp_cast(a, g).raw, g) == value(a.raw, f));
  }
}

TEST_CASE("saturation never flips the sign") {
  Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    auto fo = random_format(rng);
    fo.overflow = Overflow::Saturate;
    fo.is_signed = true;
    auto fa = fo, fb = fo;
    fa.total_bits = fb.total_bits = std::min(64, fo.total_bits + 1);
    fa.integer_bits = fb.integer_bits = fo.integer_bits + (fa.total_bits - fo.total_bits);
    auto a = random_value(rng, fa), b = random_value(rng, fb);
    Rational exact_sum = value(a.raw, fa) + value(b.raw, fb);
    auto r = fxp_add(a, b, fo);
    if (exact_sum > 0) CHECK(r.raw >= 0);
    if (exact_sum < 0) CHECK(r.raw <= 0);
  }
}

TEST_CASE("wrap keeps the low bits") {
  auto f = make_format(8, 8, true, Rounding::TruncateTowardNegInf, Overflow::Wrap);
  CHECK(quantize_real(130.0, f).raw == -126);
  CHECK(quantize_real(-129.0, f).raw == 127);
  auto u = make_format(4, 4, false, Rounding::TruncateTowardNegInf, Overflow::Wrap);
  CHECK(quantize_real(-1.0, u).raw == 15);
  CHECK(quantize_real(17.0, u).raw == 1);
}

TEST_CASE("round nearest even breaks ties to even") {
  auto f = make_format(8, 8);
  CHECK(quantize_real(2.5, f).raw == 2);
  CHECK(quantize_real(3.5, f).raw == 4);
  CHECK(quantize_real(-2.5, f).raw == -2);
  auto t = make_format(8, 8, true, Rounding::TruncateTowardNegInf);
  CHECK(quantize_real(-2.5, t).raw == -3);
  CHECK(quantize_real(2.99, t).raw == 2);
}

TEST_CASE("64-bit extremes") {
  auto f = make_format(64, 64);
  auto a = from_raw(f.max_raw(), f), b = from_raw(f.min_raw(), f);
  CHECK(fxp_add(a, a, f).raw == f.max_raw());
  CHECK(fxp_mul(b, b, f).raw == f.max_raw());
  CHECK(fxp_mul(a, b, f).raw == f.min_raw());
  auto u = make_format(64, 0, false);
  auto c = from_raw(u.max_raw(), u);
  CHECK(big(fxp_mul(c, c, u).raw) == cast_raw(value(c.raw, u) * value(c.raw, u), u));
}

}
