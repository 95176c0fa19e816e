#pragma once

#include <cstdint>

namespace lp {

// Standard posit decode: unbounded regime run, missing exponent bits read as
// zero, linear fraction (1.f), no scale factor. Zero maps to 0 and NaR to NaN.
// Written independently of the LP codec so it can serve as a cross-check.
double standard_posit_decode(std::uint32_t bits, int n, int es);

}  // namespace lp
