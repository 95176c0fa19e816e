#pragma once
//
// Comparator number formats for quantization-error studies. Format strings:
//
//   lp:N,ES,RS,SF     logarithmic posit; SF may be "auto" (best of a sweep that includes 0)
//   posit:N,ES        standard posit, regime unbounded, linear fraction
//   int:BITS          affine integer over [min, max] of the sample
//   minifloat:E,M     sign + E exponent bits + M mantissa bits, IEEE bias, subnormals,
//                     no infinities (the top exponent holds ordinary values)
//

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "logposit/format.hpp"

namespace lp {

enum class FormatKind { Lp, Posit, IntAffine, Minifloat };

struct FormatSpec {
    FormatKind kind = FormatKind::Lp;
    LPParams lp;           // Lp
    bool auto_sf = false;  // Lp
    int n = 8;             // Posit width, IntAffine bits
    int es = 0;            // Posit
    int exp_bits = 4;      // Minifloat
    int man_bits = 3;      // Minifloat
    std::string text;
};

FormatSpec parse_format(const std::string& s);

// Sorted value set of a posit or minifloat format (Zero included, NaR excluded).
std::vector<double> posit_values(int n, int es);
std::vector<double> minifloat_values(int exp_bits, int man_bits);

// Nearest element of a sorted grid, clamped to its ends; ties go to the
// element with the even index.
double nearest(std::span<const double> grid, double x);

struct RmseResult {
    std::string format;
    double rmse = 0.0;
    double sf = 0.0;  // chosen sf for lp formats
};

RmseResult quantization_rmse(std::span<const double> x, const FormatSpec& f);

// Synthetic samples: "lognormal" (positive, exp(N(mu, sigma))), "normal"
// (N(mu, sigma)) and "laplace" (location mu, scale sigma).
std::vector<double> sample_distribution(const std::string& name, std::size_t count, double mu, double sigma,
                                        std::uint64_t seed);

}  // namespace lp
