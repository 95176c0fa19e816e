#include "logposit/posit_reference.hpp"

#include <cmath>
#include <limits>

#include "logposit/error.hpp"

namespace lp {

double standard_posit_decode(std::uint32_t bits, int n, int es) {
    if (n < 2 || n > 32 || es < 0) throw InvalidInput("standard_posit_decode: bad n/es");
    const std::uint64_t mask = (std::uint64_t{1} << n) - 1;
    std::uint64_t word = bits & mask;
    if (word == 0) return 0.0;
    const std::uint64_t sign_bit = std::uint64_t{1} << (n - 1);
    if (word == sign_bit) return std::numeric_limits<double>::quiet_NaN();

    const bool negative = (word & sign_bit) != 0;
    if (negative) word = (~word + 1) & mask;

    // Walk the bits after the sign as a string from the MSB.
    int i = n - 2;
    auto bit = [&](int pos) { return static_cast<int>((word >> pos) & 1u); };
    const int lead = bit(i);
    int run = 0;
    while (i >= 0 && bit(i) == lead) {
        ++run;
        --i;
    }
    --i;  // terminator (may step past the end)
    const int regime = lead ? run - 1 : -run;

    long exponent = 0;
    for (int j = 0; j < es; ++j) {
        exponent <<= 1;
        if (i >= 0) {
            exponent |= bit(i);
            --i;
        }
    }
    double fraction = 1.0;
    double weight = 0.5;
    for (; i >= 0; --i) {
        if (bit(i)) fraction += weight;
        weight /= 2.0;
    }
    const double scale = std::ldexp(1.0, static_cast<int>(regime * (1L << es) + exponent));
    const double v = scale * fraction;
    return negative ? -v : v;
}

}  // namespace lp
