#pragma once
//
// Shared test helpers: a small random generator with the value shapes the
// property tests need, and oracles written without the library's codec.
//

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "logposit/format.hpp"

namespace lptest {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal(double mu = 0.0, double sigma = 1.0) { return std::normal_distribution<double>(mu, sigma)(rng_); }
    bool coin() { return integer(0, 1) == 1; }
    std::uint32_t bits(int n) { return static_cast<std::uint32_t>(integer(0, (1 << n) - 1)); }

    // A pattern that is neither Zero nor NaR.
    std::uint32_t normal_bits(int n) {
        for (;;) {
            const std::uint32_t b = bits(n);
            if (b != 0 && b != (1u << (n - 1))) return b;
        }
    }

    // Any pattern, with Zero showing up about one time in eight.
    std::uint32_t operand_bits(int n) { return integer(0, 7) == 0 ? 0u : normal_bits(n); }

    lp::LPParams params(int n) {
        lp::LPParams p;
        p.n = n;
        if (n == 2) {
            p.es = 0;
            p.rs = 1;
        } else {
            p.es = integer(0, n - 3);
            p.rs = integer(2, n - 1);
        }
        p.sf = integer(-16, 16) / 4.0;
        return p;
    }

    lp::LPParams params() { return params(integer(3, 8)); }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline std::string to_bitstring(std::uint32_t bits, int n) {
    std::string s;
    for (int i = n - 1; i >= 0; --i) s.push_back(((bits >> i) & 1u) ? '1' : '0');
    return s;
}

// log2 of the magnitude of an LP pattern, read off the bit string. Returns
// NaN for Zero and NaR. Exact: every quantity is a small dyadic rational.
inline double oracle_log2(std::uint32_t bits, int n, int es, int rs, double sf) {
    const std::uint32_t mask = (1u << n) - 1;
    if (bits == 0 || bits == (1u << (n - 1))) return std::nan("");
    std::string s = to_bitstring(bits, n);
    if (s[0] == '1') s = to_bitstring((~bits + 1u) & mask, n);
    const std::string body = s.substr(1);
    std::size_t run = 1;
    while (run < body.size() && run < static_cast<std::size_t>(rs) && body[run] == body[0]) ++run;
    const int k = body[0] == '1' ? static_cast<int>(run) - 1 : -static_cast<int>(run);
    std::size_t pos = run;
    if (run < static_cast<std::size_t>(rs) && pos < body.size()) ++pos;  // terminator
    int e = 0;
    for (int i = 0; i < es; ++i) {
        e <<= 1;
        if (pos < body.size()) e |= body[pos++] == '1';
    }
    double frac = 0.0, w = 0.5;
    for (; pos < body.size(); ++pos, w /= 2) {
        if (body[pos] == '1') frac += w;
    }
    return std::ldexp(1.0, es) * k + e + frac - sf;
}

inline double oracle_value(std::uint32_t bits, const lp::LPParams& p) {
    if (bits == 0) return 0.0;
    const double l = oracle_log2(bits, p.n, p.es, p.rs, p.sf);
    if (std::isnan(l)) return l;
    const bool neg = (bits >> (p.n - 1)) & 1u;
    return (neg ? -1.0 : 1.0) * std::exp2(l);
}

// Every <n, es, rs> accepted by validate() for n in [lo, hi].
inline std::vector<lp::LPParams> valid_grid(int lo, int hi, const std::vector<double>& sfs) {
    std::vector<lp::LPParams> out;
    for (int n = lo; n <= hi; ++n) {
        for (int es = 0; es <= n - 3; ++es) {
            for (int rs = 2; rs <= n - 1; ++rs) {
                for (double sf : sfs) out.push_back({n, es, rs, sf});
            }
        }
    }
    return out;
}

}  // namespace lptest
