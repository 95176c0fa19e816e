#include "logposit/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "logposit/error.hpp"
#include "logposit/posit_reference.hpp"

namespace lp {

bool SelftestReport::ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const SelftestCheck& c) { return c.passed; });
}

double lp_bitwalk_value(std::uint32_t bits, const LPParams& p) {
    const int n = p.n;
    std::string s;
    for (int i = n - 1; i >= 0; --i) s.push_back((bits >> i) & 1u ? '1' : '0');
    if (s.find('1') == std::string::npos) return 0.0;
    if (s[0] == '1' && s.find('1', 1) == std::string::npos) return std::nan("");
    double sign = 1.0;
    if (s[0] == '1') {
        sign = -1.0;
        // Two's complement by hand: invert, then add one from the right.
        for (char& c : s) c = c == '1' ? '0' : '1';
        for (int i = n - 1; i >= 0; --i) {
            if (s[i] == '0') {
                s[i] = '1';
                break;
            }
            s[i] = '0';
        }
    }
    std::size_t i = 1;
    const char lead = s[i];
    int run = 0;
    while (i < s.size() && s[i] == lead && run < p.rs) {
        ++run;
        ++i;
    }
    if (run < p.rs && i < s.size()) ++i;  // terminator
    const int k = lead == '1' ? run - 1 : -run;
    double e = 0.0;
    for (int b = 0; b < p.es; ++b) {
        e *= 2.0;
        if (i < s.size()) e += s[i++] == '1' ? 1.0 : 0.0;
    }
    double f = 0.0, w = 0.5;
    for (; i < s.size(); ++i, w /= 2.0) f += s[i] == '1' ? w : 0.0;
    return sign * std::exp2(std::ldexp(1.0, p.es) * k - p.sf + e + f);
}

std::vector<LPParams> codec_grid(const std::vector<double>& sfs) {
    std::vector<LPParams> out;
    for (int n = 3; n <= 8; ++n) {
        for (int es = 0; es <= n - 3; ++es) {
            for (int rs = 2; rs <= n - 1; ++rs) {
                for (double sf : sfs) out.push_back({n, es, rs, sf});
            }
        }
    }
    return out;
}

namespace {

SelftestCheck fail(SelftestCheck c, const std::string& why) {
    c.passed = false;
    c.detail = why;
    return c;
}

std::string hex(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

}  // namespace

SelftestCheck check_codec(const std::vector<LPParams>& grid) {
    SelftestCheck c{"codec", true, ""};
    std::size_t patterns = 0;
    for (const LPParams& p : grid) {
        const int n = p.n;
        const std::string where = " for " + to_string(p);
        double prev = -std::numeric_limits<double>::infinity();
        // Walk patterns in signed-integer order, skipping NaR (the most negative).
        for (std::int32_t sv = -(std::int32_t{1} << (n - 1)) + 1; sv < (std::int32_t{1} << (n - 1)); ++sv) {
            const auto bits = static_cast<std::uint32_t>(sv) & pattern_mask(n);
            const double v = decode_value({bits, n}, p);
            const double oracle = lp_bitwalk_value(bits, p);
            if (v != oracle) return fail(c, "value of " + hex(bits) + where + " disagrees with the bit walk");
            if (!(v > prev)) return fail(c, "not strictly increasing at " + hex(bits) + where);
            prev = v;
            if (encode(v, p).bits != bits) return fail(c, "encode(decode(" + hex(bits) + ")) differs" + where);
            if (decode_value({twos_complement(bits, n), n}, p) != -v) {
                return fail(c, "negation symmetry fails at " + hex(bits) + where);
            }
            ++patterns;
        }
        if (!std::isnan(decode_value({nar_pattern(n), n}, p))) return fail(c, "NaR decodes to a number" + where);
    }
    c.detail = std::to_string(grid.size()) + " formats, " + std::to_string(patterns) + " patterns";
    return c;
}

SelftestCheck check_posit_agreement() {
    SelftestCheck c{"posit-agreement", true, ""};
    std::size_t compared = 0;
    for (int n = 3; n <= 8; ++n) {
        for (int es = 0; es <= n - 3; ++es) {
            const LPParams p{n, es, n - 1, 0.0};
            for (std::uint32_t b = 0; b < (std::uint32_t{1} << n); ++b) {
                if (b == zero_pattern(n) || b == nar_pattern(n)) continue;
                if (field_layout({b, n}, p).fraction_bits_used != 0) continue;
                const double lpv = decode_value({b, n}, p);
                const double pv = standard_posit_decode(b, n, es);
                if (lpv != pv) return fail(c, "pattern " + hex(b) + " of " + to_string(p) + " differs from posit");
                ++compared;
            }
        }
    }
    c.detail = std::to_string(compared) + " fraction-free patterns";
    return c;
}

SelftestCheck check_converter_bounds(const ConverterTable& t) {
    SelftestCheck c{"converter-bounds", true, ""};
    const int F = t.frac_bits();
    const double scale = std::ldexp(1.0, F);
    const double bound = std::ldexp(1.0, -F - 1);
    double worst = 0.0;
    for (int i = 0; i < (1 << F); ++i) {
        const double err = std::fabs(t.log_to_linear(i) / scale - (std::exp2(i / scale) - 1.0));
        worst = std::max(worst, err);
        if (err > bound) return fail(c, "forward entry " + std::to_string(i) + " is off by " + std::to_string(err));
        const double ierr = std::fabs(t.linear_to_log(i) / scale - std::log2(1.0 + i / scale));
        if (ierr > bound) return fail(c, "inverse entry " + std::to_string(i) + " is off by " + std::to_string(ierr));
    }
    c.detail = "max forward error " + std::to_string(worst * scale) + " / 2^" + std::to_string(F);
    return c;
}

SelftestCheck check_converter_roundtrip(const ConverterTable& t) {
    SelftestCheck c{"converter-roundtrip", true, ""};
    const int size = 1 << t.frac_bits();
    std::map<int, int> hits;
    for (int i = 0; i < size; ++i) ++hits[t.log_to_linear(i)];
    int injective = 0;
    for (int i = 0; i < size; ++i) {
        const int lf = t.log_to_linear(i);
        if (hits[lf] != 1) continue;
        ++injective;
        if (lf >= size || t.linear_to_log(lf) != i) {
            return fail(c, "inverse(forward(" + std::to_string(i) + ")) != " + std::to_string(i));
        }
    }
    c.detail = std::to_string(injective) + " injective points, " + std::to_string(size - injective) +
               " entries share a forward value";
    return c;
}

SelftestCheck check_mul_stage() {
    SelftestCheck c{"mul-stage", true, ""};
    // Every 8-bit <es, rs> at sf = 0 against every other, plus each format
    // against itself at fractional and negative sf.
    std::vector<LPParams> params;
    std::vector<std::pair<std::size_t, std::size_t>> pairings;
    for (double sf : {0.0, 1.5, -4.25}) {
        for (int es = 0; es <= 5; ++es) {
            for (int rs = 2; rs <= 7; ++rs) params.push_back({8, es, rs, sf});
        }
    }
    const std::size_t base = params.size() / 3;
    for (std::size_t i = 0; i < base; ++i) {
        for (std::size_t j = 0; j < base; ++j) pairings.emplace_back(i, j);
        pairings.emplace_back(base + i, 2 * base + i);
        pairings.emplace_back(2 * base + i, 2 * base + i);
    }
    std::vector<std::vector<UnifiedOperand>> ops;
    std::vector<std::vector<double>> logs;
    for (const auto& p : params) {
        std::vector<UnifiedOperand> o(256);
        std::vector<double> l(256, 0.0);
        for (std::uint32_t b = 0; b < 256; ++b) {
            if (b == nar_pattern(8)) continue;
            o[b] = unified_decode({b, 8}, p, Path::Weight, Mode::C);
            if (!fits_declared_widths(o[b], Path::Weight, Mode::C) ||
                !fits_declared_widths(o[b], Path::Activation, Mode::C)) {
                return fail(c, "operand " + hex(b) + " of " + to_string(p) + " exceeds its declared widths");
            }
            if (b != 0) l[b] = decode(BitPattern{b, 8}, p).log2_magnitude(p);
        }
        ops.push_back(std::move(o));
        logs.push_back(std::move(l));
    }
    std::uint64_t pairs = 0;
    for (const auto& [i, j] : pairings) {
        {
            const double offset = sf_residual(params[i]) + sf_residual(params[j]);
            for (std::uint32_t w = 0; w < 256; ++w) {
                if (w == nar_pattern(8)) continue;
                for (std::uint32_t a = 0; a < 256; ++a) {
                    if (a == nar_pattern(8)) continue;
                    const ProductTerm t = mul(ops[i][w], ops[j][a]);
                    ++pairs;
                    if (!t.fits_16bit()) {
                        return fail(c, "product of " + hex(w) + " and " + hex(a) + " overflows 16-bit fields");
                    }
                    if (w == 0 || a == 0) {
                        if (!t.zero) return fail(c, "a Zero operand gave a nonzero product");
                        continue;
                    }
                    // regime + ulfx - offset equals log2|w| + log2|a| exactly.
                    if (t.log2_magnitude() - offset != logs[i][w] + logs[j][a]) {
                        return fail(c, "product exponent of " + hex(w) + " x " + hex(a) + " is inexact");
                    }
                }
            }
        }
    }
    c.detail = std::to_string(pairs) + " operand pairs";
    return c;
}

SelftestCheck check_zero_annihilation(const Datapath& dp) {
    SelftestCheck c{"zero-annihilation", true, ""};
    const LPParams p{8, 1, 7, 0.0};
    for (std::uint32_t b = 1; b < 256; ++b) {
        if (b == nar_pattern(8)) continue;
        const auto x = unified_decode({b, 8}, p, Path::Weight, Mode::C);
        const auto z = unified_decode({0, 8}, p, Path::Activation, Mode::C);
        PartialSum s = dp.from_real(0.75);
        if (dp.align_accumulate(s, mul(x, z)) != s || dp.align_accumulate(s, mul(z, x)) != s) {
            return fail(c, "a product with Zero changed the partial sum");
        }
    }
    return c;
}

SelftestCheck check_requantize(const Datapath& dp, int samples, std::uint64_t seed) {
    SelftestCheck c{"requantize", true, ""};
    std::mt19937_64 rng(seed);
    int agree = 0, total = 0;
    for (const LPParams& p : {LPParams{8, 1, 3, 0.0}, LPParams{8, 2, 7, 0.0}, LPParams{8, 0, 4, 0.0},
                              LPParams{4, 1, 3, 0.0}, LPParams{4, 0, 2, 0.0}, LPParams{8, 1, 7, 2.0}}) {
        const Codec codec(p);
        std::uniform_real_distribution<double> lg(std::log2(codec.min_positive()) - 1.0,
                                                  std::log2(codec.max_value()) + 1.0);
        std::bernoulli_distribution neg(0.5);
        for (int i = 0; i < samples; ++i) {
            const double v = (neg(rng) ? -1.0 : 1.0) * std::exp2(lg(rng));
            const PartialSum s = dp.from_real(v);
            const std::uint32_t got = dp.requantize(s, p).bits;
            const std::uint32_t want = codec.encode(dp.value(s)).bits;
            ++total;
            if (got == want) {
                ++agree;
                continue;
            }
            if (std::abs(signed_value(got, p.n) - signed_value(want, p.n)) > 1) {
                return fail(c, "requantize of " + std::to_string(v) + " in " + to_string(p) +
                                   " is more than one pattern from encode");
            }
        }
    }
    const double rate = static_cast<double>(agree) / total;
    c.detail = std::to_string(agree) + "/" + std::to_string(total) + " identical to encode";
    if (rate < 0.99) return fail(c, c.detail + " (< 99%)");
    return c;
}

SelftestCheck check_pipeline_budget(const Datapath& dp, std::uint64_t seed) {
    SelftestCheck c{"pipeline-budget", true, ""};
    std::mt19937_64 rng(seed);
    const LPParams wp{8, 1, 5, 1.0};
    const LPParams ap{8, 2, 7, -2.0};
    const double eps = std::ldexp(1.0, -kUlfxFracBits - 1) + std::ldexp(1.0, -dp.config().acc_width + 1);
    std::uniform_int_distribution<std::uint32_t> pat(0, 255);
    double worst = 0.0;
    for (int K : {1, 4, 16, 64, 256, 1024, 4096}) {
        std::vector<std::uint32_t> w(K), a(K);
        std::vector<double> wv(K), av(K);
        double mag = 0.0;
        for (int i = 0; i < K; ++i) {
            do w[i] = pat(rng); while (w[i] == nar_pattern(8));
            do a[i] = pat(rng); while (a[i] == nar_pattern(8));
            wv[i] = decode_value({w[i], 8}, wp);
            av[i] = decode_value({a[i], 8}, ap);
            mag += std::fabs(wv[i] * av[i]);
        }
        const auto got = pipeline_dot(w, wp, Mode::C, a, ap, dp);
        const long double ref = dot_reference(wv, av);
        const double err = std::fabs(static_cast<double>(got.value - ref));
        const double budget = K * eps * mag;
        if (mag > 0.0) worst = std::max(worst, err / (K * eps * mag));
        if (err > budget) return fail(c, "K = " + std::to_string(K) + " error exceeds the budget");
    }
    c.detail = "worst error at " + std::to_string(worst) + " of budget";
    return c;
}

SelftestReport run_selftest(const SelftestOptions& opts) {
    const Datapath dp = opts.converter ? Datapath(Datapath::Config{}, *opts.converter) : Datapath();
    SelftestReport r;
    r.checks.push_back(check_codec(codec_grid({0.0, 1.5, -1.5, 4.25, -4.25})));
    r.checks.push_back(check_posit_agreement());
    r.checks.push_back(check_converter_bounds(dp.converter()));
    r.checks.push_back(check_converter_roundtrip(dp.converter()));
    r.checks.push_back(check_mul_stage());
    r.checks.push_back(check_zero_annihilation(dp));
    r.checks.push_back(check_requantize(dp, opts.requantize_samples, opts.seed));
    r.checks.push_back(check_pipeline_budget(dp, opts.seed));
    return r;
}

ConverterTable corrupted_converter(int entry, int delta) {
    const ConverterTable good;
    std::vector<int> fwd(good.forward().begin(), good.forward().end());
    std::vector<int> inv(good.inverse().begin(), good.inverse().end());
    fwd.at(static_cast<std::size_t>(entry)) += delta;
    return ConverterTable(good.frac_bits(), std::move(fwd), std::move(inv));
}

}  // namespace lp
