#include "logposit/reference_quantizers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "logposit/error.hpp"
#include "logposit/posit_reference.hpp"

namespace lp {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw InvalidInput("bad integer '" + s + "' in " + what);
    return v;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw InvalidInput("bad number '" + s + "' in " + what);
}

double rmse(std::span<const double> x, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - q[i]) * (x[i] - q[i]);
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

double grid_rmse(std::span<const double> x, std::span<const double> grid) {
    std::vector<double> q(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) q[i] = nearest(grid, x[i]);
    return rmse(x, q);
}

double lp_rmse(std::span<const double> x, const LPParams& p) {
    const Codec codec(p);
    std::vector<double> q(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) q[i] = codec.quantize(x[i]);
    return rmse(x, q);
}

}  // namespace

FormatSpec parse_format(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw InvalidInput("format '" + s + "' lacks a ':'");
    const std::string kind = s.substr(0, colon);
    const auto args = split(s.substr(colon + 1), ',');
    FormatSpec f;
    f.text = s;
    if (kind == "lp") {
        if (args.size() != 4) throw InvalidInput("lp format needs n,es,rs,sf: '" + s + "'");
        f.kind = FormatKind::Lp;
        f.lp.n = parse_int(args[0], s);
        f.lp.es = parse_int(args[1], s);
        f.lp.rs = parse_int(args[2], s);
        if (args[3] == "auto") {
            f.auto_sf = true;
            f.lp.sf = 0.0;
        } else {
            f.lp.sf = parse_double(args[3], s);
        }
        require_codec_params(f.lp);
    } else if (kind == "posit") {
        if (args.size() != 2) throw InvalidInput("posit format needs n,es: '" + s + "'");
        f.kind = FormatKind::Posit;
        f.n = parse_int(args[0], s);
        f.es = parse_int(args[1], s);
        if (f.n < 2 || f.n > 16 || f.es < 0 || f.es > 4) throw InvalidInput("posit needs 2 <= n <= 16, 0 <= es <= 4");
    } else if (kind == "int") {
        if (args.size() != 1) throw InvalidInput("int format needs bits: '" + s + "'");
        f.kind = FormatKind::IntAffine;
        f.n = parse_int(args[0], s);
        if (f.n < 1 || f.n > 16) throw InvalidInput("int needs 1 <= bits <= 16");
    } else if (kind == "minifloat") {
        if (args.size() != 2) throw InvalidInput("minifloat format needs e,m: '" + s + "'");
        f.kind = FormatKind::Minifloat;
        f.exp_bits = parse_int(args[0], s);
        f.man_bits = parse_int(args[1], s);
        if (f.exp_bits < 1 || f.exp_bits > 8 || f.man_bits < 0 || f.man_bits > 10) {
            throw InvalidInput("minifloat needs 1 <= e <= 8, 0 <= m <= 10");
        }
    } else {
        throw InvalidInput("unknown format kind '" + kind + "' (lp, posit, int, minifloat)");
    }
    return f;
}

std::vector<double> posit_values(int n, int es) {
    std::vector<double> out;
    const std::uint32_t count = std::uint32_t{1} << n;
    for (std::uint32_t b = 0; b < count; ++b) {
        const double v = standard_posit_decode(b, n, es);
        if (!std::isnan(v)) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> minifloat_values(int exp_bits, int man_bits) {
    std::vector<double> out;
    const int bias = (1 << (exp_bits - 1)) - 1;
    for (int e = 0; e < (1 << exp_bits); ++e) {
        for (int m = 0; m < (1 << man_bits); ++m) {
            const double frac = std::ldexp(static_cast<double>(m), -man_bits);
            const double v = e == 0 ? std::ldexp(frac, 1 - bias) : std::ldexp(1.0 + frac, e - bias);
            out.push_back(v);
            if (v != 0.0) out.push_back(-v);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

double nearest(std::span<const double> grid, double x) {
    if (grid.empty()) throw InvalidInput("nearest: empty grid");
    const auto it = std::lower_bound(grid.begin(), grid.end(), x);
    if (it == grid.begin()) return grid.front();
    if (it == grid.end()) return grid.back();
    const double hi = *it, lo = *(it - 1);
    if (x - lo < hi - x) return lo;
    if (hi - x < x - lo) return hi;
    const auto idx = static_cast<std::size_t>(it - grid.begin());
    return idx % 2 == 0 ? hi : lo;
}

RmseResult quantization_rmse(std::span<const double> x, const FormatSpec& f) {
    RmseResult r;
    r.format = f.text;
    switch (f.kind) {
        case FormatKind::Lp: {
            if (!f.auto_sf) {
                r.sf = f.lp.sf;
                r.rmse = lp_rmse(x, f.lp);
                break;
            }
            double mean = 0.0;
            std::size_t nz = 0;
            for (double v : x) {
                if (v != 0.0) {
                    mean += std::log2(std::fabs(v));
                    ++nz;
                }
            }
            const double center = nz ? -mean / static_cast<double>(nz) : 0.0;
            std::vector<double> candidates{0.0};
            for (int i = -64; i <= 64; ++i) candidates.push_back(center + i / 8.0);
            LPParams p = f.lp;
            r.rmse = std::numeric_limits<double>::infinity();
            for (double sf : candidates) {
                p.sf = sf;
                const double e = lp_rmse(x, p);
                if (e < r.rmse) {
                    r.rmse = e;
                    r.sf = sf;
                }
            }
            break;
        }
        case FormatKind::Posit:
            r.rmse = grid_rmse(x, posit_values(f.n, f.es));
            break;
        case FormatKind::Minifloat:
            r.rmse = grid_rmse(x, minifloat_values(f.exp_bits, f.man_bits));
            break;
        case FormatKind::IntAffine: {
            if (x.empty()) break;
            const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
            const double levels = std::ldexp(1.0, f.n) - 1.0;
            const double scale = *hi > *lo ? (*hi - *lo) / levels : 1.0;
            std::vector<double> q(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double k = std::clamp(std::nearbyint((x[i] - *lo) / scale), 0.0, levels);
                q[i] = *lo + k * scale;
            }
            r.rmse = rmse(x, q);
            break;
        }
    }
    return r;
}

std::vector<double> sample_distribution(const std::string& name, std::size_t count, double mu, double sigma,
                                        std::uint64_t seed) {
    if (!(sigma > 0.0)) throw InvalidInput("distribution scale must be > 0");
    std::mt19937_64 rng(seed);
    std::vector<double> out(count);
    if (name == "lognormal") {
        std::lognormal_distribution<double> d(mu, sigma);
        for (auto& v : out) v = d(rng);
    } else if (name == "normal") {
        std::normal_distribution<double> d(mu, sigma);
        for (auto& v : out) v = d(rng);
    } else if (name == "laplace") {
        std::exponential_distribution<double> d(1.0 / sigma);
        std::bernoulli_distribution coin(0.5);
        for (auto& v : out) v = mu + (coin(rng) ? d(rng) : -d(rng));
    } else {
        throw InvalidInput("unknown distribution '" + name + "' (lognormal, normal, laplace)");
    }
    return out;
}

}  // namespace lp
