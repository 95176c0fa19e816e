#include "logposit/datapath.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "logposit/error.hpp"

namespace lp {

int weights_per_pe(Mode m) {
    switch (m) {
        case Mode::A: return 4;
        case Mode::B: return 2;
        case Mode::C: return 1;
    }
    return 1;
}

int weight_width(Mode m) { return 8 / weights_per_pe(m); }

char mode_letter(Mode m) {
    switch (m) {
        case Mode::A: return 'A';
        case Mode::B: return 'B';
        case Mode::C: return 'C';
    }
    return '?';
}

FieldWidths declared_widths(Path path, Mode mode) {
    if (path == Path::Activation) return {16, 8, 8};
    const int w = weights_per_pe(mode);
    return {16 / w, 8 / w, 8 / w};
}

int sf_integer_part(const LPParams& p) { return static_cast<int>(std::lround(p.sf)); }

double sf_residual(const LPParams& p) { return p.sf - static_cast<double>(sf_integer_part(p)); }

double UnifiedOperand::log2_magnitude() const {
    return regime + std::ldexp(static_cast<double>(ulfx), -kUlfxFracBits);
}

bool fits_declared_widths(const UnifiedOperand& op, Path path, Mode mode) {
    const FieldWidths fw = declared_widths(path, mode);
    const std::int32_t rmax = (std::int32_t{1} << (fw.regime_bits - 1)) - 1;
    if (op.regime > rmax || op.regime < -rmax - 1) return false;
    if (op.ulfx < 0) return false;
    if ((op.ulfx >> kUlfxFracBits) >= (std::int32_t{1} << fw.ulfx_int_bits)) return false;
    const std::int32_t dropped = (1 << (kUlfxFracBits - fw.ulfx_frac_bits)) - 1;
    return (op.ulfx & dropped) == 0;
}

UnifiedOperand unified_decode(BitPattern b, const LPParams& p, Path path, Mode mode) {
    if (path == Path::Weight && p.n != weight_width(mode)) {
        throw InvalidInput("weight width " + std::to_string(p.n) + " does not match MODE-" +
                           mode_letter(mode));
    }
    if (path == Path::Activation && p.n != 4 && p.n != 8) {
        throw InvalidInput("activations must be 4- or 8-bit, got n = " + std::to_string(p.n));
    }
    const DecodedValue d = decode(b, p);
    if (d.special == Special::NaR) throw InvalidInput("NaR operand reached the datapath");
    UnifiedOperand op;
    if (d.special == Special::Zero) return op;
    op.zero = false;
    op.sign = d.sign < 0;
    op.regime = (std::int32_t{1} << p.es) * d.k - sf_integer_part(p);
    op.ulfx = static_cast<std::int32_t>((d.e << kUlfxFracBits) |
                                        (d.fraction << (kUlfxFracBits - d.fraction_bits)));
    return op;
}

double ProductTerm::log2_magnitude() const {
    return regime + std::ldexp(static_cast<double>(ulfx), -kUlfxFracBits);
}

bool ProductTerm::fits_16bit() const {
    return regime >= std::numeric_limits<std::int16_t>::min() &&
           regime <= std::numeric_limits<std::int16_t>::max() && ulfx >= 0 &&
           ulfx <= std::numeric_limits<std::uint16_t>::max();
}

ProductTerm mul(const UnifiedOperand& w, const UnifiedOperand& a) {
    ProductTerm t;
    t.zero = w.zero || a.zero;
    if (t.zero) return t;
    t.sign = w.sign != a.sign;
    t.regime = w.regime + a.regime;
    t.ulfx = w.ulfx + a.ulfx;
    return t;
}

ConverterTable::ConverterTable(int frac_bits) : frac_bits_(frac_bits) {
    if (frac_bits < 1 || frac_bits > 16) throw InvalidInput("converter width must be in [1, 16]");
    const int size = 1 << frac_bits;
    const double scale = static_cast<double>(size);
    forward_.resize(size);
    inverse_.resize(size);
    for (int i = 0; i < size; ++i) {
        forward_[i] = static_cast<int>(std::lround((std::exp2(i / scale) - 1.0) * scale));
        inverse_[i] = static_cast<int>(std::lround(std::log2(1.0 + i / scale) * scale));
    }
}

ConverterTable::ConverterTable(int frac_bits, std::vector<int> forward, std::vector<int> inverse)
    : frac_bits_(frac_bits), forward_(std::move(forward)), inverse_(std::move(inverse)) {
    const auto size = std::size_t{1} << frac_bits;
    if (forward_.size() != size || inverse_.size() != size) {
        throw InvalidInput("converter tables must have 2^F entries");
    }
}

Datapath::Datapath() : Datapath(Config{}) {}

Datapath::Datapath(Config cfg) : Datapath(cfg, ConverterTable(kUlfxFracBits)) {}

Datapath::Datapath(Config cfg, ConverterTable converter)
    : cfg_(cfg), converter_(std::move(converter)), encoder_(cfg.encoder_bits) {
    if (converter_.frac_bits() != kUlfxFracBits) {
        throw InvalidInput("the log->linear converter must match the 8-bit lnf field");
    }
    if (cfg_.acc_width < kUlfxFracBits + 1 || cfg_.acc_width > 60) {
        throw InvalidInput("accumulator width must be in [9, 60]");
    }
    if (cfg_.encoder_bits > cfg_.acc_width - 1) {
        throw InvalidInput("encoder converter is wider than the accumulator fraction");
    }
}

PartialSum Datapath::normalize(std::int32_t regime, std::int32_t exponent, std::int64_t lf) const {
    if (lf == 0) return {};
    const int fb = acc_fraction_bits();
    const std::int64_t lo = std::int64_t{1} << fb;
    const std::int64_t hi = lo << 1;
    while (std::llabs(lf) >= hi) {
        lf >>= 1;
        ++exponent;
    }
    while (std::llabs(lf) < lo) {
        lf *= 2;
        --exponent;
    }
    return {regime, exponent, lf};
}

PartialSum Datapath::from_product(const ProductTerm& p) const {
    if (p.zero) return {};
    const int f = kUlfxFracBits;
    std::int64_t mag = (std::int64_t{1} << f) + converter_.log_to_linear(p.lnf());
    mag <<= (acc_fraction_bits() - f);
    return normalize(p.regime, p.exponent(), p.sign ? -mag : mag);
}

PartialSum Datapath::from_real(double x) const {
    if (x == 0.0 || !std::isfinite(x)) return {};
    int e = 0;
    const double m = std::frexp(std::fabs(x), &e);  // [0.5, 1)
    const int fb = acc_fraction_bits();
    auto mag = static_cast<std::int64_t>(std::ldexp(m, fb + 1));
    return normalize(0, e - 1, x < 0 ? -mag : mag);
}

PartialSum Datapath::add(const PartialSum& a, const PartialSum& b, AccumulatorStats* stats) const {
    if (b.is_zero()) return a;
    if (a.is_zero()) return b;
    const PartialSum& big = a.scale() >= b.scale() ? a : b;
    const PartialSum& small = a.scale() >= b.scale() ? b : a;
    const int shift = big.scale() - small.scale();
    if (shift > cfg_.acc_width) {
        if (stats) ++stats->absorbed;
        return big;
    }
    const std::int64_t aligned = small.lf >> shift;  // two's-complement truncation
    return normalize(big.regime, big.exponent, big.lf + aligned);
}

PartialSum Datapath::align_accumulate(const PartialSum& psum, const ProductTerm& p,
                                      AccumulatorStats* stats) const {
    return add(psum, from_product(p), stats);
}

double Datapath::value(const PartialSum& s) const {
    if (s.is_zero()) return 0.0;
    return std::ldexp(static_cast<double>(s.lf), s.scale() - acc_fraction_bits());
}

BitPattern Datapath::requantize(const PartialSum& s, const LPParams& out, double log2_offset) const {
    require_codec_params(out);
    if (s.is_zero()) return {zero_pattern(out.n), out.n};
    const int fb = acc_fraction_bits();
    const int eb = encoder_.frac_bits();
    const std::int64_t mag = std::llabs(s.lf);
    const std::int64_t frac = mag - (std::int64_t{1} << fb);
    const int drop = fb - eb;
    std::int64_t q = drop > 0 ? (frac + (std::int64_t{1} << (drop - 1))) >> drop : frac;
    std::int32_t scale = s.scale();
    std::int64_t lnf = 0;
    if (q == (std::int64_t{1} << eb)) {
        ++scale;
    } else {
        lnf = encoder_.linear_to_log(static_cast<int>(q));
    }
    const double log2_mag = scale + std::ldexp(static_cast<double>(lnf), -eb) + log2_offset;
    return Codec(out).encode_log2(s.negative(), log2_mag);
}

long double dot_reference(std::span<const double> w, std::span<const double> a) {
    if (w.size() != a.size()) throw InvalidInput("dot_reference: length mismatch");
    long double acc = 0.0L;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += static_cast<long double>(w[i]) * static_cast<long double>(a[i]);
    }
    return acc;
}

PipelineDot pipeline_dot(std::span<const std::uint32_t> weights, const LPParams& wp, Mode mode,
                         std::span<const std::uint32_t> acts, const LPParams& ap, const Datapath& dp,
                         AccumulatorStats* stats) {
    if (weights.size() != acts.size()) throw InvalidInput("pipeline_dot: length mismatch");
    PipelineDot out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto w = unified_decode({weights[i], wp.n}, wp, Path::Weight, mode);
        const auto a = unified_decode({acts[i], ap.n}, ap, Path::Activation, mode);
        out.psum = dp.align_accumulate(out.psum, mul(w, a), stats);
    }
    out.log2_offset = -(sf_residual(wp) + sf_residual(ap));
    out.value = dp.value(out.psum) * std::exp2(out.log2_offset);
    return out;
}

std::vector<PartialSum> reference_gemm(std::span<const std::uint32_t> acts, const LPParams& ap,
                                       std::span<const std::uint32_t> weights, const LPParams& wp,
                                       Mode mode, int M, int K, int N, const Datapath& dp) {
    if (acts.size() != static_cast<std::size_t>(M) * K ||
        weights.size() != static_cast<std::size_t>(K) * N) {
        throw InvalidInput("reference_gemm: operand sizes do not match M, K, N");
    }
    std::vector<UnifiedOperand> wu(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        wu[i] = unified_decode({weights[i], wp.n}, wp, Path::Weight, mode);
    }
    std::vector<UnifiedOperand> au(acts.size());
    for (std::size_t i = 0; i < acts.size(); ++i) {
        au[i] = unified_decode({acts[i], ap.n}, ap, Path::Activation, mode);
    }
    std::vector<PartialSum> out(static_cast<std::size_t>(M) * N);
    for (int m = 0; m < M; ++m) {
        for (int n = 0; n < N; ++n) {
            PartialSum s;
            for (int k = 0; k < K; ++k) {
                s = dp.align_accumulate(s, mul(wu[k * N + n], au[m * K + k]));
            }
            out[m * N + n] = s;
        }
    }
    return out;
}

}  // namespace lp
