#include "logposit/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "logposit/error.hpp"

namespace lp {

std::string to_string(const LPParams& p) {
    std::ostringstream os;
    os.precision(17);
    os << '<' << p.n << ", " << p.es << ", " << p.rs << ", " << p.sf << '>';
    return os.str();
}

std::vector<std::string> validate(const LPParams& p) {
    std::vector<std::string> out;
    if (p.n < 2 || p.n > kMaxBits) {
        out.push_back("n = " + std::to_string(p.n) + " outside [2, 8]");
    }
    if (p.es < 0) {
        out.push_back("es = " + std::to_string(p.es) + " is negative");
    }
    if (p.es > p.n - 3) {
        out.push_back("es = " + std::to_string(p.es) + " > n-3 = " + std::to_string(p.n - 3));
    }
    if (p.rs < 2) {
        out.push_back("rs = " + std::to_string(p.rs) + " < 2");
    }
    if (p.rs > p.n - 1) {
        out.push_back("rs = " + std::to_string(p.rs) + " > n-1 = " + std::to_string(p.n - 1));
    }
    if (!std::isfinite(p.sf)) {
        out.push_back("sf is not finite");
    }
    return out;
}

bool is_codec_params(const LPParams& p) {
    if (p.n < 2 || p.n > kMaxBits || !std::isfinite(p.sf)) return false;
    if (p.n == 2) return p.es == 0 && p.rs == 1;
    return p.es >= 0 && p.es <= p.n - 3 && p.rs >= 2 && p.rs <= p.n - 1;
}

void require_codec_params(const LPParams& p) {
    if (!is_codec_params(p)) {
        std::string msg = "unsupported LP parameters " + to_string(p);
        for (const auto& v : validate(p)) msg += "; " + v;
        throw InvalidInput(msg);
    }
}

std::uint32_t pattern_mask(int n) { return (std::uint32_t{1} << n) - 1u; }
std::uint32_t zero_pattern(int) { return 0u; }
std::uint32_t nar_pattern(int n) { return std::uint32_t{1} << (n - 1); }

std::uint32_t twos_complement(std::uint32_t bits, int n) {
    return (~bits + 1u) & pattern_mask(n);
}

std::int32_t signed_value(std::uint32_t bits, int n) {
    const auto mag = static_cast<std::int32_t>(bits & pattern_mask(n));
    return (bits >> (n - 1)) & 1u ? mag - (std::int32_t{1} << n) : mag;
}

bool is_negative_pattern(std::uint32_t bits, int n) { return (bits >> (n - 1)) & 1u; }

namespace {

void check_width(BitPattern b, const LPParams& p) {
    if (b.n != p.n) {
        throw InvalidInput("pattern width " + std::to_string(b.n) + " does not match n = " +
                           std::to_string(p.n));
    }
    if ((b.bits & ~pattern_mask(b.n)) != 0) {
        throw InvalidInput("pattern has bits set above width " + std::to_string(b.n));
    }
}

}  // namespace

FieldLayout field_layout(BitPattern b, const LPParams& p) {
    require_codec_params(p);
    check_width(b, p);
    const int n = p.n;
    if (b.bits == zero_pattern(n) || b.bits == nar_pattern(n)) {
        throw InvalidInput("field_layout is undefined for the Zero and NaR patterns");
    }
    FieldLayout f;
    f.sign_bit = is_negative_pattern(b.bits, n) ? 1 : 0;
    const std::uint32_t mag = f.sign_bit ? twos_complement(b.bits, n) : b.bits;

    int pos = n - 2;  // next bit to read, counted from the LSB
    const std::uint32_t first = (mag >> pos) & 1u;
    while (f.run_length < p.rs && pos >= 0 && ((mag >> pos) & 1u) == first) {
        ++f.run_length;
        --pos;
    }
    f.regime_capped = f.run_length == p.rs;
    if (!f.regime_capped) --pos;  // terminating bit
    f.k = first ? f.run_length - 1 : -f.run_length;

    const int remaining = pos + 1;
    f.exponent_bits_used = std::min(p.es, remaining);
    f.fraction_bits_used = remaining - f.exponent_bits_used;
    f.exponent_field = (mag >> f.fraction_bits_used) & pattern_mask(f.exponent_bits_used);
    f.exponent = f.exponent_field << (p.es - f.exponent_bits_used);
    f.fraction_field = mag & pattern_mask(f.fraction_bits_used);
    return f;
}

double DecodedValue::fprime() const { return std::ldexp(static_cast<double>(fraction), -fraction_bits); }

double DecodedValue::ulfx() const { return static_cast<double>(e) + fprime(); }

double DecodedValue::unbiased_exponent(int es) const {
    return static_cast<double>((std::int64_t{1} << es) * k) + ulfx();
}

double DecodedValue::log2_magnitude(const LPParams& p) const { return unbiased_exponent(p.es) - p.sf; }

double DecodedValue::value(const LPParams& p) const {
    switch (special) {
        case Special::Zero:
            return 0.0;
        case Special::NaR:
            return std::numeric_limits<double>::quiet_NaN();
        case Special::Normal:
            break;
    }
    return sign * std::exp2(log2_magnitude(p));
}

DecodedValue decode(BitPattern b, const LPParams& p) {
    require_codec_params(p);
    check_width(b, p);
    DecodedValue d;
    if (b.bits == zero_pattern(p.n)) {
        d.special = Special::Zero;
        return d;
    }
    if (b.bits == nar_pattern(p.n)) {
        d.special = Special::NaR;
        return d;
    }
    const FieldLayout f = field_layout(b, p);
    d.special = Special::Normal;
    d.sign = f.sign_bit ? -1 : 1;
    d.k = f.k;
    d.e = f.exponent;
    d.fraction = f.fraction_field;
    d.fraction_bits = f.fraction_bits_used;
    return d;
}

double decode_value(BitPattern b, const LPParams& p) { return decode(b, p).value(p); }

BitPattern encode(double x, const LPParams& p) { return Codec(p).encode(x); }

std::vector<EnumEntry> enumerate(const LPParams& p) {
    require_codec_params(p);
    const int n = p.n;
    std::vector<EnumEntry> out;
    out.reserve(std::size_t{1} << n);
    for (std::int32_t s = -(std::int32_t{1} << (n - 1)); s < (std::int32_t{1} << (n - 1)); ++s) {
        EnumEntry e;
        e.bits = static_cast<std::uint32_t>(s) & pattern_mask(n);
        e.as_signed = s;
        const DecodedValue d = decode(BitPattern{e.bits, n}, p);
        e.special = d.special;
        e.value = d.value(p);
        out.push_back(e);
    }
    return out;
}

std::vector<ProfilePoint> accuracy_profile(const LPParams& p) {
    const Codec codec(p);
    const auto ex = codec.positive_exponents();
    const double log10_2 = std::log10(2.0);
    std::vector<ProfilePoint> out;
    for (std::size_t i = 0; i + 1 < ex.size(); ++i) {
        const double gap = ex[i + 1] - ex[i];  // log2(v[i+1] / v[i])
        ProfilePoint pt;
        pt.log10_magnitude = ((ex[i] + ex[i + 1]) / 2.0 - p.sf) * log10_2;
        pt.decimal_digits = -std::log10(gap * log10_2);
        out.push_back(pt);
    }
    return out;
}

Codec::Codec(const LPParams& p) : params_(p) {
    require_codec_params(p);
    const int n = p.n;
    const std::uint32_t npos = (std::uint32_t{1} << (n - 1)) - 1u;
    exponents_.reserve(npos);
    for (std::uint32_t bits = 1; bits <= npos; ++bits) {
        exponents_.push_back(lp::decode(BitPattern{bits, n}, p).unbiased_exponent(p.es));
    }
    values_.resize(std::size_t{1} << n);
    for (std::uint32_t bits = 0; bits < values_.size(); ++bits) {
        values_[bits] = lp::decode(BitPattern{bits, n}, p).value(p);
    }
}

double Codec::decode(std::uint32_t bits) const { return values_.at(bits); }

double Codec::max_value() const { return std::exp2(exponents_.back() - params_.sf); }

double Codec::min_positive() const { return std::exp2(exponents_.front() - params_.sf); }

BitPattern Codec::encode(double x) const {
    const int n = params_.n;
    if (!std::isfinite(x)) return {nar_pattern(n), n};
    if (x == 0.0) return {zero_pattern(n), n};
    return encode_log2(x < 0.0, std::log2(std::fabs(x)));
}

BitPattern Codec::encode_log2(bool negative, double log2_magnitude) const {
    const int n = params_.n;
    if (std::isnan(log2_magnitude)) return {nar_pattern(n), n};
    const double t = log2_magnitude + params_.sf;
    const auto& ex = exponents_;
    if (t < ex.front() - 1.0) return {zero_pattern(n), n};

    std::size_t idx;
    if (t <= ex.front()) {
        idx = 0;
    } else if (t >= ex.back()) {
        idx = ex.size() - 1;
    } else {
        const auto it = std::upper_bound(ex.begin(), ex.end(), t);
        const auto hi = static_cast<std::size_t>(it - ex.begin());
        const std::size_t lo = hi - 1;
        const double below = t - ex[lo];
        const double above = ex[hi] - t;
        if (below < above) {
            idx = lo;
        } else if (above < below) {
            idx = hi;
        } else {
            // pattern = idx + 1, so the even pattern has an odd index
            idx = (lo % 2 == 1) ? lo : hi;
        }
    }
    std::uint32_t bits = static_cast<std::uint32_t>(idx + 1);
    if (negative) bits = twos_complement(bits, n);
    return {bits, n};
}

}  // namespace lp
