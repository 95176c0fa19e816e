#pragma once
//
// Logarithmic posit (LP) number format.
//
// An LP value with parameters <n, es, rs, sf> is laid out like a posit:
//
//   sign | regime (run of identical bits, at most rs wide) | exponent (es) | fraction
//
// but the exponent and fraction bits together form one fixed-point number
// ulfx = e + f', where the fraction bits are read directly as the
// log-domain fraction f'. The magnitude is therefore always a power of two:
//
//   x = (-1)^sign * 2^(2^es * k - sf + ulfx)
//
// Negative values are the two's complement of the positive pattern, the
// all-zeros pattern is zero, and 1 followed by zeros is NaR.
//

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lp {

inline constexpr int kMaxBits = 8;

struct LPParams {
    int n = 8;
    int es = 1;
    int rs = 7;
    double sf = 0.0;

    friend bool operator==(const LPParams&, const LPParams&) = default;
};

std::string to_string(const LPParams& p);

// Checks the bounds used by the quantization search space:
// 2 <= n <= 8, 0 <= es <= n-3, 2 <= rs <= n-1, finite sf.
// Returns one message per violated bound; empty means valid.
std::vector<std::string> validate(const LPParams& p);

// Looser structural check used by the codec itself. Accepts everything
// validate() accepts plus the ternary 2-bit format <2, 0, 1, sf> used for
// packed 2-bit weights. Throws InvalidInput otherwise.
void require_codec_params(const LPParams& p);
bool is_codec_params(const LPParams& p);

struct BitPattern {
    std::uint32_t bits = 0;
    int n = 8;

    friend bool operator==(const BitPattern&, const BitPattern&) = default;
};

enum class Special { Normal, Zero, NaR };

std::uint32_t pattern_mask(int n);
std::uint32_t zero_pattern(int n);
std::uint32_t nar_pattern(int n);
std::uint32_t twos_complement(std::uint32_t bits, int n);
// Pattern read as an n-bit two's-complement integer.
std::int32_t signed_value(std::uint32_t bits, int n);
bool is_negative_pattern(std::uint32_t bits, int n);

struct FieldLayout {
    int sign_bit = 0;
    int run_length = 0;          // m
    int k = 0;                   // -m for a run of 0s, m-1 for a run of 1s
    bool regime_capped = false;  // run reached rs without a terminator
    int exponent_bits_used = 0;  // bits actually present in the word
    int fraction_bits_used = 0;
    std::uint32_t exponent_field = 0;  // raw present bits, MSB first
    std::uint32_t fraction_field = 0;
    std::uint32_t exponent = 0;        // exponent with missing LSBs as zero
};

// Field split of a pattern. Negative patterns are read through their two's
// complement; sign_bit still reports the stored sign. Throws on the Zero
// and NaR patterns.
FieldLayout field_layout(BitPattern b, const LPParams& p);

struct DecodedValue {
    int sign = 1;  // +1 or -1
    int k = 0;
    std::uint32_t e = 0;
    std::uint32_t fraction = 0;  // f' = fraction / 2^fraction_bits
    int fraction_bits = 0;
    Special special = Special::Zero;

    double fprime() const;
    double ulfx() const;
    // 2^es * k + ulfx; an exact dyadic rational, held exactly in a double.
    double unbiased_exponent(int es) const;
    // log2 of the magnitude, i.e. unbiased_exponent - sf.
    double log2_magnitude(const LPParams& p) const;
    double value(const LPParams& p) const;
};

DecodedValue decode(BitPattern b, const LPParams& p);
double decode_value(BitPattern b, const LPParams& p);

// Nearest representable value in the log2 domain with ties to the even
// pattern, saturation at the largest magnitude and flush to zero below half
// the smallest magnitude. NaN and infinities map to NaR.
BitPattern encode(double x, const LPParams& p);

struct EnumEntry {
    std::uint32_t bits = 0;
    std::int32_t as_signed = 0;
    double value = 0.0;
    Special special = Special::Normal;
};

// All 2^n patterns sorted by their two's-complement integer value.
std::vector<EnumEntry> enumerate(const LPParams& p);

struct ProfilePoint {
    double log10_magnitude = 0.0;
    double decimal_digits = 0.0;
};

// Decimal accuracy between adjacent positive values,
// -log10(log10(v[i+1] / v[i])), at the geometric midpoint of each pair.
std::vector<ProfilePoint> accuracy_profile(const LPParams& p);

// Reusable encoder/decoder for one parameter set. The free functions above
// build one per call; tensor code should hold on to an instance.
class Codec {
public:
    explicit Codec(const LPParams& p);

    const LPParams& params() const { return params_; }
    int n() const { return params_.n; }

    BitPattern encode(double x) const;
    // Encodes the magnitude 2^log2_magnitude with the given sign.
    BitPattern encode_log2(bool negative, double log2_magnitude) const;
    double decode(std::uint32_t bits) const;
    double quantize(double x) const { return decode(encode(x).bits); }

    // Unbiased exponents of the positive patterns 1 .. 2^(n-1)-1, ascending.
    std::span<const double> positive_exponents() const { return exponents_; }
    double max_value() const;
    double min_positive() const;

private:
    LPParams params_;
    std::vector<double> exponents_;
    std::vector<double> values_;  // decoded value of every pattern, indexed by bits
};

}  // namespace lp
