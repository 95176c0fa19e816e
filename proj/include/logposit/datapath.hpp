#pragma once
//
// Functional model of the LP processing-element datapath:
//
//   boundary decode -> log-domain multiply (field addition)
//     -> log->linear conversion -> aligned two's-complement accumulation
//     -> linear->log conversion -> LP re-encode
//
// All stages are integer arithmetic; the only approximations are the
// converter tables and the alignment truncation in the accumulator.
//

#include <cstdint>
#include <span>
#include <vector>

#include "logposit/format.hpp"

namespace lp {

// Weight packing mode of a PE: four 2-bit, two 4-bit or one 8-bit weight.
enum class Mode { A, B, C };
enum class Path { Weight, Activation };

int weights_per_pe(Mode m);
int weight_width(Mode m);
char mode_letter(Mode m);

// Fraction bits of every unified ulfx value and of the product lnf.
inline constexpr int kUlfxFracBits = 8;

struct FieldWidths {
    int regime_bits = 16;
    int ulfx_int_bits = 8;
    int ulfx_frac_bits = 8;
};

// Per-weight field widths scale as 16/w with w weights per PE. Activation
// fields are kept at the lossless 16-bit regime / 8.8 ulfx split.
FieldWidths declared_widths(Path path, Mode mode);

// Integer part of sf applied in the regime path; the residual sf - round(sf)
// is a per-tensor exponent bias applied once at re-encode.
int sf_integer_part(const LPParams& p);
double sf_residual(const LPParams& p);

struct UnifiedOperand {
    bool sign = false;
    bool zero = true;
    std::int32_t regime = 0;  // 2^es * k - round(sf)
    std::int32_t ulfx = 0;    // e + f', fixed point with kUlfxFracBits fraction bits

    // regime + ulfx; excludes the sf residual.
    double log2_magnitude() const;
};

bool fits_declared_widths(const UnifiedOperand& op, Path path, Mode mode);

// Decodes one pattern into the unified sign/regime/ulfx form. Weights must
// have n = weight_width(mode); activations are 4- or 8-bit.
UnifiedOperand unified_decode(BitPattern b, const LPParams& p, Path path, Mode mode);

struct ProductTerm {
    bool sign = false;
    bool zero = true;
    std::int32_t regime = 0;
    std::int32_t ulfx = 0;

    std::int32_t exponent() const { return ulfx >> kUlfxFracBits; }
    std::int32_t lnf() const { return ulfx & ((1 << kUlfxFracBits) - 1); }
    double log2_magnitude() const;
    // 16-bit signed regime and 16-bit unsigned ulfx.
    bool fits_16bit() const;
};

ProductTerm mul(const UnifiedOperand& w, const UnifiedOperand& a);

// Exact rounding tables between the log-domain fraction grid and the
// linear-domain fraction grid, both with F fraction bits.
//   forward[i] = round((2^(i/2^F) - 1) * 2^F)
//   inverse[j] = round(log2(1 + j/2^F) * 2^F)
// An inverse value of 2^F means the result carries into the exponent.
class ConverterTable {
public:
    explicit ConverterTable(int frac_bits = kUlfxFracBits);
    ConverterTable(int frac_bits, std::vector<int> forward, std::vector<int> inverse);

    int frac_bits() const { return frac_bits_; }
    int log_to_linear(int lnf) const { return forward_.at(static_cast<std::size_t>(lnf)); }
    int linear_to_log(int lf) const { return inverse_.at(static_cast<std::size_t>(lf)); }
    std::span<const int> forward() const { return forward_; }
    std::span<const int> inverse() const { return inverse_; }

private:
    int frac_bits_;
    std::vector<int> forward_;
    std::vector<int> inverse_;
};

// Accumulated partial sum: value = lf * 2^(regime + exponent - W_acc + 1),
// with lf a two's-complement fraction whose magnitude is normalized to
// [1, 2) in units of 2^-(W_acc-1), or exactly zero.
struct PartialSum {
    std::int32_t regime = 0;
    std::int32_t exponent = 0;
    std::int64_t lf = 0;

    bool is_zero() const { return lf == 0; }
    bool negative() const { return lf < 0; }
    std::int32_t scale() const { return regime + exponent; }
    friend bool operator==(const PartialSum&, const PartialSum&) = default;
};

struct AccumulatorStats {
    std::uint64_t absorbed = 0;  // addends shifted entirely out of the accumulator
};

class Datapath {
public:
    struct Config {
        int acc_width = 24;    // W_acc, linear fraction width of the accumulator
        int encoder_bits = 12;  // input width of the linear->log converter at re-encode
    };

    Datapath();
    explicit Datapath(Config cfg);
    Datapath(Config cfg, ConverterTable converter);

    const Config& config() const { return cfg_; }
    const ConverterTable& converter() const { return converter_; }
    const ConverterTable& encoder_table() const { return encoder_; }
    int acc_fraction_bits() const { return cfg_.acc_width - 1; }

    PartialSum from_product(const ProductTerm& p) const;
    // Full-precision value aligned into accumulator format (used for biases).
    PartialSum from_real(double x) const;
    PartialSum align_accumulate(const PartialSum& psum, const ProductTerm& p,
                                AccumulatorStats* stats = nullptr) const;
    PartialSum add(const PartialSum& a, const PartialSum& b, AccumulatorStats* stats = nullptr) const;
    double value(const PartialSum& s) const;

    // linear->log conversion of the normalized fraction, then LP encode of
    // sign * 2^(scale + lnf + log2_offset).
    BitPattern requantize(const PartialSum& s, const LPParams& out, double log2_offset = 0.0) const;

private:
    PartialSum normalize(std::int32_t regime, std::int32_t exponent, std::int64_t lf) const;

    Config cfg_;
    ConverterTable converter_;
    ConverterTable encoder_;
};

// Extended-precision golden dot product.
long double dot_reference(std::span<const double> w, std::span<const double> a);

struct PipelineDot {
    PartialSum psum;
    double log2_offset = 0.0;  // -(sf residual of weights + activations)
    double value = 0.0;        // psum value * 2^log2_offset
};

// decode -> mul -> accumulate over k = 0 .. K-1 in order.
PipelineDot pipeline_dot(std::span<const std::uint32_t> weights, const LPParams& wp, Mode mode,
                         std::span<const std::uint32_t> acts, const LPParams& ap, const Datapath& dp,
                         AccumulatorStats* stats = nullptr);

// Row-major M x K activations times K x N weights through the same pipeline,
// reducing each output over k in order. Returns M x N partial sums.
std::vector<PartialSum> reference_gemm(std::span<const std::uint32_t> acts, const LPParams& ap,
                                       std::span<const std::uint32_t> weights, const LPParams& wp,
                                       Mode mode, int M, int K, int N, const Datapath& dp);

}  // namespace lp
