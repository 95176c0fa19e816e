#pragma once

#include <span>
#include <string>
#include <vector>

#include "logposit/quantize.hpp"

namespace lp {

// Excess kurtosis m4 / m2^2 - 3 with population moments. Constant input
// gives 0. Throws InvalidInput for fewer than two values.
double kurtosis3(std::span<const double> v);

// Per-sample pooled vectors: row p of every layer tensor reduced with
// kurtosis3, concatenated in layer order.
std::vector<std::vector<double>> pooled_representation(const std::vector<Tensor>& taps);

// Global-local contrastive objective over S samples:
//   mean_p log(1 + exp(-<q_p, f_p>/tau) * sum_{j != p} exp(<q_p, f_j>/tau))
// on l2-normalized vectors (zero vectors stay zero).
double contrastive_loss(const std::vector<std::vector<double>>& quantized,
                        const std::vector<std::vector<double>>& full_precision, double tau);

enum class FitnessKind { Lpq, Mse, Kl, GlobalContrastive };
enum class CompressionCount { Activations, Weights };

const char* to_string(FitnessKind k);
FitnessKind fitness_kind_from_string(const std::string& s);

struct FitnessConfig {
    FitnessKind kind = FitnessKind::Lpq;
    double lambda = 0.4;
    double tau = 1.0;
    CompressionCount count = CompressionCount::Activations;
    TapPoint tap_point = TapPoint::PostActivation;
    // Subtract the full-precision mean pooled vector from both sets before
    // the contrastive loss.
    bool center_pooled = false;
};

struct FitnessBreakdown {
    double fitness = 0.0;  // l_co * l_cr^lambda, lower is better
    double l_co = 0.0;     // divergence term of the selected kind
    double l_cr = 0.0;
};

// Sum over layers of (per-sample element count of H_l, or weight count) * n_l.
double compression_loss(const Model& m, const Delta& delta, CompressionCount count);

// Holds the cached full-precision pass over the calibration set. evaluate()
// is const and safe to call from several threads at once.
class FitnessEvaluator {
public:
    FitnessEvaluator(const Model& m, Tensor calibration, FitnessConfig cfg);

    FitnessBreakdown evaluate(const Delta& delta) const;
    double compression(const Delta& delta) const;

    const Model& model() const { return model_; }
    const Tensor& calibration() const { return calib_; }
    const FitnessConfig& config() const { return cfg_; }

private:
    const Model& model_;
    Tensor calib_;
    FitnessConfig cfg_;
    Tensor fp_output_;
    std::vector<std::vector<double>> fp_pooled_;
    std::vector<double> fp_mean_;
    std::vector<double> layer_counts_;
};

}  // namespace lp
