#include "logposit/fitness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "logposit/error.hpp"

namespace lp {

double kurtosis3(std::span<const double> v) {
    if (v.size() < 2) throw InvalidInput("kurtosis3 needs at least two values");
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) return 0.0;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if (m2 == 0.0) return 0.0;
    return m4 / (m2 * m2) - 3.0;
}

std::vector<std::vector<double>> pooled_representation(const std::vector<Tensor>& taps) {
    if (taps.empty()) throw InvalidInput("pooled_representation needs at least one layer");
    const std::size_t S = taps.front().rows();
    std::vector<std::vector<double>> out(S);
    for (const Tensor& t : taps) {
        if (t.rows() != S) throw InvalidInput("layer taps disagree on batch size");
        for (std::size_t p = 0; p < S; ++p) out[p].push_back(kurtosis3(t.row(p)));
    }
    return out;
}

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> out(v);
    if (norm > 0.0) {
        for (double& x : out) x /= norm;
    }
    return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double contrastive_loss(const std::vector<std::vector<double>>& quantized,
                        const std::vector<std::vector<double>>& full_precision, double tau) {
    if (!(tau > 0.0)) throw InvalidInput("contrastive_loss: tau must be positive");
    if (quantized.empty() || quantized.size() != full_precision.size()) {
        throw InvalidInput("contrastive_loss: need matching, nonempty sample sets");
    }
    const std::size_t S = quantized.size();
    std::vector<std::vector<double>> q, f;
    for (std::size_t p = 0; p < S; ++p) {
        if (quantized[p].size() != full_precision[p].size()) {
            throw InvalidInput("contrastive_loss: vector length mismatch");
        }
        q.push_back(normalized(quantized[p]));
        f.push_back(normalized(full_precision[p]));
    }
    double total = 0.0;
    for (std::size_t p = 0; p < S; ++p) {
        if (S == 1) break;
        const double pos = dot(q[p], f[p]) / tau;
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> neg;
        neg.reserve(S - 1);
        for (std::size_t j = 0; j < S; ++j) {
            if (j == p) continue;
            neg.push_back(dot(q[p], f[j]) / tau);
            mx = std::max(mx, neg.back());
        }
        double s = 0.0;
        for (double x : neg) s += std::exp(x - mx);
        total += softplus(mx + std::log(s) - pos);
    }
    return total / static_cast<double>(S);
}

const char* to_string(FitnessKind k) {
    switch (k) {
        case FitnessKind::Lpq: return "lpq";
        case FitnessKind::Mse: return "mse";
        case FitnessKind::Kl: return "kl";
        case FitnessKind::GlobalContrastive: return "global-contrastive";
    }
    return "?";
}

FitnessKind fitness_kind_from_string(const std::string& s) {
    if (s == "lpq") return FitnessKind::Lpq;
    if (s == "mse") return FitnessKind::Mse;
    if (s == "kl") return FitnessKind::Kl;
    if (s == "global-contrastive") return FitnessKind::GlobalContrastive;
    throw InvalidInput("unknown fitness '" + s + "' (lpq, mse, kl, global-contrastive)");
}

namespace {

std::vector<double> per_layer_counts(const Model& m, CompressionCount count) {
    std::vector<double> out;
    const auto q = m.quantizable();
    if (count == CompressionCount::Weights) {
        for (std::size_t i : q) out.push_back(static_cast<double>(m.layers[i].weight.size()));
        return out;
    }
    // Per-sample element count of each weighted layer's output.
    const auto shapes = m.output_shapes();
    for (std::size_t i : q) out.push_back(static_cast<double>(shape_size(shapes[i])));
    return out;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    std::vector<std::vector<double>> out;
    for (std::size_t p = 0; p < t.rows(); ++p) {
        const auto r = t.row(p);
        out.emplace_back(r.begin(), r.end());
    }
    return out;
}

std::vector<double> softmax_row(std::span<const double> r) {
    const double mx = *std::max_element(r.begin(), r.end());
    std::vector<double> out(r.size());
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        out[i] = std::exp(r[i] - mx);
        s += out[i];
    }
    for (double& v : out) v /= s;
    return out;
}

}  // namespace

double compression_loss(const Model& m, const Delta& delta, CompressionCount count) {
    check_delta(m, delta);
    const auto counts = per_layer_counts(m, count);
    double total = 0.0;
    for (std::size_t l = 0; l < delta.size(); ++l) total += counts[l] * delta[l].n;
    return total;
}

FitnessEvaluator::FitnessEvaluator(const Model& m, Tensor calibration, FitnessConfig cfg)
    : model_(m), calib_(std::move(calibration)), cfg_(cfg) {
    if (calib_.rows() == 0) throw InvalidInput("calibration set is empty");
    if (!(cfg_.tau > 0.0)) throw InvalidInput("tau must be positive");
    if (!(cfg_.lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
    m.check();
    const ForwardResult fp = forward(m, calib_, true, cfg_.tap_point);
    fp_output_ = fp.output;
    fp_pooled_ = pooled_representation(fp.taps);
    if (cfg_.center_pooled) {
        fp_mean_.assign(fp_pooled_.front().size(), 0.0);
        for (const auto& v : fp_pooled_) {
            for (std::size_t i = 0; i < v.size(); ++i) fp_mean_[i] += v[i];
        }
        for (double& x : fp_mean_) x /= static_cast<double>(fp_pooled_.size());
        for (auto& v : fp_pooled_) {
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= fp_mean_[i];
        }
    }
    layer_counts_ = per_layer_counts(m, cfg_.count);
}

double FitnessEvaluator::compression(const Delta& delta) const {
    double total = 0.0;
    for (std::size_t l = 0; l < delta.size(); ++l) total += layer_counts_[l] * delta[l].n;
    return total;
}

FitnessBreakdown FitnessEvaluator::evaluate(const Delta& delta) const {
    const bool need_taps = cfg_.kind == FitnessKind::Lpq;
    const ForwardResult q = forward_quantized(model_, delta, calib_, need_taps, cfg_.tap_point);
    FitnessBreakdown b;
    switch (cfg_.kind) {
        case FitnessKind::Lpq:
        {
            auto pooled = pooled_representation(q.taps);
            if (cfg_.center_pooled) {
                for (auto& v : pooled) {
                    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= fp_mean_[i];
                }
            }
            b.l_co = contrastive_loss(pooled, fp_pooled_, cfg_.tau);
            break;
        }
        case FitnessKind::GlobalContrastive:
            b.l_co = contrastive_loss(rows_of(q.output), rows_of(fp_output_), cfg_.tau);
            break;
        case FitnessKind::Mse: {
            double s = 0.0;
            for (std::size_t i = 0; i < q.output.size(); ++i) {
                const double d = q.output.data[i] - fp_output_.data[i];
                s += d * d;
            }
            b.l_co = s / static_cast<double>(q.output.size());
            break;
        }
        case FitnessKind::Kl: {
            double s = 0.0;
            for (std::size_t p = 0; p < q.output.rows(); ++p) {
                const auto pf = softmax_row(fp_output_.row(p));
                const auto pq = softmax_row(q.output.row(p));
                for (std::size_t i = 0; i < pf.size(); ++i) {
                    if (pf[i] > 0.0) s += pf[i] * (std::log(pf[i]) - std::log(std::max(pq[i], 1e-300)));
                }
            }
            b.l_co = s / static_cast<double>(q.output.rows());
            break;
        }
    }
    b.l_cr = compression(delta);
    b.fitness = b.l_co * std::pow(b.l_cr, cfg_.lambda);
    return b;
}

}  // namespace lp
