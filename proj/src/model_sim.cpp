#include "logposit/model_sim.hpp"

#include <algorithm>
#include <cmath>

#include "logposit/error.hpp"

namespace lp {

Delta force_width(const Delta& delta, int n) {
    Delta out = delta;
    for (auto& p : out) {
        p.n = n;
        if (n == 2) {
            p.es = 0;
            p.rs = 1;
        } else {
            p.es = std::clamp(p.es, 0, n - 3);
            p.rs = std::clamp(p.rs, 2, n - 1);
        }
    }
    return out;
}

namespace {

// Activation patterns of a batch with their per-sample shape.
struct PatternTensor {
    Shape shape;  // includes the batch dimension
    std::vector<std::uint32_t> bits;
    LPParams params;
};

std::vector<std::uint32_t> encode_all(std::span<const double> xs, const LPParams& p) {
    const Codec codec(p);
    std::vector<std::uint32_t> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = codec.encode(xs[i]).bits;
    return out;
}

// K x N weight matrix (k = input feature or (c, ky, kx), n = output).
std::vector<std::uint32_t> weight_matrix(const LayerSpec& l, const LPParams& wp) {
    const Codec codec(wp);
    const std::size_t N = l.weight.shape[0];
    const std::size_t K = l.weight.size() / N;
    std::vector<std::uint32_t> out(K * N);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) out[k * N + n] = codec.encode(l.weight.data[n * K + k]).bits;
    }
    return out;
}

// Rows are (b, oy, ox), columns (c, ky, kx); padding reads the Zero pattern.
std::vector<std::uint32_t> im2col(const PatternTensor& x, const LayerSpec& l, std::size_t& OH, std::size_t& OW) {
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t K = l.kernel, S = l.stride, P = l.padding;
    OH = (H + 2 * P - K) / S + 1;
    OW = (W + 2 * P - K) / S + 1;
    const std::size_t cols = C * K * K;
    std::vector<std::uint32_t> out(B * OH * OW * cols, zero_pattern(x.params.n));
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                const std::size_t row = (b * OH + oy) * OW + ox;
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        const long iy = static_cast<long>(oy * S + ky) - static_cast<long>(P);
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            const long ix = static_cast<long>(ox * S + kx) - static_cast<long>(P);
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            out[row * cols + (c * K + ky) * K + kx] =
                                x.bits[((b * C + c) * H + static_cast<std::size_t>(iy)) * W +
                                       static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }
    return out;
}

void accumulate(ModelSimResult& r, LayerSim ls) {
    r.cycles += ls.report.cycles;
    r.macs += ls.report.macs;
    r.layers.push_back(std::move(ls));
}

}  // namespace

ModelSimResult simulate_model(const Model& m, const Delta& delta_in, const Tensor& batch, const ArrayConfig& cfg,
                              const Datapath& dp, const ModelSimOptions& opts) {
    m.check();
    if (m.num_quantizable() == 0) throw InvalidInput("model has no weighted layers to simulate");
    const Delta delta = opts.force_n ? force_width(delta_in, *opts.force_n) : delta_in;
    check_delta(m, delta);
    for (const auto& p : delta) select_mode(p.n);
    if (batch.rank() != m.input_shape.size() + 1 ||
        !std::equal(m.input_shape.begin(), m.input_shape.end(), batch.shape.begin() + 1)) {
        throw InvalidInput("batch shape does not match the model input shape");
    }
    if (batch.rows() == 0) throw InvalidInput("empty batch");
    if (opts.input_params.n != 4 && opts.input_params.n != 8) throw InvalidInput("input format must be 4- or 8-bit");
    const auto chain = activation_chain(delta);

    ModelSimResult result;
    PatternTensor x{batch.shape, encode_all(batch.data, opts.input_params), opts.input_params};
    std::size_t q = 0;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        if (l.kind == LayerKind::Flatten) {
            x.shape = {x.shape[0], shape_size(x.shape) / x.shape[0]};
            continue;
        }
        if (l.kind == LayerKind::Relu) {
            for (auto& b : x.bits) {
                if (is_negative_pattern(b, x.params.n) && b != nar_pattern(x.params.n)) b = zero_pattern(x.params.n);
            }
            continue;
        }
        if (l.kind == LayerKind::Softmax) {
            const Codec codec(x.params);
            const std::size_t B = x.shape[0], R = x.bits.size() / B;
            for (std::size_t b = 0; b < B; ++b) {
                std::vector<double> v(R);
                for (std::size_t j = 0; j < R; ++j) v[j] = codec.decode(x.bits[b * R + j]);
                const double mx = *std::max_element(v.begin(), v.end());
                double s = 0.0;
                for (double& e : v) s += (e = std::exp(e - mx));
                for (std::size_t j = 0; j < R; ++j) x.bits[b * R + j] = codec.encode(v[j] / s).bits;
            }
            continue;
        }

        const LPParams& wp = delta[q];
        const LPParams& op_params = chain[q];
        PpuOp op = PpuOp::None;
        if (i + 1 < m.layers.size()) {
            if (m.layers[i + 1].kind == LayerKind::Relu) op = PpuOp::Relu;
            if (m.layers[i + 1].kind == LayerKind::Softmax) op = PpuOp::Softmax;
        }
        const auto weights = weight_matrix(l, wp);
        LayerSim ls;
        ls.name = l.name;
        ls.weight_params = wp;
        ls.output_params = op_params;
        Shape out_shape;
        std::vector<std::uint32_t> acts;
        std::size_t OH = 0, OW = 0;
        const std::size_t B = x.shape[0];
        if (l.kind == LayerKind::Dense) {
            if (x.shape.size() != 2) throw InvalidInput(l.name + ": dense layer needs a flattened input");
            ls.M = static_cast<int>(B);
            ls.K = static_cast<int>(l.in_features);
            ls.N = static_cast<int>(l.out_features);
            acts = x.bits;
            out_shape = {B, l.out_features};
        } else {
            if (x.shape.size() != 4) throw InvalidInput(l.name + ": conv2d layer needs [B, C, H, W] input");
            acts = im2col(x, l, OH, OW);
            ls.M = static_cast<int>(B * OH * OW);
            ls.K = static_cast<int>(l.in_channels * l.kernel * l.kernel);
            ls.N = static_cast<int>(l.out_channels);
            out_shape = {B, l.out_channels, OH, OW};
        }
        const GemmResult g = simulate_gemm(acts, x.params, weights, wp, ls.M, ls.K, ls.N, cfg, dp);
        ls.report = g.report;
        auto out = ppu(g.psums, ls.M, ls.N, l.bias.data, g.log2_offset, op_params, op, dp);
        if (l.kind == LayerKind::Conv2d) {
            // GEMM rows (b, oy, ox) x channels -> [B, C, OH, OW].
            std::vector<std::uint32_t> nchw(out.size());
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t p = 0; p < OH * OW; ++p) {
                    for (std::size_t c = 0; c < l.out_channels; ++c) {
                        nchw[(b * l.out_channels + c) * OH * OW + p] = out[(b * OH * OW + p) * l.out_channels + c];
                    }
                }
            }
            out = std::move(nchw);
        }
        x = PatternTensor{out_shape, std::move(out), op_params};
        accumulate(result, std::move(ls));
        if (op != PpuOp::None) ++i;  // the activation layer ran inside the PPU
        ++q;
    }
    const Codec codec(x.params);
    result.output = Tensor(x.shape);
    for (std::size_t j = 0; j < x.bits.size(); ++j) result.output.data[j] = codec.decode(x.bits[j]);
    return result;
}

}  // namespace lp
