#include "logposit/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "logposit/error.hpp"

namespace lp {

namespace {

Tensor dense(const LayerSpec& l, const Tensor& x) {
    const std::size_t B = x.rows();
    Tensor y(Shape{B, l.out_features});
    for (std::size_t b = 0; b < B; ++b) {
        const auto in = x.row(b);
        auto out = y.row(b);
        for (std::size_t o = 0; o < l.out_features; ++o) {
            const auto w = l.weight.row(o);
            double acc = l.bias.data[o];
            for (std::size_t i = 0; i < l.in_features; ++i) acc += w[i] * in[i];
            out[o] = acc;
        }
    }
    return y;
}

Tensor conv2d(const LayerSpec& l, const Tensor& x) {
    const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t K = l.kernel, S = l.stride, P = l.padding;
    const std::size_t OH = (H + 2 * P - K) / S + 1;
    const std::size_t OW = (W + 2 * P - K) / S + 1;
    Tensor y(Shape{B, l.out_channels, OH, OW});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < l.out_channels; ++o) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double acc = l.bias.data[o];
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t ky = 0; ky < K; ++ky) {
                            const long iy = static_cast<long>(oy * S + ky) - static_cast<long>(P);
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const long ix = static_cast<long>(ox * S + kx) - static_cast<long>(P);
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                acc += l.weight.data[((o * C + c) * K + ky) * K + kx] *
                                       x.data[((b * C + c) * H + static_cast<std::size_t>(iy)) * W +
                                              static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    y.data[((b * l.out_channels + o) * OH + oy) * OW + ox] = acc;
                }
            }
        }
    }
    return y;
}

void relu_inplace(Tensor& t) {
    for (double& v : t.data) v = std::max(v, 0.0);
}

void softmax_inplace(Tensor& t) {
    for (std::size_t b = 0; b < t.rows(); ++b) {
        auto r = t.row(b);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : r) v /= sum;
    }
}

void quantize_inplace(Tensor& t, const Codec& codec) {
    for (double& v : t.data) v = codec.quantize(v);
}

ForwardResult run(const Model& m, const Tensor& batch, bool tap, TapPoint point,
                  const std::vector<LPParams>* act_params) {
    if (batch.rank() != m.input_shape.size() + 1 ||
        !std::equal(m.input_shape.begin(), m.input_shape.end(), batch.shape.begin() + 1)) {
        throw InvalidInput("batch shape does not match the model input shape");
    }
    const auto q = m.quantizable();
    // Layer index at which each quantizable layer's block output is observed.
    std::vector<std::size_t> block_end(m.layers.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t j = 0; j < q.size(); ++j) {
        std::size_t end = q[j];
        if (point == TapPoint::PostActivation && end + 1 < m.layers.size() &&
            m.layers[end + 1].kind == LayerKind::Relu) {
            ++end;
        }
        block_end[end] = j;
    }
    std::vector<Codec> codecs;
    if (act_params) {
        for (const auto& p : *act_params) codecs.emplace_back(p);
    }

    ForwardResult res;
    Tensor x = batch;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        switch (l.kind) {
            case LayerKind::Dense:
                if (x.rank() != 2) throw InvalidInput("dense layer needs a flattened input");
                x = dense(l, x);
                break;
            case LayerKind::Conv2d:
                if (x.rank() != 4) throw InvalidInput("conv2d layer needs [B, C, H, W] input");
                x = conv2d(l, x);
                break;
            case LayerKind::Relu:
                relu_inplace(x);
                break;
            case LayerKind::Softmax:
                softmax_inplace(x);
                break;
            case LayerKind::Flatten:
                x.shape = {x.rows(), x.row_size()};
                break;
        }
        const std::size_t j = block_end[i];
        if (j != std::numeric_limits<std::size_t>::max()) {
            if (act_params) quantize_inplace(x, codecs[j]);
            if (tap) res.taps.push_back(x);
        }
    }
    res.output = std::move(x);
    return res;
}

}  // namespace

ForwardResult forward(const Model& m, const Tensor& batch, bool tap, TapPoint point) {
    return run(m, batch, tap, point, nullptr);
}

FakeQuantResult fake_quantize(const Tensor& t, const LPParams& p) {
    const Codec codec(p);
    FakeQuantResult r{t, 0.0};
    double sq = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const double q = codec.quantize(t.data[i]);
        const double d = t.data[i] - q;
        sq += d * d;
        r.tensor.data[i] = q;
    }
    r.rmse = t.data.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(t.data.size()));
    return r;
}

DerivedParams activation_params(const LPParams& w, double prev_sf) {
    // Only the derived format has to be legal; the clamps below report
    // whatever the weight fields push out of range.
    if (w.n < 2 || w.n > kMaxBits || w.es < 0 || w.rs < 1 || !std::isfinite(w.sf) || !std::isfinite(prev_sf)) {
        throw InvalidInput("activation_params: malformed weight format " + to_string(w));
    }
    DerivedParams d;
    LPParams& a = d.params;
    a.n = std::min(8, w.n * 2);
    a.es = std::min(5, w.es * 2);
    a.rs = w.rs;
    a.sf = prev_sf + w.sf;
    if (a.es > a.n - 3) {
        d.clamps.push_back("es " + std::to_string(a.es) + " clamped to n-3 = " + std::to_string(a.n - 3));
        a.es = a.n - 3;
    }
    if (a.rs > a.n - 1) {
        d.clamps.push_back("rs " + std::to_string(a.rs) + " clamped to n-1 = " + std::to_string(a.n - 1));
        a.rs = a.n - 1;
    }
    if (a.rs < 2) {
        d.clamps.push_back("rs " + std::to_string(a.rs) + " raised to 2");
        a.rs = 2;
    }
    return d;
}

std::vector<LPParams> activation_chain(const Delta& delta) {
    std::vector<LPParams> out;
    double prev = 0.0;
    for (const auto& w : delta) {
        out.push_back(activation_params(w, prev).params);
        prev = out.back().sf;
    }
    return out;
}

void check_delta(const Model& m, const Delta& delta) {
    if (delta.size() != m.num_quantizable()) {
        throw InvalidInput("delta has " + std::to_string(delta.size()) + " entries but the model has " +
                           std::to_string(m.num_quantizable()) + " quantizable layers");
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!is_codec_params(delta[i])) {
            throw InvalidInput("delta entry " + std::to_string(i) + " is invalid: " + to_string(delta[i]));
        }
    }
}

Model quantize_weights(const Model& m, const Delta& delta) {
    check_delta(m, delta);
    Model q = m;
    const auto idx = m.quantizable();
    for (std::size_t j = 0; j < idx.size(); ++j) {
        q.layers[idx[j]].weight = fake_quantize(m.layers[idx[j]].weight, delta[j]).tensor;
    }
    return q;
}

ForwardResult forward_quantized(const Model& m, const Delta& delta, const Tensor& batch, bool tap,
                                TapPoint point) {
    const Model q = quantize_weights(m, delta);
    const auto acts = activation_chain(delta);
    return run(q, batch, tap, point, &acts);
}

double accuracy(const Model& m, const Tensor& inputs, const std::vector<int>& labels, const Delta* delta) {
    if (labels.size() != inputs.rows()) throw InvalidInput("label count does not match inputs");
    const Tensor out = delta ? forward_quantized(m, *delta, inputs, false).output
                             : forward(m, inputs, false).output;
    std::size_t hits = 0;
    for (std::size_t b = 0; b < out.rows(); ++b) {
        const auto r = out.row(b);
        const auto arg = std::max_element(r.begin(), r.end()) - r.begin();
        if (arg == labels[b]) ++hits;
    }
    return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

double mean_weight_bits(const Model& m, const Delta& delta) {
    check_delta(m, delta);
    const auto idx = m.quantizable();
    double bits = 0.0, count = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const double c = static_cast<double>(m.layers[idx[j]].weight.size());
        bits += c * delta[j].n;
        count += c;
    }
    return bits / count;
}

}  // namespace lp
