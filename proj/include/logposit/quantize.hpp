#pragma once

#include <string>
#include <vector>

#include "logposit/format.hpp"
#include "logposit/model.hpp"

namespace lp {

// One LPParams per quantizable layer.
using Delta = std::vector<LPParams>;

// Where a weighted layer's output is observed and quantized: after the
// following ReLU (if any) or straight out of the layer.
enum class TapPoint { PostActivation, PreActivation };

struct ForwardResult {
    Tensor output;
    std::vector<Tensor> taps;  // one per quantizable layer when tapping
};

// Full-precision forward pass over a batch [B, ...input_shape].
ForwardResult forward(const Model& m, const Tensor& batch, bool tap,
                      TapPoint point = TapPoint::PostActivation);

struct FakeQuantResult {
    Tensor tensor;
    double rmse = 0.0;
};

// Every element replaced by decode(encode(x)).
FakeQuantResult fake_quantize(const Tensor& t, const LPParams& p);

struct DerivedParams {
    LPParams params;
    std::vector<std::string> clamps;  // one note per bound that had to be enforced
};

// Output-activation format of a layer from its weight format:
// n = min(8, 2 n_w), es = min(5, 2 es_w), rs = rs_w, sf = prev_sf + sf_w,
// with es and rs then clamped into the legal range for n.
DerivedParams activation_params(const LPParams& w, double prev_sf);

// Activation formats of every layer, chaining sf from layer 0 (prev_sf = 0).
std::vector<LPParams> activation_chain(const Delta& delta);

// Forward pass with weights fake-quantized per delta and the output
// activations of every quantizable layer fake-quantized per the chain.
// Biases stay in full precision.
ForwardResult forward_quantized(const Model& m, const Delta& delta, const Tensor& batch, bool tap,
                                TapPoint point = TapPoint::PostActivation);

// Model copy with weights replaced by their fake-quantized values.
Model quantize_weights(const Model& m, const Delta& delta);

// Top-1 accuracy; full precision when delta is null.
double accuracy(const Model& m, const Tensor& inputs, const std::vector<int>& labels,
                const Delta* delta = nullptr);

// Parameter-count weighted mean weight width and the resulting compression
// against 32-bit storage.
double mean_weight_bits(const Model& m, const Delta& delta);

void check_delta(const Model& m, const Delta& delta);

}  // namespace lp
