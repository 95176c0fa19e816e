#pragma once

#include <optional>
#include <string>
#include <vector>

#include "logposit/quantize.hpp"
#include "logposit/systolic.hpp"

namespace lp {

struct ModelSimOptions {
    LPParams input_params{8, 1, 7, 0.0};  // format of the first layer's input
    std::optional<int> force_n;           // override every layer's weight width
};

struct LayerSim {
    std::string name;
    int M = 0, K = 0, N = 0;
    LPParams weight_params;
    LPParams output_params;
    SimReport report;
};

struct ModelSimResult {
    std::vector<LayerSim> layers;
    std::uint64_t cycles = 0;
    std::uint64_t macs = 0;
    Tensor output;  // decoded values of the last layer's output patterns
};

// Applies force_n to a delta, re-clamping es and rs.
Delta force_width(const Delta& delta, int n);

// Runs a batch through the array layer by layer. Weighted layers become one
// GEMM each (convolutions via im2col), a directly following ReLU or softmax
// is fused into the PPU, and every layer output is re-encoded in its
// activation format before feeding the next layer.
ModelSimResult simulate_model(const Model& m, const Delta& delta, const Tensor& batch, const ArrayConfig& cfg,
                              const Datapath& dp, const ModelSimOptions& opts = {});

}  // namespace lp
