#pragma once
//
// Cycle-level model of a weight-stationary systolic array whose PEs hold
// one 8-bit, two 4-bit or four 2-bit LP weights (MODE-C/B/A) that share the
// activation flowing east. Partial sums flow south; every PE slot runs the
// datapath from datapath.hpp, so outputs are bit-identical to
// reference_gemm().
//
// Timing. A GEMM is cut into tiles of K_t <= rows reduction rows and
// N_t <= cols * w logical columns packed onto P_t = ceil(N_t / w) physical
// columns. Streaming M skewed activation rows through a tile takes
// T = M + K_t + P_t - 1 cycles (plus the decoder latency, default 0).
// Weights are double buffered: tile i+1 preloads one row per cycle while
// tile i computes, so only the first tile's K_t-cycle preload is exposed
// unless a tile finishes before the next preload does.
//

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "logposit/datapath.hpp"

namespace lp {

struct ArrayConfig {
    int rows = 8;
    int cols = 8;
    std::size_t weight_buffer = 128 * 1024;
    std::size_t input_buffer = 256 * 1024;
    std::size_t output_buffer = 128 * 1024;
    int decoder_latency = 0;

    std::size_t total_buffer() const { return weight_buffer + input_buffer + output_buffer; }
};

void check(const ArrayConfig& cfg);

// 2 -> A, 4 -> B, 8 -> C; anything else throws InvalidInput.
Mode select_mode(int weight_bits);

// Weight-buffer image of a row-major K x N weight tile: row k holds
// ceil(N / w) bytes; logical column j sits in byte j / w, slot j % w, and
// slot 0 occupies the most significant bits.
std::vector<std::uint8_t> pack_weights(std::span<const std::uint32_t> tile, int K, int N, Mode mode);
std::vector<std::uint32_t> unpack_weights(std::span<const std::uint8_t> image, int K, int N, Mode mode);

// Activations are stored as one byte each; 4-bit values are zero-extended
// at the LSB end.
std::uint8_t pack_activation(std::uint32_t bits, int n);
std::uint32_t unpack_activation(std::uint8_t byte, int n);

struct TileShape {
    int k0 = 0, kt = 0;  // reduction rows
    int n0 = 0, nt = 0;  // logical columns
    int pcols = 0;       // physical columns occupied
};

struct TileReport {
    TileShape shape;
    std::uint64_t start = 0;  // first streaming cycle
    std::uint64_t end = 0;    // one past the last output write
    std::uint64_t stall = 0;  // cycles waiting on the next preload
    std::uint64_t macs = 0;
};

struct SimReport {
    Mode mode = Mode::C;
    int weights_per_pe = 1;
    int rows = 8;
    int cols = 8;
    int effective_cols = 8;  // logical columns per tile
    std::uint64_t cycles = 0;
    std::uint64_t macs = 0;
    std::uint64_t active_pe_cycles = 0;  // PE-cycles that consumed an activation
    double utilization = 0.0;            // macs / (cycles * rows * cols * w)
    std::uint64_t absorbed = 0;          // accumulator addends shifted out entirely
    std::uint64_t width_overflows = 0;   // decoded operands exceeding declared widths
    bool narrow_activations = false;     // 4-bit activations paired with wider weights
    std::vector<TileReport> tiles;

    double macs_per_active_pe_cycle() const;
};

// Tile list for a K x N weight matrix, N-blocks outer, K-blocks inner.
std::vector<TileShape> plan_tiles(int K, int N, int rows, int logical_cols, int weights_per_pe);

// Double-buffer timing recurrence:
//   start_0 = K_0, start_i = max(end_{i-1}, start_{i-1} + K_i), end_i = start_i + T_i.
std::uint64_t closed_form_cycles(std::span<const TileShape> tiles, int M, int decoder_latency = 0);

struct GemmResult {
    std::vector<PartialSum> psums;  // M x N, row-major
    double log2_offset = 0.0;       // per-tensor sf residual to apply at re-encode
    SimReport report;
};

// M x K activation patterns (format ap) times K x N weight patterns (format wp,
// n in {2, 4, 8}). Runs the cycle-level engine; weight or input tiles that do
// not fit their buffers are split and simulated one after another.
GemmResult simulate_gemm(std::span<const std::uint32_t> acts, const LPParams& ap,
                         std::span<const std::uint32_t> weights, const LPParams& wp, int M, int K, int N,
                         const ArrayConfig& cfg, const Datapath& dp);

enum class PpuOp { None, Relu, Softmax };

// Adds an optional full-precision bias per column, applies op in the linear
// domain and re-encodes into `out`. Softmax is evaluated in double.
std::vector<std::uint32_t> ppu(std::span<const PartialSum> psums, int M, int N,
                               std::span<const double> bias, double log2_offset, const LPParams& out,
                               PpuOp op, const Datapath& dp);

enum class BaselineArch { Fused4, Fused2, Flat8 };

const char* to_string(BaselineArch a);
BaselineArch baseline_from_string(const std::string& s);

// Timing of the same GEMM on a fused-PE array (4-bit or 2-bit PEs ganged
// to reach wider weights) or a flat 8-bit array. One weight per PE; fusing
// divides the usable columns by weight_bits / pe_bits.
SimReport baseline_report(BaselineArch arch, int M, int K, int N, int weight_bits, const ArrayConfig& cfg);

}  // namespace lp
