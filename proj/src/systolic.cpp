#include "logposit/systolic.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "logposit/error.hpp"

namespace lp {

void check(const ArrayConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 1) throw InvalidInput("array rows and cols must be >= 1");
    if (cfg.weight_buffer == 0 || cfg.input_buffer == 0 || cfg.output_buffer == 0) {
        throw InvalidInput("buffer capacities must be > 0");
    }
    if (cfg.decoder_latency < 0) throw InvalidInput("decoder latency must be >= 0");
}

Mode select_mode(int weight_bits) {
    switch (weight_bits) {
        case 2: return Mode::A;
        case 4: return Mode::B;
        case 8: return Mode::C;
        default: break;
    }
    throw InvalidInput("no PE packing mode for " + std::to_string(weight_bits) + "-bit weights (2, 4 or 8)");
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

std::vector<std::uint8_t> pack_weights(std::span<const std::uint32_t> tile, int K, int N, Mode mode) {
    if (K < 0 || N < 0 || tile.size() != static_cast<std::size_t>(K) * N) {
        throw InvalidInput("pack_weights: tile size does not match K x N");
    }
    const int w = weights_per_pe(mode);
    const int width = weight_width(mode);
    const int bytes_per_row = ceil_div(N, w);
    std::vector<std::uint8_t> image(static_cast<std::size_t>(K) * bytes_per_row, 0);
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < N; ++j) {
            const std::uint32_t v = tile[static_cast<std::size_t>(k) * N + j];
            if (v & ~pattern_mask(width)) throw InvalidInput("pack_weights: pattern wider than the mode");
            const int shift = 8 - width * (j % w + 1);
            image[static_cast<std::size_t>(k) * bytes_per_row + j / w] |= static_cast<std::uint8_t>(v << shift);
        }
    }
    return image;
}

std::vector<std::uint32_t> unpack_weights(std::span<const std::uint8_t> image, int K, int N, Mode mode) {
    const int w = weights_per_pe(mode);
    const int width = weight_width(mode);
    const int bytes_per_row = ceil_div(N, w);
    if (K < 0 || N < 0 || image.size() != static_cast<std::size_t>(K) * bytes_per_row) {
        throw InvalidInput("unpack_weights: image size does not match K x N");
    }
    std::vector<std::uint32_t> out(static_cast<std::size_t>(K) * N);
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < N; ++j) {
            const int shift = 8 - width * (j % w + 1);
            const std::uint8_t byte = image[static_cast<std::size_t>(k) * bytes_per_row + j / w];
            out[static_cast<std::size_t>(k) * N + j] = (byte >> shift) & pattern_mask(width);
        }
    }
    return out;
}

std::uint8_t pack_activation(std::uint32_t bits, int n) {
    if (n != 4 && n != 8) throw InvalidInput("activations are 4- or 8-bit");
    if (bits & ~pattern_mask(n)) throw InvalidInput("pack_activation: pattern wider than n");
    return static_cast<std::uint8_t>(bits << (8 - n));
}

std::uint32_t unpack_activation(std::uint8_t byte, int n) {
    if (n != 4 && n != 8) throw InvalidInput("activations are 4- or 8-bit");
    return static_cast<std::uint32_t>(byte) >> (8 - n);
}

double SimReport::macs_per_active_pe_cycle() const {
    return active_pe_cycles ? static_cast<double>(macs) / static_cast<double>(active_pe_cycles) : 0.0;
}

std::vector<TileShape> plan_tiles(int K, int N, int rows, int logical_cols, int weights_per_pe) {
    if (K < 1 || N < 1) throw InvalidInput("plan_tiles: K and N must be >= 1");
    if (rows < 1 || logical_cols < 1 || weights_per_pe < 1) throw InvalidInput("plan_tiles: bad array shape");
    std::vector<TileShape> out;
    for (int n0 = 0; n0 < N; n0 += logical_cols) {
        const int nt = std::min(logical_cols, N - n0);
        for (int k0 = 0; k0 < K; k0 += rows) {
            const int kt = std::min(rows, K - k0);
            out.push_back({k0, kt, n0, nt, ceil_div(nt, weights_per_pe)});
        }
    }
    return out;
}

std::uint64_t closed_form_cycles(std::span<const TileShape> tiles, int M, int decoder_latency) {
    if (tiles.empty()) return 0;
    std::uint64_t start = static_cast<std::uint64_t>(tiles[0].kt);
    std::uint64_t end = 0;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (i > 0) start = std::max(end, start + static_cast<std::uint64_t>(tiles[i].kt));
        end = start + static_cast<std::uint64_t>(decoder_latency + M + tiles[i].kt + tiles[i].pcols - 1);
    }
    return end;
}

namespace {

struct ActReg {
    bool valid = false;
    int m = 0;
    UnifiedOperand op;
};

struct PsumReg {
    bool valid = false;
    int m = 0;
    PartialSum slot[4];
};

// Weight set held by every PE: rows x cols x 4 slots.
struct WeightSet {
    std::vector<UnifiedOperand> ops;
    TileShape shape;
    int loaded_rows = 0;
};

// One run of the array over a GEMM whose operands fit the buffers. psums
// carries the reduction across K tiles and must hold M x N entries.
struct Engine {
    const ArrayConfig& cfg;
    const Datapath& dp;
    Mode mode;
    int w;
    int M, K, N;
    const std::vector<UnifiedOperand>& acts;   // M x K, decoded at the input boundary
    const std::vector<std::uint8_t>& wimage;   // K x ceil(N/w) packed weight buffer
    const LPParams& wp;
    std::vector<PartialSum>& psums;
    SimReport& report;

    std::size_t wslot(int r, int c, int s) const {
        return (static_cast<std::size_t>(r) * cfg.cols + c) * 4 + s;
    }

    // Moves one weight row from the buffer image through the decoders into
    // the shadow set.
    void preload_row(WeightSet& set) const {
        const TileShape& t = set.shape;
        const int r = set.loaded_rows++;
        const int k = t.k0 + r;
        const int bytes_per_row = ceil_div(N, w);
        for (int c = 0; c < t.pcols; ++c) {
            for (int s = 0; s < w; ++s) {
                const int j = t.n0 + c * w + s;
                if (j >= t.n0 + t.nt) continue;
                // Tiles start on a byte boundary, so logical column j is at byte j / w.
                const std::uint8_t byte = wimage[static_cast<std::size_t>(k) * bytes_per_row + j / w];
                const int width = weight_width(mode);
                const std::uint32_t bits = (byte >> (8 - width * (j % w + 1))) & pattern_mask(width);
                const UnifiedOperand op = unified_decode({bits, wp.n}, wp, Path::Weight, mode);
                if (!fits_declared_widths(op, Path::Weight, mode)) ++report.width_overflows;
                set.ops[wslot(r, c, s)] = op;
            }
        }
    }

    void run(const std::vector<TileShape>& tiles) {
        const std::size_t pe_count = static_cast<std::size_t>(cfg.rows) * cfg.cols;
        std::vector<ActReg> act(pe_count);
        std::vector<PsumReg> psum(pe_count);
        WeightSet active, shadow;
        active.ops.resize(pe_count * 4);
        shadow.ops.resize(pe_count * 4);

        AccumulatorStats stats;
        std::size_t next_preload = 0;
        std::optional<std::size_t> preloading;
        bool shadow_ready = false;
        std::optional<std::size_t> running;
        std::uint64_t run_start = 0;
        std::uint64_t last_end = 0;
        std::size_t collected = 0;
        std::uint64_t t = 0;

        auto begin_preload = [&] {
            if (next_preload >= tiles.size()) return;
            shadow.shape = tiles[next_preload];
            shadow.loaded_rows = 0;
            preloading = next_preload++;
        };
        begin_preload();

        std::size_t done = 0;
        while (done < tiles.size()) {
            // Swap at the tile boundary once the next weight set is complete.
            if (!running && shadow_ready) {
                std::swap(active, shadow);
                shadow_ready = false;
                running = *preloading;
                preloading.reset();
                run_start = t;
                collected = 0;
                TileReport tr;
                tr.shape = active.shape;
                tr.start = t;
                tr.stall = report.tiles.empty() ? 0 : t - last_end;
                report.tiles.push_back(tr);
                std::fill(act.begin(), act.end(), ActReg{});
                std::fill(psum.begin(), psum.end(), PsumReg{});
                begin_preload();
            }
            if (preloading && !shadow_ready) {
                preload_row(shadow);
                if (shadow.loaded_rows == shadow.shape.kt) shadow_ready = true;
            }
            if (running) {
                const TileShape& ts = active.shape;
                TileReport& tr = report.tiles.back();
                // Bottom-row results latched last cycle go to the output buffer.
                for (int c = 0; c < ts.pcols; ++c) {
                    const PsumReg& out = psum[static_cast<std::size_t>(ts.kt - 1) * cfg.cols + c];
                    if (!out.valid) continue;
                    for (int s = 0; s < w; ++s) {
                        const int j = ts.n0 + c * w + s;
                        if (j >= ts.n0 + ts.nt) continue;
                        psums[static_cast<std::size_t>(out.m) * N + j] = out.slot[s];
                    }
                    ++collected;
                }
                const std::int64_t tau = static_cast<std::int64_t>(t - run_start) - cfg.decoder_latency;
                for (int r = ts.kt - 1; r >= 0; --r) {
                    for (int c = ts.pcols - 1; c >= 0; --c) {
                        const std::size_t idx = static_cast<std::size_t>(r) * cfg.cols + c;
                        ActReg in;
                        if (c > 0) {
                            in = act[idx - 1];
                        } else {
                            const std::int64_t m = tau - r;
                            if (m >= 0 && m < M) {
                                in.valid = true;
                                in.m = static_cast<int>(m);
                                in.op = acts[static_cast<std::size_t>(m) * K + ts.k0 + r];
                            }
                        }
                        act[idx] = in;
                        PsumReg outp;
                        if (in.valid) {
                            outp.valid = true;
                            outp.m = in.m;
                            for (int s = 0; s < w; ++s) {
                                const int j = ts.n0 + c * w + s;
                                if (j >= ts.n0 + ts.nt) continue;
                                const PartialSum north =
                                    r > 0 ? psum[idx - cfg.cols].slot[s]
                                          : psums[static_cast<std::size_t>(in.m) * N + j];
                                outp.slot[s] =
                                    dp.align_accumulate(north, mul(active.ops[wslot(r, c, s)], in.op), &stats);
                                ++tr.macs;
                                ++report.macs;
                            }
                            ++report.active_pe_cycles;
                        }
                        psum[idx] = outp;
                    }
                }
                if (collected == static_cast<std::size_t>(M) * ts.pcols) {
                    tr.end = t + 1;
                    last_end = t + 1;
                    running.reset();
                    ++done;
                }
            }
            ++t;
        }
        report.cycles = last_end;
        report.absorbed += stats.absorbed;
    }
};

void merge(SimReport& into, const SimReport& part) {
    const std::uint64_t offset = into.cycles;
    for (TileReport t : part.tiles) {
        t.start += offset;
        t.end += offset;
        into.tiles.push_back(t);
    }
    into.cycles += part.cycles;
    into.macs += part.macs;
    into.active_pe_cycles += part.active_pe_cycles;
    into.absorbed += part.absorbed;
    into.width_overflows += part.width_overflows;
}

struct GemmProblem {
    const std::vector<UnifiedOperand>& acts;  // full M x K
    const std::vector<std::uint32_t>& weights;
    const LPParams& wp;
    Mode mode;
    int M, K, N;
    const ArrayConfig& cfg;
    const Datapath& dp;
};

// Runs rows [m0, m0 + mc) against columns [n0, n0 + nc), splitting whichever
// operand does not fit its buffer.
void run_block(const GemmProblem& g, int m0, int mc, int n0, int nc, std::vector<PartialSum>& psums,
               SimReport& report) {
    const int w = weights_per_pe(g.mode);
    const std::size_t wbytes = static_cast<std::size_t>(g.K) * ceil_div(nc, w);
    const std::size_t abytes = static_cast<std::size_t>(mc) * g.K;
    if (wbytes > g.cfg.weight_buffer) {
        const int logical_cols = g.cfg.cols * w;
        const int tiles = ceil_div(nc, logical_cols);
        if (tiles < 2) {
            throw InvalidInput("one weight tile column (" + std::to_string(wbytes) +
                               " bytes) exceeds the weight buffer");
        }
        const int left = (tiles / 2) * logical_cols;
        run_block(g, m0, mc, n0, left, psums, report);
        run_block(g, m0, mc, n0 + left, nc - left, psums, report);
        return;
    }
    if (abytes > g.cfg.input_buffer) {
        if (mc < 2) throw InvalidInput("one activation row exceeds the input buffer");
        run_block(g, m0, mc / 2, n0, nc, psums, report);
        run_block(g, m0 + mc / 2, mc - mc / 2, n0, nc, psums, report);
        return;
    }

    std::vector<UnifiedOperand> acts(static_cast<std::size_t>(mc) * g.K);
    for (int m = 0; m < mc; ++m) {
        std::copy_n(g.acts.begin() + static_cast<std::ptrdiff_t>(m0 + m) * g.K, g.K,
                    acts.begin() + static_cast<std::ptrdiff_t>(m) * g.K);
    }
    std::vector<std::uint32_t> wsub(static_cast<std::size_t>(g.K) * nc);
    for (int k = 0; k < g.K; ++k) {
        for (int j = 0; j < nc; ++j) {
            wsub[static_cast<std::size_t>(k) * nc + j] = g.weights[static_cast<std::size_t>(k) * g.N + n0 + j];
        }
    }
    const auto image = pack_weights(wsub, g.K, nc, g.mode);
    std::vector<PartialSum> local(static_cast<std::size_t>(mc) * nc);
    SimReport part;
    Engine e{g.cfg, g.dp, g.mode, w, mc, g.K, nc, acts, image, g.wp, local, part};
    e.run(plan_tiles(g.K, nc, g.cfg.rows, g.cfg.cols * w, w));
    for (int m = 0; m < mc; ++m) {
        for (int j = 0; j < nc; ++j) {
            psums[static_cast<std::size_t>(m0 + m) * g.N + n0 + j] = local[static_cast<std::size_t>(m) * nc + j];
        }
    }
    merge(report, part);
}

}  // namespace

GemmResult simulate_gemm(std::span<const std::uint32_t> acts, const LPParams& ap,
                         std::span<const std::uint32_t> weights, const LPParams& wp, int M, int K, int N,
                         const ArrayConfig& cfg, const Datapath& dp) {
    check(cfg);
    if (M < 1 || K < 1 || N < 1) throw InvalidInput("simulate_gemm: M, K and N must be >= 1");
    if (acts.size() != static_cast<std::size_t>(M) * K || weights.size() != static_cast<std::size_t>(K) * N) {
        throw InvalidInput("simulate_gemm: operand sizes do not match M, K, N");
    }
    const Mode mode = select_mode(wp.n);
    require_codec_params(wp);
    require_codec_params(ap);
    const int w = weights_per_pe(mode);

    GemmResult r;
    r.report.mode = mode;
    r.report.weights_per_pe = w;
    r.report.rows = cfg.rows;
    r.report.cols = cfg.cols;
    r.report.effective_cols = cfg.cols * w;
    r.report.narrow_activations = ap.n < wp.n;

    // Input boundary: activations pass through the input buffer as bytes and
    // are decoded once on their way into column 0.
    std::vector<UnifiedOperand> decoded(acts.size());
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const std::uint32_t bits = unpack_activation(pack_activation(acts[i], ap.n), ap.n);
        decoded[i] = unified_decode({bits, ap.n}, ap, Path::Activation, mode);
        if (!fits_declared_widths(decoded[i], Path::Activation, mode)) ++r.report.width_overflows;
    }
    const std::vector<std::uint32_t> wcopy(weights.begin(), weights.end());
    r.psums.assign(static_cast<std::size_t>(M) * N, PartialSum{});
    const GemmProblem g{decoded, wcopy, wp, mode, M, K, N, cfg, dp};
    run_block(g, 0, M, 0, N, r.psums, r.report);

    r.log2_offset = -(sf_residual(wp) + sf_residual(ap));
    const double capacity = static_cast<double>(r.report.cycles) * cfg.rows * cfg.cols * w;
    r.report.utilization = capacity > 0 ? static_cast<double>(r.report.macs) / capacity : 0.0;
    return r;
}

std::vector<std::uint32_t> ppu(std::span<const PartialSum> psums, int M, int N, std::span<const double> bias,
                               double log2_offset, const LPParams& out, PpuOp op, const Datapath& dp) {
    if (out.n != 4 && out.n != 8) throw InvalidInput("PPU output format must be 4- or 8-bit");
    if (psums.size() != static_cast<std::size_t>(M) * N) throw InvalidInput("ppu: psum count mismatch");
    if (!bias.empty() && bias.size() != static_cast<std::size_t>(N)) throw InvalidInput("ppu: bias length mismatch");
    const double unscale = std::exp2(-log2_offset);
    std::vector<PartialSum> biased(psums.begin(), psums.end());
    if (!bias.empty()) {
        for (int m = 0; m < M; ++m) {
            for (int j = 0; j < N; ++j) {
                auto& s = biased[static_cast<std::size_t>(m) * N + j];
                s = dp.add(s, dp.from_real(bias[static_cast<std::size_t>(j)] * unscale));
            }
        }
    }
    std::vector<std::uint32_t> result(biased.size());
    if (op == PpuOp::Softmax) {
        const Codec codec(out);
        const double scale = std::exp2(log2_offset);
        for (int m = 0; m < M; ++m) {
            std::vector<double> row(static_cast<std::size_t>(N));
            for (int j = 0; j < N; ++j) row[j] = dp.value(biased[static_cast<std::size_t>(m) * N + j]) * scale;
            const double mx = *std::max_element(row.begin(), row.end());
            double total = 0.0;
            for (double& v : row) {
                v = std::exp(v - mx);
                total += v;
            }
            for (int j = 0; j < N; ++j) result[static_cast<std::size_t>(m) * N + j] = codec.encode(row[j] / total).bits;
        }
        return result;
    }
    for (std::size_t i = 0; i < biased.size(); ++i) {
        if (op == PpuOp::Relu && biased[i].negative()) {
            result[i] = zero_pattern(out.n);
        } else {
            result[i] = dp.requantize(biased[i], out, log2_offset).bits;
        }
    }
    return result;
}

const char* to_string(BaselineArch a) {
    switch (a) {
        case BaselineArch::Fused4: return "fused4";
        case BaselineArch::Fused2: return "fused2";
        case BaselineArch::Flat8: return "flat8";
    }
    return "?";
}

BaselineArch baseline_from_string(const std::string& s) {
    if (s == "fused4") return BaselineArch::Fused4;
    if (s == "fused2") return BaselineArch::Fused2;
    if (s == "flat8") return BaselineArch::Flat8;
    throw InvalidInput("unknown baseline '" + s + "' (fused4, fused2, flat8)");
}

SimReport baseline_report(BaselineArch arch, int M, int K, int N, int weight_bits, const ArrayConfig& cfg) {
    check(cfg);
    if (M < 1 || K < 1 || N < 1) throw InvalidInput("baseline_report: M, K and N must be >= 1");
    if (weight_bits < 1 || weight_bits > 8) throw InvalidInput("baseline_report: weight width must be in [1, 8]");
    int gang = 1;
    if (arch == BaselineArch::Fused4) gang = std::max(1, ceil_div(weight_bits, 4));
    if (arch == BaselineArch::Fused2) gang = std::max(1, ceil_div(weight_bits, 2));
    SimReport r;
    r.mode = Mode::C;
    r.weights_per_pe = 1;
    r.rows = cfg.rows;
    r.cols = cfg.cols;
    r.effective_cols = std::max(1, cfg.cols / gang);
    const auto tiles = plan_tiles(K, N, cfg.rows, r.effective_cols, 1);
    r.cycles = closed_form_cycles(tiles, M, cfg.decoder_latency);
    r.macs = static_cast<std::uint64_t>(M) * K * N;
    // A fused PE group counts as one PE doing one MAC per cycle.
    r.active_pe_cycles = r.macs;
    const double capacity = static_cast<double>(r.cycles) * cfg.rows * r.effective_cols;
    r.utilization = capacity > 0 ? static_cast<double>(r.macs) / capacity : 0.0;
    std::uint64_t start = tiles.empty() ? 0 : static_cast<std::uint64_t>(tiles[0].kt);
    std::uint64_t end = 0;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        TileReport tr;
        tr.shape = tiles[i];
        if (i > 0) start = std::max(end, start + static_cast<std::uint64_t>(tiles[i].kt));
        tr.stall = i > 0 ? start - end : 0;
        end = start + static_cast<std::uint64_t>(cfg.decoder_latency + M + tiles[i].kt + tiles[i].pcols - 1);
        tr.start = start;
        tr.end = end;
        tr.macs = static_cast<std::uint64_t>(M) * tiles[i].kt * tiles[i].nt;
        r.tiles.push_back(tr);
    }
    return r;
}

}  // namespace lp
