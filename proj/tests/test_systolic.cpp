#include <doctest.h>

#include <array>
#include <cmath>

#include "logposit/error.hpp"
#include "logposit/systolic.hpp"
#include "support.hpp"

using namespace lp;
using lptest::Gen;

namespace {

struct Problem {
    LPParams wp, ap;
    int M = 1, K = 1, N = 1;
    std::vector<std::uint32_t> acts, weights;
};

Problem random_problem(Gen& g, int n, int max_m, int max_k, int max_n) {
    Problem p;
    p.wp = g.params(n);
    p.ap = g.params(g.coin() ? 8 : 4);
    p.M = g.integer(1, max_m);
    p.K = g.integer(1, max_k);
    p.N = g.integer(1, max_n);
    p.acts.resize(static_cast<std::size_t>(p.M * p.K));
    p.weights.resize(static_cast<std::size_t>(p.K * p.N));
    for (auto& x : p.acts) x = g.operand_bits(p.ap.n);
    for (auto& x : p.weights) x = g.operand_bits(n);
    return p;
}

GemmResult run(const Problem& p, const ArrayConfig& cfg = {}, const Datapath& dp = Datapath{}) {
    return simulate_gemm(p.acts, p.ap, p.weights, p.wp, p.M, p.K, p.N, cfg, dp);
}

std::vector<PartialSum> reference(const Problem& p, const Datapath& dp = Datapath{}) {
    return reference_gemm(p.acts, p.ap, p.weights, p.wp, select_mode(p.wp.n), p.M, p.K, p.N, dp);
}

Problem ones(int M, int K, int N, int n) {
    Problem p;
    p.wp = n == 2 ? LPParams{2, 0, 1, 0.0} : LPParams{n, 0, n - 1, 0.0};
    p.ap = {8, 1, 7, 0.0};
    p.M = M;
    p.K = K;
    p.N = N;
    p.acts.assign(static_cast<std::size_t>(M * K), encode(1.0, p.ap).bits);
    p.weights.assign(static_cast<std::size_t>(K * N), encode(1.0, p.wp).bits);
    return p;
}

}  // namespace

TEST_CASE("mode selection") {
    CHECK(select_mode(2) == Mode::A);
    CHECK(select_mode(4) == Mode::B);
    CHECK(select_mode(8) == Mode::C);
    CHECK_THROWS_AS(select_mode(3), InvalidInput);
    CHECK_THROWS_AS(select_mode(16), InvalidInput);
}

TEST_CASE("weight packing layout") {
    const std::vector<std::uint32_t> zeros(4, 0);
    CHECK(pack_weights(zeros, 1, 4, Mode::A) == std::vector<std::uint8_t>{0x00});
    const std::vector<std::uint32_t> one{0x40};
    CHECK(pack_weights(one, 1, 1, Mode::C) == std::vector<std::uint8_t>{0x40});
    // Column 0 in the high nibble, column 1 in the low nibble.
    const std::vector<std::uint32_t> pair{0xA, 0x5};
    CHECK(pack_weights(pair, 1, 2, Mode::B) == std::vector<std::uint8_t>{0xA5});
    const std::vector<std::uint32_t> quad{0b11, 0b01, 0b00, 0b10};
    CHECK(pack_weights(quad, 1, 4, Mode::A) == std::vector<std::uint8_t>{0b11010010});
    // Partial last byte is padded with zero slots.
    const std::vector<std::uint32_t> three{0x1, 0x2, 0x3};
    CHECK(pack_weights(three, 1, 3, Mode::B) == std::vector<std::uint8_t>{0x12, 0x30});
}

TEST_CASE("property: pack and unpack are inverse") {
    Gen g(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const Mode m = std::array<Mode, 3>{Mode::A, Mode::B, Mode::C}[static_cast<std::size_t>(g.integer(0, 2))];
        const int K = g.integer(1, 9), N = g.integer(1, 17);
        std::vector<std::uint32_t> tile(static_cast<std::size_t>(K * N));
        for (auto& x : tile) x = g.bits(weight_width(m));
        const auto image = pack_weights(tile, K, N, m);
        const int w = weights_per_pe(m);
        CHECK(image.size() == static_cast<std::size_t>(K * ((N + w - 1) / w)));
        CHECK(unpack_weights(image, K, N, m) == tile);
    }
    for (std::uint32_t b = 0; b < 16; ++b) {
        CHECK(pack_activation(b, 4) == (b << 4));
        CHECK(unpack_activation(pack_activation(b, 4), 4) == b);
    }
    for (std::uint32_t b = 0; b < 256; ++b) CHECK(unpack_activation(pack_activation(b, 8), 8) == b);
}

TEST_CASE("single MAC timing") {
    const Problem p = ones(1, 1, 1, 8);
    const GemmResult r = run(p);
    CHECK(r.report.macs == 1);
    CHECK(r.report.cycles == 3);
    REQUIRE(r.psums.size() == 1);
    CHECK(Datapath{}.value(r.psums[0]) == 1.0);
}

TEST_CASE("8x8x8 in MODE-C matches the closed form") {
    const GemmResult r = run(ones(8, 8, 8, 8));
    const auto tiles = plan_tiles(8, 8, 8, 8, 1);
    REQUIRE(tiles.size() == 1);
    CHECK(r.report.cycles == closed_form_cycles(tiles, 8));
    CHECK(r.report.cycles == 8 + (8 + 8 + 8 - 1));
    CHECK(r.report.macs == 512);
    CHECK(r.report.utilization == doctest::Approx(512.0 / (r.report.cycles * 64.0)));
    for (const auto& s : r.psums) CHECK(Datapath{}.value(s) == 8.0);
}

TEST_CASE("MODE-A packs four times the columns of MODE-C") {
    Gen g(33);
    Problem p = ones(4, 8, 32, 2);
    for (auto& x : p.acts) x = g.operand_bits(p.ap.n);
    for (auto& x : p.weights) x = g.operand_bits(2);
    const GemmResult a = run(p);
    CHECK(a.psums == reference(p));
    CHECK(a.report.tiles.size() == 1);
    CHECK(plan_tiles(8, 32, 8, 8, 1).size() == 4);
}

TEST_CASE("property: simulator is bit-exact with the reference pipeline") {
    Gen g(34);
    const Datapath dp;
    for (int trial = 0; trial < 600; ++trial) {
        const int n = std::array<int, 3>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
        const Problem p = random_problem(g, n, 8, 8, 8);
        const GemmResult r = run(p);
        CHECK(r.psums == reference(p, dp));
        CHECK(r.log2_offset == -(sf_residual(p.wp) + sf_residual(p.ap)));
    }
}

TEST_CASE("property: engine cycles equal the closed form and MACs are conserved") {
    Gen g(35);
    for (int trial = 0; trial < 400; ++trial) {
        const int n = std::array<int, 3>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
        const Problem p = random_problem(g, n, 12, 30, 40);
        ArrayConfig cfg;
        cfg.rows = g.integer(1, 8);
        cfg.cols = g.integer(1, 8);
        cfg.decoder_latency = g.integer(0, 2);
        const GemmResult r = run(p, cfg);
        const int w = weights_per_pe(select_mode(n));
        const auto tiles = plan_tiles(p.K, p.N, cfg.rows, cfg.cols * w, w);
        CHECK(r.report.cycles == closed_form_cycles(tiles, p.M, cfg.decoder_latency));
        std::uint64_t macs = 0;
        for (const auto& t : r.report.tiles) macs += t.macs;
        CHECK(macs == static_cast<std::uint64_t>(p.M) * p.K * p.N);
        CHECK(r.report.macs == macs);
        CHECK(r.report.utilization <= 1.0);
        CHECK(r.psums == reference(p));
    }
}

TEST_CASE("double buffering hides every preload but the first") {
    const Problem p = ones(16, 32, 32, 8);
    const GemmResult r = run(p);
    REQUIRE(r.report.tiles.size() >= 2);
    std::uint64_t sequential = 0;
    for (const auto& t : r.report.tiles) {
        sequential += static_cast<std::uint64_t>(t.shape.kt) + (t.end - t.start);
        CHECK(t.stall == 0);
    }
    CHECK(r.report.cycles < sequential);
    CHECK(r.report.cycles == r.report.tiles.front().shape.kt + (r.report.tiles.back().end - r.report.tiles.front().start));
}

TEST_CASE("small buffers force splitting without changing results") {
    Gen g(36);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = std::array<int, 3>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
        const Problem p = random_problem(g, n, 24, 20, 40);
        // Room for exactly one tile column of weights and one activation row.
        ArrayConfig cfg;
        cfg.weight_buffer = static_cast<std::size_t>(p.K * cfg.cols);
        cfg.input_buffer = static_cast<std::size_t>(p.K);
        CHECK(run(p, cfg).psums == reference(p));
    }
}

TEST_CASE("mode throughput ratio is 4:2:1 when weight bound") {
    double per_pe[3];
    int i = 0;
    for (int n : {2, 4, 8}) {
        const GemmResult r = run(ones(16, 8, 64, n));
        per_pe[i++] = r.report.macs_per_active_pe_cycle();
    }
    CHECK(per_pe[0] == 4.0);
    CHECK(per_pe[1] == 2.0);
    CHECK(per_pe[2] == 1.0);
}

TEST_CASE("ppu") {
    const Datapath dp;
    const LPParams out{8, 1, 3, 0.0};
    const std::vector<PartialSum> ps{dp.from_real(1.0), dp.from_real(-3.0)};
    const auto none = ppu(ps, 1, 2, {}, 0.0, out, PpuOp::None, dp);
    CHECK(none[0] == encode(1.0, out).bits);
    CHECK(none[1] == encode(-3.0, out).bits);
    const auto relu = ppu(ps, 1, 2, {}, 0.0, out, PpuOp::Relu, dp);
    CHECK(relu[0] == encode(1.0, out).bits);
    CHECK(relu[1] == 0);
    const std::vector<double> bias{0.5, 4.0};
    const auto biased = ppu(ps, 1, 2, bias, 0.0, out, PpuOp::Relu, dp);
    CHECK(biased[0] == encode(1.5, out).bits);
    CHECK(biased[1] == encode(1.0, out).bits);
    CHECK_THROWS_AS(ppu(ps, 1, 2, {}, 0.0, LPParams{6, 1, 3, 0.0}, PpuOp::None, dp), InvalidInput);
}

TEST_CASE("property: softmax rows sum to about one") {
    Gen g(37);
    const Datapath dp;
    const LPParams out{8, 1, 7, 0.0};
    for (int trial = 0; trial < 200; ++trial) {
        const int N = g.integer(2, 12);
        std::vector<PartialSum> ps;
        for (int j = 0; j < N; ++j) ps.push_back(dp.from_real(g.normal(0.0, 3.0)));
        const auto q = ppu(ps, 1, N, {}, 0.0, out, PpuOp::Softmax, dp);
        double sum = 0.0;
        for (auto b : q) {
            const double v = decode_value({b, 8}, out);
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum >= 0.9);
        CHECK(sum <= 1.1);
    }
}

TEST_CASE("fused baselines") {
    const ArrayConfig cfg;
    const SimReport f4 = baseline_report(BaselineArch::Fused4, 256, 8, 64, 8, cfg);
    CHECK(f4.effective_cols == 4);
    const SimReport f2 = baseline_report(BaselineArch::Fused2, 256, 8, 64, 8, cfg);
    CHECK(f2.effective_cols == 2);
    const SimReport native = baseline_report(BaselineArch::Fused4, 256, 8, 64, 4, cfg);
    CHECK(native.effective_cols == 8);
    const SimReport flat = baseline_report(BaselineArch::Flat8, 256, 8, 64, 2, cfg);
    CHECK(flat.effective_cols == 8);

    const GemmResult lpa = run(ones(256, 8, 64, 8));
    const double ratio = static_cast<double>(lpa.report.cycles) / static_cast<double>(f4.cycles);
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.05));
    CHECK(baseline_from_string("fused2") == BaselineArch::Fused2);
    CHECK_THROWS_AS(baseline_from_string("fused3"), InvalidInput);
}

TEST_CASE("invalid gemm inputs") {
    const Problem p = ones(2, 2, 2, 8);
    CHECK_THROWS_AS(simulate_gemm(p.acts, p.ap, p.weights, p.wp, 2, 2, 3, ArrayConfig{}, Datapath{}), InvalidInput);
    CHECK_THROWS_AS(simulate_gemm(p.acts, p.ap, p.weights, LPParams{6, 1, 3, 0.0}, 2, 2, 2, ArrayConfig{}, Datapath{}),
                    InvalidInput);
    ArrayConfig bad;
    bad.rows = 0;
    CHECK_THROWS_AS(check(bad), InvalidInput);
}
