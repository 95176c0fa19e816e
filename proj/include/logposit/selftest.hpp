#pragma once

#include <optional>
#include <string>
#include <vector>

#include "logposit/datapath.hpp"

namespace lp {

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelftestOptions {
    // Replaces the datapath's log->linear table (used to prove the suite
    // notices a broken converter).
    std::optional<ConverterTable> converter;
    std::uint64_t seed = 1;
    int requantize_samples = 20000;
};

struct SelftestReport {
    std::vector<SelftestCheck> checks;
    bool ok() const;
};

// Value of an LP pattern by walking its bits one at a time.
double lp_bitwalk_value(std::uint32_t bits, const LPParams& p);

// Every valid <n, es, rs> with n in [3, 8] and the given sf values.
std::vector<LPParams> codec_grid(const std::vector<double>& sfs);

SelftestCheck check_codec(const std::vector<LPParams>& grid);
SelftestCheck check_posit_agreement();
SelftestCheck check_converter_bounds(const ConverterTable& t);
SelftestCheck check_converter_roundtrip(const ConverterTable& t);
SelftestCheck check_mul_stage();
SelftestCheck check_zero_annihilation(const Datapath& dp);
SelftestCheck check_requantize(const Datapath& dp, int samples, std::uint64_t seed);
SelftestCheck check_pipeline_budget(const Datapath& dp, std::uint64_t seed);

SelftestReport run_selftest(const SelftestOptions& opts = {});

// A copy of the default table with one forward entry moved off by `delta`.
ConverterTable corrupted_converter(int entry = 128, int delta = 3);

}  // namespace lp
