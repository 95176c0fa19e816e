#pragma once
//
// Block-wise genetic search over per-layer LP parameters.
//
// Each update: rank the population, breed the top two parents over one
// block of layers (all other layers copy the best parent), breed that child
// again with freshly randomized parents for diversity, then insert the child
// and the best diverse child and truncate back to K by fitness.
//

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "logposit/fitness.hpp"

namespace lp {

// Where sf is sampled around: the literal mean of the layer weights, or the
// scale-domain center -mean(log2|w|) that puts the tapered region on the
// bulk of the weights.
enum class SfCenter { WeightMean, Log2Scale };

// PerBlock: every block is iterated for `cycles` updates in each pass.
// Literal: exactly passes * cycles updates, visiting blocks round-robin.
enum class UpdateSchedule { PerBlock, Literal };

struct SearchConfig {
    int population = 20;  // K
    int passes = 10;      // P
    int cycles = 4;       // C
    int block = 4;        // B
    int diversity_parents = 5;
    double sf_radius = 1e-3;
    bool hardware_mode = false;  // n restricted to {4, 8}
    bool allow_2bit = false;     // with hardware_mode, also n = 2 (ternary <2,0,1,sf>)
    SfCenter center = SfCenter::WeightMean;
    UpdateSchedule schedule = UpdateSchedule::PerBlock;
    std::uint64_t seed = 0;
    int threads = 1;
    FitnessConfig fitness;
};

std::vector<std::string> validate(const SearchConfig& cfg, std::size_t num_layers);

struct Candidate {
    Delta delta;
    std::optional<FitnessBreakdown> fitness;

    double score() const { return fitness ? fitness->fitness : std::numeric_limits<double>::infinity(); }
};

struct HistoryEntry {
    int update_index = 0;
    double best_fitness = 0.0;
    double l_co = 0.0;
    double l_cr = 0.0;
};

struct PopulationState {
    std::vector<Candidate> members;  // sorted best first after every update
    std::vector<HistoryEntry> history;
    std::uint64_t next_stream = 0;   // RNG substream counter
};

struct BlockRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
};

struct SearchResult {
    Candidate best;
    std::vector<HistoryEntry> history;
    PopulationState final_state;
};

using Rng = std::mt19937_64;

// Independent generator for substream `stream` of `seed`.
Rng substream(std::uint64_t seed, std::uint64_t stream);

class Search {
public:
    // `model` must outlive the search.
    Search(const Model& model, Tensor calibration, SearchConfig cfg);

    const SearchConfig& config() const { return cfg_; }
    const FitnessEvaluator& evaluator() const { return evaluator_; }
    std::size_t num_layers() const { return centers_.size(); }
    const std::vector<double>& sf_centers() const { return centers_; }
    std::vector<BlockRange> blocks() const;

    // Legal values of n for this search.
    std::vector<int> allowed_n() const;
    // Clamps every field of p into the search space.
    LPParams clamp(LPParams p) const;

    Candidate random_candidate(Rng& rng) const;
    Candidate crossover_mutate(const Candidate& p1, const Candidate& p2, BlockRange block, Rng& rng) const;
    // Evaluates every candidate lacking a fitness; may run on several threads.
    void evaluate(std::vector<Candidate>& cands) const;

    PopulationState init_population() const;
    // Breeds `child` with freshly randomized parents over `block` and returns
    // the best of those children, or nothing when diversity_parents is 0.
    std::optional<Candidate> diversity_select(const Candidate& child, BlockRange block,
                                              PopulationState& state) const;
    void update_population(PopulationState& state, std::vector<Candidate> newcomers) const;
    // One Step 2 -> Step 3 -> Step 4 round on `block`.
    void step(PopulationState& state, BlockRange block) const;

    SearchResult run() const;

private:
    SearchConfig cfg_;
    FitnessEvaluator evaluator_;
    std::vector<double> centers_;
};

}  // namespace lp
