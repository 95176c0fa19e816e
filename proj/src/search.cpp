#include "logposit/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "logposit/error.hpp"

namespace lp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double perturbation(Rng& rng, double radius) {
    if (radius <= 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-radius, radius)(rng);
}

std::vector<double> compute_centers(const Model& m, SfCenter center) {
    std::vector<double> out;
    for (std::size_t i : m.quantizable()) {
        const auto& w = m.layers[i].weight.data;
        double s = 0.0;
        std::size_t count = 0;
        for (double v : w) {
            if (center == SfCenter::WeightMean) {
                s += v;
                ++count;
            } else if (v != 0.0) {
                s += std::log2(std::fabs(v));
                ++count;
            }
        }
        const double mean = count ? s / static_cast<double>(count) : 0.0;
        out.push_back(center == SfCenter::WeightMean ? mean : -mean);
    }
    return out;
}

}  // namespace

Rng substream(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
    std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

std::vector<std::string> validate(const SearchConfig& cfg, std::size_t num_layers) {
    std::vector<std::string> out;
    if (cfg.population < 2) out.push_back("population size K must be >= 2");
    if (cfg.passes < 1) out.push_back("passes P must be >= 1");
    if (cfg.cycles < 1) out.push_back("cycles C must be >= 1");
    if (cfg.block < 1) out.push_back("block size B must be >= 1");
    if (num_layers > 0 && static_cast<std::size_t>(cfg.block) > num_layers) {
        out.push_back("block size B = " + std::to_string(cfg.block) + " exceeds the layer count " +
                      std::to_string(num_layers));
    }
    if (cfg.diversity_parents < 0) out.push_back("diversity parents must be >= 0");
    if (!(cfg.sf_radius >= 0.0) || !std::isfinite(cfg.sf_radius)) out.push_back("sf radius must be >= 0");
    if (!(cfg.fitness.tau > 0.0)) out.push_back("tau must be > 0");
    if (!(cfg.fitness.lambda >= 0.0)) out.push_back("lambda must be >= 0");
    if (cfg.threads < 1) out.push_back("threads must be >= 1");
    if (cfg.allow_2bit && !cfg.hardware_mode) out.push_back("2-bit weights require hardware mode");
    return out;
}

Search::Search(const Model& model, Tensor calibration, SearchConfig cfg)
    : cfg_(cfg), evaluator_(model, std::move(calibration), cfg.fitness) {
    centers_ = compute_centers(model, cfg_.center);
    if (centers_.empty()) throw InvalidInput("model has no quantizable layers");
    // B larger than N is clamped to one whole-model block.
    if (static_cast<std::size_t>(cfg_.block) > centers_.size()) {
        cfg_.block = static_cast<int>(centers_.size());
    }
    const auto problems = validate(cfg_, centers_.size());
    if (!problems.empty()) {
        std::string msg = "invalid search config";
        for (const auto& p : problems) msg += "; " + p;
        throw InvalidInput(msg);
    }
}

std::vector<BlockRange> Search::blocks() const {
    std::vector<BlockRange> out;
    const std::size_t N = num_layers();
    const auto B = static_cast<std::size_t>(cfg_.block);
    for (std::size_t b = 0; b < N; b += B) out.push_back({b, std::min(N, b + B)});
    return out;
}

std::vector<int> Search::allowed_n() const {
    if (!cfg_.hardware_mode) return {3, 4, 5, 6, 7, 8};
    if (cfg_.allow_2bit) return {2, 4, 8};
    return {4, 8};
}

LPParams Search::clamp(LPParams p) const {
    const auto allowed = allowed_n();
    if (cfg_.hardware_mode) {
        int best = allowed.front();
        for (int a : allowed) {
            if (std::abs(a - p.n) <= std::abs(best - p.n)) best = a;  // ties go up
        }
        p.n = best;
    } else {
        p.n = std::clamp(p.n, allowed.front(), allowed.back());
    }
    if (p.n == 2) {
        p.es = 0;
        p.rs = 1;
        return p;
    }
    p.es = std::clamp(p.es, 0, p.n - 3);
    p.rs = std::clamp(p.rs, 2, p.n - 1);
    return p;
}

Candidate Search::random_candidate(Rng& rng) const {
    const auto allowed = allowed_n();
    Candidate c;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        LPParams p;
        p.n = allowed[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(allowed.size()) - 1))];
        if (p.n == 2) {
            p.es = 0;
            p.rs = 1;
        } else {
            p.es = uniform_int(rng, 0, p.n - 3);
            p.rs = uniform_int(rng, 2, p.n - 1);
        }
        p.sf = centers_[l] + perturbation(rng, cfg_.sf_radius);
        c.delta.push_back(p);
    }
    return c;
}

Candidate Search::crossover_mutate(const Candidate& p1, const Candidate& p2, BlockRange block,
                                   Rng& rng) const {
    if (block.begin >= block.end || block.end > num_layers()) throw InvalidInput("bad block range");
    Candidate child;
    child.delta = p1.delta;
    for (std::size_t l = block.begin; l < block.end; ++l) {
        const LPParams& a = p1.delta[l];
        const LPParams& b = p2.delta[l];
        LPParams c;
        c.n = uniform_int(rng, std::min(a.n, b.n) - 1, std::max(a.n, b.n) + 1);
        c.es = uniform_int(rng, std::min(a.es, b.es) - 1, std::max(a.es, b.es) + 1);
        c.rs = uniform_int(rng, 0, static_cast<int>(std::ceil((a.rs + b.rs) / 2.0)) + 1);
        c.sf = (a.sf + b.sf) / 2.0 + perturbation(rng, cfg_.sf_radius);
        child.delta[l] = clamp(c);
    }
    return child;
}

void Search::evaluate(std::vector<Candidate>& cands) const {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!cands[i].fitness) todo.push_back(i);
    }
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.threads), todo.size());
    if (workers <= 1) {
        for (std::size_t i : todo) cands[i].fitness = evaluator_.evaluate(cands[i].delta);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < todo.size(); t = next++) {
                    try {
                        cands[todo[t]].fitness = evaluator_.evaluate(cands[todo[t]].delta);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

PopulationState Search::init_population() const {
    PopulationState state;
    for (int k = 0; k < cfg_.population; ++k) {
        Rng rng = substream(cfg_.seed, state.next_stream++);
        state.members.push_back(random_candidate(rng));
    }
    evaluate(state.members);
    std::stable_sort(state.members.begin(), state.members.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score() < b.score(); });
    return state;
}

std::optional<Candidate> Search::diversity_select(const Candidate& child, BlockRange block,
                                                  PopulationState& state) const {
    if (cfg_.diversity_parents == 0) return std::nullopt;
    std::vector<Candidate> kids;
    for (int j = 0; j < cfg_.diversity_parents; ++j) {
        Rng rng = substream(cfg_.seed, state.next_stream++);
        const Candidate parent = random_candidate(rng);
        kids.push_back(crossover_mutate(child, parent, block, rng));
    }
    evaluate(kids);
    const auto best = std::min_element(kids.begin(), kids.end(), [](const Candidate& a, const Candidate& b) {
        return a.score() < b.score();
    });
    return *best;
}

void Search::update_population(PopulationState& state, std::vector<Candidate> newcomers) const {
    for (auto& c : newcomers) {
        if (!c.fitness) throw InvalidInput("update_population: newcomer has no fitness");
        state.members.push_back(std::move(c));
    }
    std::stable_sort(state.members.begin(), state.members.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score() < b.score(); });
    if (state.members.size() > static_cast<std::size_t>(cfg_.population)) {
        state.members.resize(static_cast<std::size_t>(cfg_.population));
    }
    const Candidate& best = state.members.front();
    state.history.push_back({static_cast<int>(state.history.size()), best.fitness->fitness,
                             best.fitness->l_co, best.fitness->l_cr});
}

void Search::step(PopulationState& state, BlockRange block) const {
    const Candidate& p1 = state.members.front();
    const Candidate& p2 = state.members.size() > 1 ? state.members[1] : state.members.front();
    Rng rng = substream(cfg_.seed, state.next_stream++);
    std::vector<Candidate> newcomers{crossover_mutate(p1, p2, block, rng)};
    evaluate(newcomers);
    if (auto diverse = diversity_select(newcomers.front(), block, state)) {
        newcomers.push_back(std::move(*diverse));
    }
    update_population(state, std::move(newcomers));
}

SearchResult Search::run() const {
    PopulationState state = init_population();
    const auto bl = blocks();
    if (cfg_.schedule == UpdateSchedule::PerBlock) {
        for (int pass = 0; pass < cfg_.passes; ++pass) {
            for (const BlockRange& b : bl) {
                for (int c = 0; c < cfg_.cycles; ++c) step(state, b);
            }
        }
    } else {
        for (int pass = 0; pass < cfg_.passes; ++pass) {
            for (int c = 0; c < cfg_.cycles; ++c) {
                step(state, bl[static_cast<std::size_t>(pass * cfg_.cycles + c) % bl.size()]);
            }
        }
    }
    SearchResult r;
    r.best = state.members.front();
    r.history = state.history;
    r.final_state = std::move(state);
    return r;
}

}  // namespace lp
