// lpq: format inspection, quantization search, array simulation and
// quantization-error comparison on the command line.
//
// Exit codes: 0 success, 1 invariant or self-test failure, 2 invalid input.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "logposit/error.hpp"
#include "logposit/io.hpp"
#include "logposit/model_sim.hpp"
#include "logposit/posit_reference.hpp"
#include "logposit/reference_quantizers.hpp"
#include "logposit/search.hpp"
#include "logposit/selftest.hpp"

#ifndef LOGPOSIT_VERSION
#define LOGPOSIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

void write_output(Manifest& man, const fs::path& path, const std::string& text) {
    lp::write_text_atomic(path, text);
    man.outputs.push_back(path.filename().string());
}

void write_manifest(const Manifest& man, const fs::path& dir) {
    json j{{"format", "logposit-run/1"},
           {"tool", "lpq"},
           {"version", LOGPOSIT_VERSION},
           {"command", man.command},
           {"argv", man.argv},
           {"config", man.config},
           {"inputs", man.inputs},
           {"outputs", man.outputs}};
    j["seed"] = man.seed ? json(*man.seed) : json(nullptr);
    lp::write_text_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
}

int default_threads() {
    if (const char* env = std::getenv("LPQ_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
        throw lp::InvalidInput("LPQ_THREADS must be a positive integer");
    }
    return 1;
}

json params_json(const lp::LPParams& p) { return {{"n", p.n}, {"es", p.es}, {"rs", p.rs}, {"sf", p.sf}}; }

// ---- inspect ---------------------------------------------------------------

struct InspectArgs {
    lp::LPParams p;
    std::optional<int> rs;
    std::string compare;
    std::string out = ".";
};

int cmd_inspect(InspectArgs a, Manifest& man) {
    a.p.rs = a.rs.value_or(a.p.n - 1);
    const auto problems = lp::validate(a.p);
    if (!problems.empty()) {
        std::cerr << "invalid LP parameters " << lp::to_string(a.p) << ":\n";
        for (const auto& v : problems) std::cerr << "  " << v << "\n";
        return kExitInvalid;
    }
    if (!a.compare.empty() && a.compare != "posit") throw lp::InvalidInput("--compare accepts only 'posit'");
    const bool posit = a.compare == "posit";
    std::vector<std::string> header{"bits", "signed", "special", "value", "log2_magnitude"};
    if (posit) header.push_back("posit_value");
    lp::Csv values(header);
    for (const auto& e : lp::enumerate(a.p)) {
        std::string bits;
        for (int i = a.p.n - 1; i >= 0; --i) bits.push_back((e.bits >> i) & 1u ? '1' : '0');
        const char* special = e.special == lp::Special::Zero ? "zero" : e.special == lp::Special::NaR ? "nar" : "";
        values.row().add(bits).add(static_cast<int>(e.as_signed)).add(special).add(e.value);
        values.add(e.special == lp::Special::Normal ? lp::decode({e.bits, a.p.n}, a.p).log2_magnitude(a.p)
                                                     : std::nan(""));
        if (posit) values.add(lp::standard_posit_decode(e.bits, a.p.n, a.p.es));
    }
    lp::Csv profile({"log10_magnitude", "decimal_digits"});
    for (const auto& pt : lp::accuracy_profile(a.p)) profile.row().add(pt.log10_magnitude).add(pt.decimal_digits);
    const fs::path dir(a.out);
    write_output(man, dir / "values.csv", values.str());
    write_output(man, dir / "profile.csv", profile.str());
    man.config = {{"params", params_json(a.p)}, {"compare", a.compare}};
    write_manifest(man, dir);
    std::cout << "wrote " << (dir / "values.csv").string() << " (" << (1u << a.p.n) << " patterns) and "
              << (dir / "profile.csv").string() << "\n";
    return kExitOk;
}

// ---- quantize --------------------------------------------------------------

struct QuantizeArgs {
    std::string model, calib, test, out = ".";
    std::size_t calib_size = 128;
    lp::SearchConfig cfg;
    std::string fitness = "lpq", schedule = "per-block", center = "mean", count = "activations", tap = "post";
};

int cmd_quantize(QuantizeArgs a, Manifest& man) {
    a.cfg.fitness.kind = lp::fitness_kind_from_string(a.fitness);
    if (a.schedule == "per-block") {
        a.cfg.schedule = lp::UpdateSchedule::PerBlock;
    } else if (a.schedule == "literal") {
        a.cfg.schedule = lp::UpdateSchedule::Literal;
    } else {
        throw lp::InvalidInput("--schedule must be per-block or literal");
    }
    if (a.center == "mean") {
        a.cfg.center = lp::SfCenter::WeightMean;
    } else if (a.center == "log2") {
        a.cfg.center = lp::SfCenter::Log2Scale;
    } else {
        throw lp::InvalidInput("--sf-center must be mean or log2");
    }
    a.cfg.fitness.count = a.count == "weights" ? lp::CompressionCount::Weights : lp::CompressionCount::Activations;
    if (a.count != "weights" && a.count != "activations") throw lp::InvalidInput("--count must be activations or weights");
    if (a.tap != "post" && a.tap != "pre") throw lp::InvalidInput("--tap must be post or pre");
    a.cfg.fitness.tap_point = a.tap == "pre" ? lp::TapPoint::PreActivation : lp::TapPoint::PostActivation;
    if (a.calib_size == 0) throw lp::InvalidInput("--calib-size must be >= 1");

    const lp::Model model = lp::load_model(a.model);
    const lp::Dataset calib = lp::load_dataset(a.calib);
    man.inputs = {a.model, a.calib};
    const lp::Tensor batch = lp::take_rows(calib.inputs, std::min(a.calib_size, calib.inputs.rows()));

    const lp::Search search(model, batch, a.cfg);
    const lp::SearchResult r = search.run();
    const lp::Delta& best = r.best.delta;

    for (std::size_t i = 1; i < r.history.size(); ++i) {
        if (r.history[i].best_fitness > r.history[i - 1].best_fitness) {
            std::cerr << "invariant violated: best fitness increased at update " << i << "\n";
            return kExitFailure;
        }
    }

    const fs::path dir(a.out);
    write_output(man, dir / "delta.json", lp::delta_to_json(model, best));
    lp::Csv hist({"update_index", "best_fitness", "L_CO", "L_CR"});
    for (const auto& h : r.history) hist.row().add(h.update_index).add(h.best_fitness).add(h.l_co).add(h.l_cr);
    write_output(man, dir / "history.csv", hist.str());

    const double bits = lp::mean_weight_bits(model, best);
    json summary{{"fitness", r.best.fitness->fitness},
                 {"L_CO", r.best.fitness->l_co},
                 {"L_CR", r.best.fitness->l_cr},
                 {"updates", r.history.size()},
                 {"mean_weight_bits", bits},
                 {"compression_vs_fp32", 32.0 / bits}};
    if (!a.test.empty()) {
        const lp::Dataset test = lp::load_dataset(a.test);
        man.inputs.push_back(a.test);
        const double fp = lp::accuracy(model, test.inputs, test.labels);
        const double q = lp::accuracy(model, test.inputs, test.labels, &best);
        summary["test_accuracy_fp"] = fp;
        summary["test_accuracy_quantized"] = q;
        summary["accuracy_drop_pp"] = 100.0 * (fp - q);
    }
    write_output(man, dir / "summary.json", summary.dump(2) + "\n");

    const auto& c = search.config();
    man.seed = c.seed;
    man.config = {{"population", c.population}, {"passes", c.passes},     {"cycles", c.cycles},
                  {"block", c.block},           {"diversity_parents", c.diversity_parents},
                  {"sf_radius", c.sf_radius},   {"hardware_mode", c.hardware_mode},
                  {"allow_2bit", c.allow_2bit}, {"lambda", c.fitness.lambda},
                  {"tau", c.fitness.tau},       {"fitness", a.fitness},
                  {"schedule", a.schedule},     {"sf_center", a.center},
                  {"count", a.count},           {"tap", a.tap},
                  {"center_pooled", c.fitness.center_pooled},
                  {"calib_size", batch.rows()}, {"threads", c.threads}};
    write_manifest(man, dir);
    std::cout << "best fitness " << r.best.fitness->fitness << " after " << r.history.size()
              << " updates; mean weight width " << bits << " bits (" << 32.0 / bits << "x vs fp32)\n";
    if (summary.contains("accuracy_drop_pp")) {
        std::cout << "test accuracy " << summary["test_accuracy_fp"].get<double>() << " -> "
                  << summary["test_accuracy_quantized"].get<double>() << "\n";
    }
    return kExitOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string model, delta, data, out = ".";
    std::size_t batch = 1;
    int rows = 8, cols = 8;
    std::size_t buffer = 512 * 1024;
    int decoder_latency = 0;
    std::string baseline;
    std::vector<int> force_n;
    int acc_width = 24;
};

int cmd_simulate(const SimulateArgs& a, Manifest& man) {
    const lp::Model model = lp::load_model(a.model);
    model.check();
    const lp::Delta delta = lp::load_delta(a.delta);
    lp::check_delta(model, delta);
    man.inputs = {a.model, a.delta};
    if (a.batch == 0) throw lp::InvalidInput("--batch must be >= 1");
    if (a.buffer < 4) throw lp::InvalidInput("--buffer must be at least 4 bytes");

    lp::Tensor batch;
    std::vector<int> labels;
    if (!a.data.empty()) {
        const lp::Dataset d = lp::load_dataset(a.data);
        man.inputs.push_back(a.data);
        const std::size_t rows = std::min(a.batch, d.inputs.rows());
        batch = lp::take_rows(d.inputs, rows);
        if (!d.labels.empty()) labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(rows));
    } else {
        lp::Shape s{a.batch};
        s.insert(s.end(), model.input_shape.begin(), model.input_shape.end());
        batch = lp::Tensor(s);
    }

    lp::ArrayConfig cfg;
    cfg.rows = a.rows;
    cfg.cols = a.cols;
    cfg.weight_buffer = a.buffer / 4;
    cfg.input_buffer = a.buffer / 2;
    cfg.output_buffer = a.buffer - cfg.weight_buffer - cfg.input_buffer;
    cfg.decoder_latency = a.decoder_latency;
    lp::check(cfg);
    lp::Datapath::Config dcfg;
    dcfg.acc_width = a.acc_width;
    const lp::Datapath dp(dcfg);
    std::optional<lp::BaselineArch> baseline;
    if (!a.baseline.empty()) baseline = lp::baseline_from_string(a.baseline);

    std::vector<std::optional<int>> variants;
    if (a.force_n.empty()) variants.emplace_back();
    for (int n : a.force_n) {
        if (n != 2 && n != 4 && n != 8) throw lp::InvalidInput("--force-n accepts 2, 4 or 8");
        variants.emplace_back(n);
    }

    lp::Csv csv({"layer", "mode", "cycles", "macs", "utilization", "effective_cols", "arch", "variant",
                 "cycle_ratio", "accuracy"});
    json runs = json::array();
    for (const auto& v : variants) {
        lp::ModelSimOptions opts;
        opts.force_n = v;
        const std::string variant = v ? "force-n=" + std::to_string(*v) : "delta";
        const lp::ModelSimResult r = lp::simulate_model(model, delta, batch, cfg, dp, opts);
        double acc = std::nan("");
        if (!labels.empty()) {
            std::size_t hits = 0;
            for (std::size_t b = 0; b < r.output.rows(); ++b) {
                const auto row = r.output.row(b);
                if (std::max_element(row.begin(), row.end()) - row.begin() == labels[b]) ++hits;
            }
            acc = static_cast<double>(hits) / static_cast<double>(labels.size());
        }
        std::uint64_t base_total = 0;
        for (const auto& l : r.layers) {
            const auto& rep = l.report;
            csv.row().add(l.name).add(std::string(1, lp::mode_letter(rep.mode))).add(rep.cycles).add(rep.macs);
            csv.add(rep.utilization).add(rep.effective_cols).add("lpa").add(variant).add(1.0).add(acc);
            if (baseline) {
                const auto b = lp::baseline_report(*baseline, l.M, l.K, l.N, l.weight_params.n, cfg);
                base_total += b.cycles;
                csv.row().add(l.name).add(std::string(1, lp::mode_letter(rep.mode))).add(b.cycles).add(b.macs);
                csv.add(b.utilization).add(b.effective_cols).add(lp::to_string(*baseline)).add(variant);
                csv.add(static_cast<double>(rep.cycles) / static_cast<double>(b.cycles)).add(std::nan(""));
            }
        }
        json layers = json::array();
        for (const auto& l : r.layers) {
            layers.push_back({{"layer", l.name},
                              {"M", l.M},
                              {"K", l.K},
                              {"N", l.N},
                              {"mode", std::string(1, lp::mode_letter(l.report.mode))},
                              {"weight_params", params_json(l.weight_params)},
                              {"output_params", params_json(l.output_params)},
                              {"cycles", l.report.cycles},
                              {"macs", l.report.macs},
                              {"utilization", l.report.utilization},
                              {"tiles", l.report.tiles.size()},
                              {"absorbed", l.report.absorbed},
                              {"width_overflows", l.report.width_overflows},
                              {"narrow_activations", l.report.narrow_activations}});
        }
        json run{{"variant", variant}, {"cycles", r.cycles}, {"macs", r.macs}, {"layers", layers}};
        if (!labels.empty()) run["accuracy"] = acc;
        if (baseline) {
            run["baseline"] = lp::to_string(*baseline);
            run["baseline_cycles"] = base_total;
        }
        runs.push_back(run);
        std::cout << variant << ": " << r.cycles << " cycles, " << r.macs << " MACs";
        if (baseline) std::cout << "; " << lp::to_string(*baseline) << " " << base_total << " cycles";
        if (!labels.empty()) std::cout << "; accuracy " << acc;
        std::cout << "\n";
    }
    const fs::path dir(a.out);
    write_output(man, dir / "sim.csv", csv.str());
    write_output(man, dir / "sim_summary.json", json{{"batch", batch.rows()}, {"runs", runs}}.dump(2) + "\n");
    man.config = {{"rows", a.rows},         {"cols", a.cols},         {"buffer", a.buffer},
                  {"batch", batch.rows()},  {"baseline", a.baseline}, {"force_n", a.force_n},
                  {"decoder_latency", a.decoder_latency}, {"acc_width", a.acc_width}};
    write_manifest(man, dir);
    return kExitOk;
}

// ---- rmse ------------------------------------------------------------------

struct RmseArgs {
    std::string dist = "lognormal", tensor, out = ".";
    std::size_t count = 10000;
    double mu = -3.0, sigma = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> formats;
};

int cmd_rmse(RmseArgs a, Manifest& man) {
    if (a.formats.empty()) {
        a.formats = {"lp:8,1,7,0", "lp:8,1,7,auto", "lp:8,2,4,auto", "lp:4,1,3,auto", "posit:8,1", "posit:8,2",
                     "int:8", "int:4", "minifloat:4,3", "minifloat:5,2"};
    }
    std::vector<lp::FormatSpec> specs;
    for (const auto& f : a.formats) specs.push_back(lp::parse_format(f));
    std::vector<double> x;
    std::string source;
    if (!a.tensor.empty()) {
        const lp::Dataset d = lp::load_dataset(a.tensor);
        x = d.inputs.data;
        source = a.tensor;
        man.inputs = {a.tensor};
    } else {
        x = lp::sample_distribution(a.dist, a.count, a.mu, a.sigma, a.seed);
        source = a.dist;
        man.seed = a.seed;
    }
    lp::Csv csv({"source", "format", "rmse", "sf"});
    for (const auto& s : specs) {
        const auto r = lp::quantization_rmse(x, s);
        csv.row().add(source).add(r.format).add(r.rmse).add(r.sf);
        std::cout << r.format << "  rmse " << r.rmse << "\n";
    }
    const fs::path dir(a.out);
    write_output(man, dir / "rmse.csv", csv.str());
    man.config = {{"distribution", a.dist}, {"count", a.count}, {"mu", a.mu}, {"sigma", a.sigma},
                  {"formats", a.formats}};
    write_manifest(man, dir);
    return kExitOk;
}

// ---- selftest / convert-table ----------------------------------------------

int cmd_selftest(bool corrupt) {
    lp::SelftestOptions opts;
    if (corrupt) opts.converter = lp::corrupted_converter();
    const auto report = lp::run_selftest(opts);
    for (const auto& c : report.checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) std::cout << ": " << c.detail;
        std::cout << "\n";
    }
    return report.ok() ? kExitOk : kExitFailure;
}

int cmd_convert_table(int bits, const std::string& out) {
    const lp::ConverterTable t(bits);
    lp::Csv csv({"index", "log_to_linear", "linear_to_log"});
    for (int i = 0; i < (1 << bits); ++i) csv.row().add(i).add(t.log_to_linear(i)).add(t.linear_to_log(i));
    if (out.empty() || out == "-") {
        std::cout << csv.str();
    } else {
        lp::write_text_atomic(out, csv.str());
    }
    return kExitOk;
}

int dispatch(std::vector<std::string> args);

// ---- replay ----------------------------------------------------------------

int cmd_replay(const std::string& manifest_path, const std::string& out) {
    const fs::path mpath(manifest_path);
    json j;
    try {
        j = json::parse(lp::read_text(mpath));
    } catch (const json::parse_error& e) {
        throw lp::InvalidInput(std::string("malformed run manifest: ") + e.what());
    }
    if (j.value("format", std::string{}) != "logposit-run/1") throw lp::InvalidInput("not a run manifest");
    auto argv = j.at("argv").get<std::vector<std::string>>();
    const auto outputs = j.at("outputs").get<std::vector<std::string>>();
    // Point the rerun at a fresh directory.
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
        if (argv[i] == "--out") {
            argv[i + 1] = out;
            replaced = true;
        }
    }
    if (!replaced) {
        argv.push_back("--out");
        argv.push_back(out);
    }
    const int rc = dispatch(argv);
    if (rc != kExitOk) return rc;
    int mismatches = 0;
    for (const auto& name : outputs) {
        const fs::path a = mpath.parent_path() / name;
        const fs::path b = fs::path(out) / name;
        if (!fs::exists(a) || !fs::exists(b) || lp::read_text(a) != lp::read_text(b)) {
            std::cout << "DIFFERS " << name << "\n";
            ++mismatches;
        } else {
            std::cout << "identical " << name << "\n";
        }
    }
    return mismatches ? kExitFailure : kExitOk;
}

int dispatch(std::vector<std::string> args) {
    CLI::App app{"Logarithmic posit toolkit: formats, quantization search and array simulation", "lpq"};
    app.set_version_flag("--version", LOGPOSIT_VERSION);
    app.require_subcommand(1);

    InspectArgs ia;
    auto* inspect = app.add_subcommand("inspect", "Value table and accuracy profile of one LP format");
    inspect->add_option("--n", ia.p.n, "Word width")->required();
    inspect->add_option("--es", ia.p.es, "Exponent bits")->default_val(1);
    inspect->add_option("--rs", ia.rs, "Maximum regime run (default n-1)");
    inspect->add_option("--sf", ia.p.sf, "Scale factor")->default_val(0.0);
    inspect->add_option("--compare", ia.compare, "Add a standard-posit column ('posit')");
    inspect->add_option("--out", ia.out, "Output directory");

    QuantizeArgs qa;
    qa.cfg.threads = 0;
    auto* quant = app.add_subcommand("quantize", "Search per-layer LP formats for a model");
    quant->add_option("--model", qa.model, "Model manifest")->required();
    quant->add_option("--calib", qa.calib, "Calibration dataset manifest")->required();
    quant->add_option("--test", qa.test, "Held-out dataset manifest for an accuracy report");
    quant->add_option("--calib-size", qa.calib_size, "Calibration samples used")->default_val(128);
    quant->add_option("--k", qa.cfg.population, "Population size")->default_val(20);
    quant->add_option("--passes", qa.cfg.passes, "Passes over the model")->default_val(10);
    quant->add_option("--cycles", qa.cfg.cycles, "Updates per block per pass")->default_val(4);
    quant->add_option("--block", qa.cfg.block, "Layers per block")->default_val(4);
    quant->add_option("--diversity", qa.cfg.diversity_parents, "Random parents per update")->default_val(5);
    quant->add_option("--sf-radius", qa.cfg.sf_radius, "sf perturbation radius")->default_val(1e-3);
    quant->add_option("--lambda", qa.cfg.fitness.lambda, "Compression exponent")->default_val(0.4);
    quant->add_option("--tau", qa.cfg.fitness.tau, "Contrastive temperature")->default_val(1.0);
    quant->add_option("--seed", qa.cfg.seed, "RNG seed")->default_val(0);
    quant->add_flag("--hardware-mode", qa.cfg.hardware_mode, "Restrict n to {4, 8}");
    quant->add_flag("--allow-2bit", qa.cfg.allow_2bit, "With --hardware-mode, also allow 2-bit weights");
    quant->add_option("--fitness", qa.fitness, "lpq | mse | kl | global-contrastive")->default_val("lpq");
    quant->add_option("--schedule", qa.schedule, "per-block | literal")->default_val("per-block");
    quant->add_option("--sf-center", qa.center, "mean | log2")->default_val("mean");
    quant->add_option("--count", qa.count, "Compression count: activations | weights")->default_val("activations");
    quant->add_option("--tap", qa.tap, "Representation tap: post | pre")->default_val("post");
    quant->add_flag("--center-pooled", qa.cfg.fitness.center_pooled,
                    "Center pooled vectors on the full-precision mean");
    quant->add_option("--threads", qa.cfg.threads, "Evaluation threads (default: LPQ_THREADS or 1)");
    quant->add_option("--out", qa.out, "Output directory");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Cycle-level simulation of a quantized model");
    sim->add_option("--model", sa.model, "Model manifest")->required();
    sim->add_option("--delta", sa.delta, "Delta document")->required();
    sim->add_option("--data", sa.data, "Dataset manifest supplying the input batch");
    sim->add_option("--batch", sa.batch, "Batch size")->default_val(1);
    sim->add_option("--rows", sa.rows, "Array rows")->default_val(8);
    sim->add_option("--cols", sa.cols, "Array columns")->default_val(8);
    sim->add_option("--buffer", sa.buffer, "Total on-chip buffer in bytes (1:2:1 weight:input:output)")
        ->default_val(512 * 1024);
    sim->add_option("--decoder-latency", sa.decoder_latency, "Extra cycles per tile")->default_val(0);
    sim->add_option("--acc-width", sa.acc_width, "Accumulator width")->default_val(24);
    sim->add_option("--baseline", sa.baseline, "fused4 | fused2 | flat8");
    sim->add_option("--force-n", sa.force_n, "Override every weight width (repeatable: 2, 4, 8)");
    sim->add_option("--out", sa.out, "Output directory");

    RmseArgs ra;
    auto* rmse = app.add_subcommand("rmse", "Quantization RMSE of several formats on one sample");
    rmse->add_option("--dist", ra.dist, "lognormal | normal | laplace")->default_val("lognormal");
    rmse->add_option("--tensor", ra.tensor, "Dataset manifest whose inputs are the sample");
    rmse->add_option("--count", ra.count, "Synthetic sample size")->default_val(10000);
    rmse->add_option("--mu", ra.mu, "Location")->default_val(-3.0);
    rmse->add_option("--sigma", ra.sigma, "Scale")->default_val(1.0);
    rmse->add_option("--seed", ra.seed, "RNG seed")->default_val(0);
    rmse->add_option("--format", ra.formats, "Format string (repeatable)");
    rmse->add_option("--out", ra.out, "Output directory");

    bool corrupt = false;
    auto* self = app.add_subcommand("selftest", "Exhaustive codec and datapath invariant checks");
    self->add_flag("--corrupt-converter", corrupt, "Run against a deliberately broken converter table");

    int table_bits = 8;
    std::string table_out;
    auto* table = app.add_subcommand("convert-table", "Dump the log/linear converter tables as CSV");
    table->add_option("--bits", table_bits, "Fraction bits")->default_val(8);
    table->add_option("--out", table_out, "Output file (default stdout)");

    std::string replay_manifest, replay_out;
    auto* replay = app.add_subcommand("replay", "Rerun a recorded command and compare its outputs");
    replay->add_option("manifest", replay_manifest, "run_manifest.json")->required();
    replay->add_option("--out", replay_out, "Directory for the rerun")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInvalid;
    }

    Manifest man;
    man.argv = args;
    if (inspect->parsed()) {
        man.command = "inspect";
        return cmd_inspect(ia, man);
    }
    if (quant->parsed()) {
        man.command = "quantize";
        if (qa.cfg.threads == 0) qa.cfg.threads = default_threads();
        return cmd_quantize(qa, man);
    }
    if (sim->parsed()) {
        man.command = "simulate";
        return cmd_simulate(sa, man);
    }
    if (rmse->parsed()) {
        man.command = "rmse";
        return cmd_rmse(ra, man);
    }
    if (self->parsed()) return cmd_selftest(corrupt);
    if (table->parsed()) return cmd_convert_table(table_bits, table_out);
    if (replay->parsed()) return cmd_replay(replay_manifest, replay_out);
    return kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const lp::InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const lp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitFailure;
    }
}
