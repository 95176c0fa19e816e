#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "logposit/error.hpp"
#include "logposit/format.hpp"
#include "logposit/io.hpp"
#include "logposit/model.hpp"
#include "logposit/quantize.hpp"
#include "logposit/reference_quantizers.hpp"
#include "logposit/search.hpp"
#include "logposit/selftest.hpp"
#include "logposit/systolic.hpp"

namespace py = pybind11;
using namespace lp;

namespace {

LPParams params(int n, int es, int rs, double sf) { return LPParams{n, es, rs, sf}; }

py::dict report_dict(const SimReport& r) {
    py::dict d;
    d["mode"] = std::string(1, "ABC"[static_cast<int>(r.mode)]);
    d["weights_per_pe"] = r.weights_per_pe;
    d["effective_cols"] = r.effective_cols;
    d["cycles"] = r.cycles;
    d["macs"] = r.macs;
    d["utilization"] = r.utilization;
    d["macs_per_active_pe_cycle"] = r.macs_per_active_pe_cycle();
    d["tiles"] = r.tiles.size();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Logarithmic posit codec, quantization search and systolic array simulator";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<LPParams>(m, "LPParams")
        .def(py::init(&params), py::arg("n") = 8, py::arg("es") = 1, py::arg("rs") = 7, py::arg("sf") = 0.0)
        .def_readwrite("n", &LPParams::n)
        .def_readwrite("es", &LPParams::es)
        .def_readwrite("rs", &LPParams::rs)
        .def_readwrite("sf", &LPParams::sf)
        .def("__eq__", [](const LPParams& a, const LPParams& b) { return a == b; })
        .def("__repr__", [](const LPParams& p) { return "LPParams" + to_string(p); });

    m.def("validate", py::overload_cast<const LPParams&>(&validate), py::arg("params"),
          "List of problems with a parameter set (empty when valid).");

    m.def("decode", [](std::uint32_t bits, const LPParams& p) {
        require_codec_params(p);
        if (bits > pattern_mask(p.n)) throw InvalidInput("pattern wider than n bits");
        return decode_value({bits, p.n}, p);
    }, py::arg("bits"), py::arg("params"));
    m.def("encode", [](double x, const LPParams& p) { return encode(x, p).bits; }, py::arg("x"), py::arg("params"));
    m.def("encode_many", [](const std::vector<double>& xs, const LPParams& p) {
        const Codec c(p);
        std::vector<std::uint32_t> out;
        out.reserve(xs.size());
        for (double x : xs) out.push_back(c.encode(x).bits);
        return out;
    }, py::arg("xs"), py::arg("params"));
    m.def("enumerate", [](const LPParams& p) {
        py::list out;
        for (const auto& e : enumerate(p)) {
            const char* special = e.special == Special::Zero ? "zero" : e.special == Special::NaR ? "nar" : "";
            out.append(py::make_tuple(e.bits, e.as_signed, e.value, special));
        }
        return out;
    }, py::arg("params"), "(bits, signed, value, special) for all 2^n patterns in signed order.");

    m.def("fake_quantize", [](const std::vector<double>& xs, const LPParams& p) {
        const FakeQuantResult r = fake_quantize(Tensor({xs.size()}, xs), p);
        return py::make_tuple(r.tensor.data, r.rmse);
    }, py::arg("xs"), py::arg("params"), "Returns (quantized values, rmse).");
    m.def("quantization_rmse", [](const std::vector<double>& xs, const std::string& format) {
        const RmseResult r = quantization_rmse(xs, parse_format(format));
        return py::make_tuple(r.rmse, r.sf);
    }, py::arg("xs"), py::arg("format"), "Returns (rmse, sf) for a format string such as 'lp:8,1,7,auto'.");

    m.def("simulate_gemm", [](const std::vector<std::uint32_t>& acts, const LPParams& ap,
                              const std::vector<std::uint32_t>& weights, const LPParams& wp, int M, int K, int N,
                              int rows, int cols) {
        ArrayConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        const Datapath dp;
        const GemmResult r = simulate_gemm(acts, ap, weights, wp, M, K, N, cfg, dp);
        std::vector<double> values;
        values.reserve(r.psums.size());
        for (const auto& s : r.psums) values.push_back(dp.value(s) * std::exp2(r.log2_offset));
        return py::make_tuple(values, report_dict(r.report));
    }, py::arg("acts"), py::arg("act_params"), py::arg("weights"), py::arg("weight_params"), py::arg("M"),
       py::arg("K"), py::arg("N"), py::arg("rows") = 8, py::arg("cols") = 8,
       "Cycle-level M x K by K x N product of LP patterns. Returns (row-major values, report dict).");
    m.def("baseline_cycles", [](const std::string& arch, int M, int K, int N, int weight_bits) {
        return baseline_report(baseline_from_string(arch), M, K, N, weight_bits, ArrayConfig{}).cycles;
    }, py::arg("arch"), py::arg("M"), py::arg("K"), py::arg("N"), py::arg("weight_bits"));

    m.def("quantize", [](const std::filesystem::path& model, const std::filesystem::path& calib, int calib_rows,
                         std::uint64_t seed, int threads, double lambda) {
        const Model mdl = load_model(model);
        const Dataset data = load_dataset(calib);
        SearchConfig cfg;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.fitness.lambda = lambda;
        const SearchResult r = Search(mdl, take_rows(data.inputs, static_cast<std::size_t>(calib_rows)), cfg).run();
        std::vector<double> history;
        for (const auto& h : r.history) history.push_back(h.best_fitness);
        return py::make_tuple(r.best.delta, history, mean_weight_bits(mdl, r.best.delta));
    }, py::arg("model"), py::arg("calib"), py::arg("calib_rows") = 128, py::arg("seed") = 0, py::arg("threads") = 1,
       py::arg("lambda_") = 0.4, "Run the search. Returns (per-layer LPParams, best-fitness history, mean weight bits).");

    m.def("selftest", [] {
        const SelftestReport r = run_selftest();
        py::list checks;
        for (const auto& c : r.checks) checks.append(py::make_tuple(c.name, c.passed, c.detail));
        return py::make_tuple(r.ok(), checks);
    }, "Returns (ok, [(name, passed, detail), ...]).");
}
