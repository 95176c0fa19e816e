#include <doctest.h>

#include <filesystem>

#include "logposit/error.hpp"
#include "logposit/io.hpp"
#include "logposit/selftest.hpp"
#include "support.hpp"

using namespace lp;
namespace fs = std::filesystem;

TEST_CASE("delta documents round trip") {
    const Model m = load_model(fs::path(LOGPOSIT_FIXTURES_DIR) / "mlp" / "model.json");
    const Delta d{{8, 1, 5, 0.125}, {4, 0, 3, -2.5}, {3, 0, 2, 0.0}};
    const std::string text = delta_to_json(m, d);
    CHECK(text.find("\"fc2\"") != std::string::npos);
    CHECK(delta_from_json(text) == d);

    const fs::path dir = fs::temp_directory_path() / "logposit-test-delta";
    fs::remove_all(dir);
    save_delta(m, d, dir / "delta.json");
    CHECK(load_delta(dir / "delta.json") == d);
    CHECK_FALSE(fs::exists(dir / "delta.json.tmp"));
    CHECK_THROWS_AS(load_delta(dir / "absent.json"), IoError);
    fs::remove_all(dir);

    CHECK_THROWS_AS(delta_from_json("{"), InvalidInput);
    CHECK_THROWS_AS(delta_from_json(R"({"format": "other", "layers": []})"), InvalidInput);
    CHECK_THROWS_AS(delta_from_json(R"({"format": "logposit-delta/1", "layers": [{"n": 8, "es": 6, "rs": 3, "sf": 0}]})"),
                    InvalidInput);
    CHECK_THROWS_AS(delta_to_json(m, Delta(2, LPParams{})), InvalidInput);
}

TEST_CASE("csv output") {
    Csv c({"a", "b"});
    c.row().add(1).add("x,y");
    c.row().add(0.1).add("q\"");
    CHECK(c.str() == "a,b\n1,\"x,y\"\n0.10000000000000001,\"q\"\"\"\n");
    Csv short_row({"a", "b"});
    short_row.row().add(1);
    CHECK_THROWS_AS(short_row.str(), InvalidInput);
    CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("bit-walk oracle in the selftest agrees with the test oracle") {
    lptest::Gen g(81);
    for (int trial = 0; trial < 20000; ++trial) {
        const LPParams p = g.params();
        const std::uint32_t b = g.bits(p.n);
        const double a = lp_bitwalk_value(b, p);
        const double t = lptest::oracle_value(b, p);
        if (std::isnan(t)) {
            CHECK(std::isnan(a));
        } else {
            CHECK(a == t);
        }
    }
}

TEST_CASE("selftest passes and notices a broken converter") {
    const SelftestReport ok = run_selftest();
    for (const auto& c : ok.checks) {
        INFO(c.name << ": " << c.detail);
        CHECK(c.passed);
    }
    CHECK(ok.ok());

    SelftestOptions broken;
    broken.converter = corrupted_converter();
    const SelftestReport bad = run_selftest(broken);
    CHECK_FALSE(bad.ok());
    bool named = false;
    for (const auto& c : bad.checks) {
        if (!c.passed && c.name.find("converter") != std::string::npos) named = true;
    }
    CHECK(named);
}
