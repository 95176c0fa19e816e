#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "logposit/error.hpp"
#include "logposit/posit_reference.hpp"
#include "logposit/reference_quantizers.hpp"
#include "support.hpp"

using namespace lp;
using lptest::Gen;

TEST_CASE("format strings") {
    const FormatSpec a = parse_format("lp:8,1,3,0.5");
    CHECK(a.kind == FormatKind::Lp);
    CHECK(a.lp == LPParams{8, 1, 3, 0.5});
    CHECK_FALSE(a.auto_sf);
    CHECK(parse_format("lp:6,1,4,auto").auto_sf);
    const FormatSpec p = parse_format("posit:8,1");
    CHECK(p.kind == FormatKind::Posit);
    CHECK(p.n == 8);
    CHECK(p.es == 1);
    CHECK(parse_format("int:4").n == 4);
    const FormatSpec m = parse_format("minifloat:4,3");
    CHECK(m.exp_bits == 4);
    CHECK(m.man_bits == 3);
    for (const char* bad : {"", "lp:8,1", "lp:8,6,3,0", "posit:8", "int:0", "minifloat:0,3", "float:8", "lp:8,1,3,x"}) {
        CHECK_THROWS_AS(parse_format(bad), InvalidInput);
    }
}

TEST_CASE("minifloat grid matches the field formula") {
    for (int E = 2; E <= 5; ++E) {
        for (int M = 0; M <= 3; ++M) {
            const int bias = (1 << (E - 1)) - 1;
            std::set<double> want;
            for (int s = 0; s < 2; ++s) {
                for (int e = 0; e < (1 << E); ++e) {
                    for (int f = 0; f < (1 << M); ++f) {
                        const double mag = e == 0 ? std::ldexp(f, 1 - bias - M) : std::ldexp((1 << M) + f, e - bias - M);
                        want.insert(s ? -mag : mag);
                    }
                }
            }
            const auto got = minifloat_values(E, M);
            CHECK(std::vector<double>(want.begin(), want.end()) == got);
        }
    }
    CHECK(minifloat_values(4, 3).back() == 480.0);
}

TEST_CASE("posit grid matches the posit decoder") {
    for (int n = 3; n <= 8; ++n) {
        for (int es = 0; es <= 2; ++es) {
            std::set<double> want;
            for (std::uint32_t b = 0; b < (1u << n); ++b) {
                if (b != (1u << (n - 1))) want.insert(standard_posit_decode(b, n, es));
            }
            CHECK(std::vector<double>(want.begin(), want.end()) == posit_values(n, es));
        }
    }
}

TEST_CASE("nearest grid element") {
    const std::vector<double> grid{-2, -1, 0, 1, 2};
    CHECK(nearest(grid, 0.4) == 0.0);
    CHECK(nearest(grid, 0.6) == 1.0);
    CHECK(nearest(grid, 10.0) == 2.0);
    CHECK(nearest(grid, -10.0) == -2.0);
    // ties go to the even index
    CHECK(nearest(grid, 0.5) == 0.0);
    CHECK(nearest(grid, 1.5) == 2.0);
    CHECK(nearest(grid, -0.5) == 0.0);
}

TEST_CASE("representable samples have zero error") {
    const std::vector<double> lp_vals{1.0, -0.5, std::exp2(3.375), 0.0};
    CHECK(quantization_rmse(lp_vals, parse_format("lp:8,1,3,0")).rmse == 0.0);
    const std::vector<double> posit_vals{1.0, 11.0, -0.25, 0.0};
    CHECK(quantization_rmse(posit_vals, parse_format("posit:8,1")).rmse == 0.0);
    const std::vector<double> mf{0.5, -448.0, 0.001953125};
    CHECK(quantization_rmse(mf, parse_format("minifloat:4,3")).rmse == 0.0);
    const std::vector<double> ints{-1.0, 0.0, 1.0, 2.0};
    CHECK(quantization_rmse(ints, parse_format("int:2")).rmse == 0.0);
}

TEST_CASE("int affine error is at most half a step") {
    Gen g(71);
    std::vector<double> x(1000);
    for (auto& v : x) v = g.real(-3.0, 5.0);
    const double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
    CHECK(quantization_rmse(x, parse_format("int:4")).rmse <= (hi - lo) / 15.0 / 2.0);
}

TEST_CASE("property: the sf sweep never loses to sf = 0") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto x = sample_distribution(seed % 2 ? "lognormal" : "laplace", 500, -3.0, 1.0, seed);
        for (const char* f : {"lp:8,1,3", "lp:6,1,5", "lp:4,0,3"}) {
            const RmseResult tuned = quantization_rmse(x, parse_format(std::string(f) + ",auto"));
            const RmseResult plain = quantization_rmse(x, parse_format(std::string(f) + ",0"));
            CHECK(tuned.rmse <= plain.rmse);
        }
    }
}

TEST_CASE("synthetic samples") {
    const auto a = sample_distribution("lognormal", 1000, -3.0, 1.0, 4);
    CHECK(a == sample_distribution("lognormal", 1000, -3.0, 1.0, 4));
    CHECK(std::all_of(a.begin(), a.end(), [](double v) { return v > 0.0; }));
    double mean_log = 0.0;
    for (double v : a) mean_log += std::log(v);
    CHECK(mean_log / 1000.0 == doctest::Approx(-3.0).epsilon(0.05));
    CHECK(sample_distribution("normal", 10, 0, 1, 1).size() == 10);
    CHECK_THROWS_AS(sample_distribution("cauchy", 10, 0, 1, 1), InvalidInput);
}
