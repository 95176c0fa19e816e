#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "logposit/error.hpp"
#include "logposit/model_sim.hpp"

using namespace lp;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures(LOGPOSIT_FIXTURES_DIR);

int argmax(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

TEST_CASE("force width re-clamps the other fields") {
    const Delta d{{8, 5, 7, 0.5}, {6, 2, 3, -1.0}};
    const Delta four = force_width(d, 4);
    CHECK(four[0] == LPParams{4, 1, 3, 0.5});
    CHECK(four[1] == LPParams{4, 1, 3, -1.0});
    const Delta two = force_width(d, 2);
    CHECK(two[0] == LPParams{2, 0, 1, 0.5});
}

TEST_CASE("MLP fixture through the array") {
    const Model m = load_model(kFixtures / "mlp" / "model.json");
    const Dataset data = load_dataset(kFixtures / "digits_test.json");
    const Tensor batch = take_rows(data.inputs, 64);
    const Delta all8(3, LPParams{8, 1, 5, 0.0});
    const ModelSimResult r = simulate_model(m, all8, batch, ArrayConfig{}, Datapath{});
    REQUIRE(r.layers.size() == 3);

    // Cycle total from the tile formula, layer by layer.
    std::uint64_t want = 0;
    const int dims[3][2] = {{64, 32}, {32, 16}, {16, 10}};
    for (const auto& d : dims) want += closed_form_cycles(plan_tiles(d[0], d[1], 8, 8, 1), 64);
    CHECK(r.cycles == want);
    CHECK(r.macs == 64u * (64 * 32 + 32 * 16 + 16 * 10));
    CHECK(r.layers[0].M == 64);
    CHECK(r.layers[0].K == 64);
    CHECK(r.layers[0].N == 32);

    int agree = 0;
    const Tensor fp = forward(m, batch, false).output;
    for (std::size_t i = 0; i < 64; ++i) agree += argmax(r.output.row(i)) == argmax(fp.row(i));
    CHECK(agree >= 58);

    const ModelSimResult packed = simulate_model(m, force_width(all8, 2), batch, ArrayConfig{}, Datapath{});
    CHECK(packed.cycles < r.cycles);
    const ModelSimResult mid = simulate_model(m, force_width(all8, 4), batch, ArrayConfig{}, Datapath{});
    CHECK(mid.cycles < r.cycles);
    CHECK(packed.cycles <= mid.cycles);
}

TEST_CASE("CNN fixture runs through im2col") {
    const Model m = load_model(kFixtures / "cnn" / "model.json");
    const Dataset data = load_dataset(kFixtures / "digits_test_img.json");
    const Tensor batch = take_rows(data.inputs, 16);
    const Delta all8(3, LPParams{8, 1, 5, 0.0});
    const ModelSimResult r = simulate_model(m, all8, batch, ArrayConfig{}, Datapath{});
    REQUIRE(r.layers.size() == 3);
    CHECK(r.layers[0].M == 16 * 64);
    CHECK(r.layers[0].K == 9);
    CHECK(r.layers[0].N == 4);
    CHECK(r.layers[1].M == 16 * 16);
    CHECK(r.layers[1].K == 36);
    CHECK(r.output.shape == Shape{16, 10});
    int agree = 0;
    const Tensor fp = forward(m, batch, false).output;
    for (std::size_t i = 0; i < 16; ++i) agree += argmax(r.output.row(i)) == argmax(fp.row(i));
    CHECK(agree >= 13);
}

TEST_CASE("model simulation rejects bad inputs") {
    const Model m = load_model(kFixtures / "mlp" / "model.json");
    const Tensor batch({2, 64});
    CHECK_THROWS_AS(simulate_model(m, Delta(3, LPParams{6, 1, 3, 0.0}), batch, ArrayConfig{}, Datapath{}),
                    InvalidInput);
    CHECK_THROWS_AS(simulate_model(m, Delta(2, LPParams{8, 1, 3, 0.0}), batch, ArrayConfig{}, Datapath{}),
                    InvalidInput);
    CHECK_THROWS_AS(simulate_model(m, Delta(3, LPParams{8, 1, 3, 0.0}), Tensor({2, 10}), ArrayConfig{}, Datapath{}),
                    InvalidInput);
    Model empty;
    empty.name = "empty";
    empty.input_shape = {64};
    CHECK_THROWS_AS(simulate_model(empty, {}, batch, ArrayConfig{}, Datapath{}), InvalidInput);
}
