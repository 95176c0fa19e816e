#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "logposit/error.hpp"
#include "logposit/model.hpp"
#include "logposit/quantize.hpp"
#include "support.hpp"

using namespace lp;
using lptest::Gen;
namespace fs = std::filesystem;

namespace {

LayerSpec dense(const std::string& name, std::size_t in, std::size_t out, std::vector<double> w,
                std::vector<double> b) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.name = name;
    l.in_features = in;
    l.out_features = out;
    l.weight = Tensor({out, in}, std::move(w));
    l.bias = Tensor({out}, std::move(b));
    return l;
}

LayerSpec plain(LayerKind k, const std::string& name) {
    LayerSpec l;
    l.kind = k;
    l.name = name;
    return l;
}

LayerSpec random_dense(Gen& g, const std::string& name, std::size_t in, std::size_t out) {
    std::vector<double> w(in * out), b(out);
    for (auto& x : w) x = g.normal(0.0, 0.5);
    for (auto& x : b) x = g.normal(0.0, 0.1);
    return dense(name, in, out, w, b);
}

Model random_mlp(Gen& g) {
    Model m;
    m.name = "mlp";
    m.input_shape = {6};
    m.layers = {random_dense(g, "fc1", 6, 5), plain(LayerKind::Relu, "r1"), random_dense(g, "fc2", 5, 4),
                plain(LayerKind::Relu, "r2"), random_dense(g, "fc3", 4, 3)};
    return m;
}

Tensor random_batch(Gen& g, std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (auto& x : t.data) x = g.real(0.0, 1.0);
    return t;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("logposit-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("identity dense layer passes input through") {
    Model m;
    m.name = "id";
    m.input_shape = {3};
    m.layers = {dense("id", 3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0})};
    const Tensor x({2, 3}, {1, -2, 3, 0.5, 0.25, -8});
    CHECK(forward(m, x, false).output.data == x.data);
}

TEST_CASE("two-layer model with pinned weights") {
    Model m;
    m.name = "pinned";
    m.input_shape = {2};
    m.layers = {dense("a", 2, 2, {1, 2, -1, 1}, {0.5, -1}), plain(LayerKind::Relu, "r"),
                dense("b", 2, 1, {2, -3}, {1})};
    const Tensor x({1, 2}, {1, 1});
    // a: [1+2+0.5, -1+1-1] = [3.5, -1] -> relu [3.5, 0] -> b: 7 + 1 = 8
    const ForwardResult r = forward(m, x, true);
    CHECK(r.output.data == std::vector<double>{8.0});
    REQUIRE(r.taps.size() == 2);
    CHECK(r.taps[0].data == std::vector<double>{3.5, 0.0});
}

TEST_CASE("property: dense forward matches a loop oracle") {
    Gen g(41);
    for (int trial = 0; trial < 50; ++trial) {
        const Model m = random_mlp(g);
        const Tensor x = random_batch(g, 4, 6);
        const Tensor out = forward(m, x, false).output;
        for (std::size_t s = 0; s < 4; ++s) {
            std::vector<double> h(x.row(s).begin(), x.row(s).end());
            for (const auto& l : m.layers) {
                if (l.kind == LayerKind::Relu) {
                    for (auto& v : h) v = std::max(v, 0.0);
                    continue;
                }
                std::vector<double> next(l.out_features);
                for (std::size_t o = 0; o < l.out_features; ++o) {
                    double acc = l.bias.data[o];
                    for (std::size_t i = 0; i < l.in_features; ++i) acc += l.weight.data[o * l.in_features + i] * h[i];
                    next[o] = acc;
                }
                h = next;
            }
            for (std::size_t o = 0; o < 3; ++o) CHECK(out.row(s)[o] == doctest::Approx(h[o]).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: conv forward matches a loop oracle") {
    Gen g(42);
    for (int trial = 0; trial < 30; ++trial) {
        LayerSpec c;
        c.kind = LayerKind::Conv2d;
        c.name = "conv";
        c.in_channels = static_cast<std::size_t>(g.integer(1, 3));
        c.out_channels = static_cast<std::size_t>(g.integer(1, 3));
        c.kernel = static_cast<std::size_t>(g.integer(1, 3));
        c.stride = static_cast<std::size_t>(g.integer(1, 2));
        c.padding = static_cast<std::size_t>(g.integer(0, 1));
        const std::size_t H = 5;
        c.weight = Tensor({c.out_channels, c.in_channels, c.kernel, c.kernel});
        for (auto& x : c.weight.data) x = g.normal();
        c.bias = Tensor({c.out_channels});
        for (auto& x : c.bias.data) x = g.normal();
        Model m;
        m.name = "conv";
        m.input_shape = {c.in_channels, H, H};
        m.layers = {c};
        Tensor x({2, c.in_channels, H, H});
        for (auto& v : x.data) v = g.normal();
        const Tensor out = forward(m, x, false).output;
        const std::size_t O = (H + 2 * c.padding - c.kernel) / c.stride + 1;
        REQUIRE(out.shape == Shape{2, c.out_channels, O, O});
        for (std::size_t s = 0; s < 2; ++s) {
            for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                for (std::size_t oy = 0; oy < O; ++oy) {
                    for (std::size_t ox = 0; ox < O; ++ox) {
                        double acc = c.bias.data[oc];
                        for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                            for (std::size_t ky = 0; ky < c.kernel; ++ky) {
                                for (std::size_t kx = 0; kx < c.kernel; ++kx) {
                                    const long iy = static_cast<long>(oy * c.stride + ky) - static_cast<long>(c.padding);
                                    const long ix = static_cast<long>(ox * c.stride + kx) - static_cast<long>(c.padding);
                                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(H)) continue;
                                    acc += c.weight.data[((oc * c.in_channels + ic) * c.kernel + ky) * c.kernel + kx] *
                                           x.data[((s * c.in_channels + ic) * H + static_cast<std::size_t>(iy)) * H +
                                                  static_cast<std::size_t>(ix)];
                                }
                            }
                        }
                        CHECK(out.data[((s * c.out_channels + oc) * O + oy) * O + ox] == doctest::Approx(acc).epsilon(1e-12));
                    }
                }
            }
        }
    }
}

TEST_CASE("fake quantize") {
    const LPParams p{8, 1, 3, 0.0};
    SUBCASE("representable values are unchanged") {
        const Tensor t({4}, {1.0, -std::exp2(3.375), 0.0, 0.5});
        const FakeQuantResult r = fake_quantize(t, p);
        CHECK(r.tensor.data == t.data);
        CHECK(r.rmse == 0.0);
    }
    SUBCASE("saturation error in closed form") {
        const double mx = Codec(p).max_value();
        const Tensor t({5}, std::vector<double>(5, 4 * mx));
        const FakeQuantResult r = fake_quantize(t, p);
        for (double v : r.tensor.data) CHECK(v == mx);
        CHECK(r.rmse == doctest::Approx(3 * mx));
    }
    SUBCASE("sf centered on the data beats an sf far away") {
        Gen g(43);
        Tensor t({4000});
        double mean_log = 0.0;
        for (auto& v : t.data) {
            v = std::exp(g.normal(-3.0, 1.0));
            mean_log += std::log2(v);
        }
        mean_log /= 4000.0;
        const double centered = fake_quantize(t, {8, 1, 3, -mean_log}).rmse;
        const double shifted = fake_quantize(t, {8, 1, 3, -mean_log + 8}).rmse;
        CHECK(centered < shifted);
    }
}

TEST_CASE("property: fake quantize is idempotent") {
    Gen g(44);
    for (int trial = 0; trial < 200; ++trial) {
        const LPParams p = g.params();
        Tensor t({64});
        for (auto& v : t.data) v = g.normal(0.0, std::exp2(g.real(-6, 6)));
        const Tensor once = fake_quantize(t, p).tensor;
        const FakeQuantResult twice = fake_quantize(once, p);
        CHECK(twice.tensor.data == once.data);
        CHECK(twice.rmse == 0.0);
    }
}

TEST_CASE("property: a nested 8-bit grid is never worse than its 4-bit subset") {
    Gen g(45);
    for (int trial = 0; trial < 200; ++trial) {
        const int es = g.integer(0, 1), rs = g.integer(2, 3);
        const double sf = g.integer(-8, 8) / 4.0;
        Tensor t({256});
        for (auto& v : t.data) v = g.normal(0.0, std::exp2(g.real(-3, 3)));
        CHECK(fake_quantize(t, {8, es, rs, sf}).rmse <= fake_quantize(t, {4, es, rs, sf}).rmse);
    }
}

TEST_CASE("activation formats derived from weight formats") {
    const DerivedParams a = activation_params({4, 1, 3, 0.5}, 1.0);
    CHECK(a.params == LPParams{8, 2, 3, 1.5});
    CHECK(a.clamps.empty());
    const DerivedParams b = activation_params({8, 3, 7, 0.0}, 0.0);
    CHECK(b.params.n == 8);
    CHECK(b.params.es == 5);
    const DerivedParams c = activation_params({2, 2, 1, 0.0}, 0.0);
    CHECK(c.params.n == 4);
    CHECK(c.params.es == 1);
    CHECK(c.params.rs == 2);
    CHECK(c.clamps.size() == 2);
    CHECK(validate(c.params).empty());

    const auto chain = activation_chain({{4, 0, 3, 1.0}, {8, 1, 5, -0.5}, {3, 0, 2, 2.0}});
    REQUIRE(chain.size() == 3);
    CHECK(chain[0].sf == 1.0);
    CHECK(chain[1].sf == 0.5);
    CHECK(chain[2].sf == 2.5);
    CHECK(chain[2].n == 6);
}

TEST_CASE("quantized forward") {
    Gen g(46);
    const Model m = random_mlp(g);
    const Tensor x = random_batch(g, 16, 6);
    const Tensor fp = forward(m, x, false).output;

    const Delta fine(3, LPParams{8, 1, 5, 0.0});
    const Tensor q8 = forward_quantized(m, fine, x, false).output;
    double err8 = 0.0;
    for (std::size_t i = 0; i < fp.size(); ++i) err8 = std::max(err8, std::abs(q8.data[i] - fp.data[i]));
    CHECK(err8 < 0.15);

    const Delta coarse(3, LPParams{3, 0, 2, 0.0});
    const Tensor q3 = forward_quantized(m, coarse, x, false).output;
    double err3 = 0.0;
    for (std::size_t i = 0; i < fp.size(); ++i) err3 = std::max(err3, std::abs(q3.data[i] - fp.data[i]));
    CHECK(err3 > err8);

    const ForwardResult tapped = forward_quantized(m, fine, x, true);
    CHECK(tapped.output == q8);
    CHECK(tapped.taps.size() == 3);
    CHECK(forward(m, x, true).output == fp);
    CHECK_THROWS_AS(forward_quantized(m, Delta(2, LPParams{}), x, false), InvalidInput);
}

TEST_CASE("mean weight width") {
    Gen g(47);
    const Model m = random_mlp(g);
    // 30 + 20 + 12 weights
    CHECK(mean_weight_bits(m, {{8, 1, 3, 0}, {4, 0, 3, 0}, {4, 0, 3, 0}}) == doctest::Approx((30 * 8 + 32 * 4) / 62.0));
}

TEST_CASE("model save and load round trip") {
    Gen g(48);
    Model m = random_mlp(g);
    // float32 on disk, so start from float32 values
    for (auto& l : m.layers) {
        for (auto& v : l.weight.data) v = static_cast<float>(v);
        for (auto& v : l.bias.data) v = static_cast<float>(v);
    }
    const fs::path dir = scratch("model");
    save_model(m, dir / "model.json");
    const Model back = load_model(dir / "model.json");
    CHECK(back.name == m.name);
    CHECK(back.input_shape == m.input_shape);
    REQUIRE(back.layers.size() == m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CHECK(back.layers[i].kind == m.layers[i].kind);
        CHECK(back.layers[i].weight == m.layers[i].weight);
        CHECK(back.layers[i].bias == m.layers[i].bias);
    }
    fs::remove(dir / "fc2.weight.f32");
    CHECK_THROWS_AS(load_model(dir / "model.json"), IoError);
    CHECK_THROWS_AS(load_model(dir / "absent.json"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("tensor files round trip") {
    const fs::path dir = scratch("tensor");
    const Tensor t({2, 3}, {1.5, -2.25, 0, 1e-3f, 7, 8});
    save_tensor(t, dir / "t.f32");
    CHECK(load_tensor(dir / "t.f32", {2, 3}) == t);
    CHECK_THROWS_AS(load_tensor(dir / "t.f32", {2, 4}), InvalidInput);
    fs::remove_all(dir);
}

TEST_CASE("reference fixtures load") {
    const Model mlp = load_model(fs::path(LOGPOSIT_FIXTURES_DIR) / "mlp" / "model.json");
    CHECK(mlp.num_quantizable() == 3);
    const Model cnn = load_model(fs::path(LOGPOSIT_FIXTURES_DIR) / "cnn" / "model.json");
    CHECK(cnn.num_quantizable() == 3);
    const Dataset test = load_dataset(fs::path(LOGPOSIT_FIXTURES_DIR) / "digits_test.json");
    CHECK(test.inputs.shape == Shape{360, 64});
    CHECK(accuracy(mlp, test.inputs, test.labels) > 0.9);
}

TEST_CASE("model checks") {
    Model empty;
    empty.name = "empty";
    empty.input_shape = {4};
    CHECK_THROWS_AS(empty.check(), InvalidInput);
    Gen g(49);
    Model bad = random_mlp(g);
    bad.layers[2].in_features = 7;
    CHECK_THROWS_AS(bad.check(), InvalidInput);
}
