#include "logposit/model.hpp"

#include <fstream>

#include <json.hpp>

#include "logposit/error.hpp"

namespace lp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kModelFormat = "logposit-model/1";
constexpr const char* kDatasetFormat = "logposit-dataset/1";

json read_json(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing manifest: " + path.string());
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput("malformed manifest " + path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << j.dump(2) << '\n';
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InvalidInput(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InvalidInput(where + ": bad field '" + key + "': " + e.what());
    }
}

Shape weight_shape(const LayerSpec& l) {
    if (l.kind == LayerKind::Dense) return {l.out_features, l.in_features};
    return {l.out_channels, l.in_channels, l.kernel, l.kernel};
}

Shape bias_shape(const LayerSpec& l) {
    return {l.kind == LayerKind::Dense ? l.out_features : l.out_channels};
}

}  // namespace

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "softmax") return LayerKind::Softmax;
    if (s == "flatten") return LayerKind::Flatten;
    throw InvalidInput("unknown layer kind '" + s + "'");
}

std::vector<std::size_t> Model::quantizable() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weighted()) out.push_back(i);
    }
    return out;
}

std::vector<Shape> Model::output_shapes() const {
    std::vector<Shape> out;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::Dense:
                if (cur.size() != 1 || cur[0] != l.in_features) {
                    throw InvalidInput(where + ": expects " + std::to_string(l.in_features) +
                                       " input features");
                }
                cur = {l.out_features};
                break;
            case LayerKind::Conv2d: {
                if (cur.size() != 3 || cur[0] != l.in_channels) {
                    throw InvalidInput(where + ": expects [" + std::to_string(l.in_channels) +
                                       ", H, W] input");
                }
                if (l.kernel == 0 || l.stride == 0) throw InvalidInput(where + ": zero kernel/stride");
                if (cur[1] + 2 * l.padding < l.kernel || cur[2] + 2 * l.padding < l.kernel) {
                    throw InvalidInput(where + ": kernel larger than padded input");
                }
                const std::size_t oh = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
                const std::size_t ow = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
                cur = {l.out_channels, oh, ow};
                break;
            }
            case LayerKind::Flatten:
                cur = {shape_size(cur)};
                break;
            case LayerKind::Relu:
            case LayerKind::Softmax:
                break;
        }
        if (l.weighted()) {
            if (l.weight.shape != weight_shape(l)) throw InvalidInput(where + ": weight shape mismatch");
            if (l.bias.shape != bias_shape(l)) throw InvalidInput(where + ": bias shape mismatch");
        }
        out.push_back(cur);
    }
    return out;
}

void Model::check() const {
    if (layers.empty()) throw InvalidInput("model has no layers");
    if (quantizable().empty()) throw InvalidInput("model has no weighted layers");
    (void)output_shapes();
}

Model load_model(const fs::path& manifest) {
    const json j = read_json(manifest);
    const std::string where = manifest.string();
    if (field<std::string>(j, "format", where) != kModelFormat) {
        throw InvalidInput(where + ": unsupported format, expected " + kModelFormat);
    }
    const fs::path dir = manifest.parent_path();
    Model m;
    m.name = j.value("name", std::string{});
    m.input_shape = field<Shape>(j, "input_shape", where);
    const json layers = j.contains("layers") ? j.at("layers") : json();
    if (!layers.is_array()) throw InvalidInput(where + ": 'layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const json& lj = layers[i];
        const std::string lw = where + " layer " + std::to_string(i);
        LayerSpec l;
        l.kind = layer_kind_from_string(field<std::string>(lj, "kind", lw));
        l.name = lj.value("name", std::string(to_string(l.kind)) + std::to_string(i));
        if (l.kind == LayerKind::Dense) {
            l.in_features = field<std::size_t>(lj, "in", lw);
            l.out_features = field<std::size_t>(lj, "out", lw);
        } else if (l.kind == LayerKind::Conv2d) {
            l.in_channels = field<std::size_t>(lj, "in_channels", lw);
            l.out_channels = field<std::size_t>(lj, "out_channels", lw);
            l.kernel = field<std::size_t>(lj, "kernel", lw);
            l.stride = lj.value("stride", std::size_t{1});
            l.padding = lj.value("padding", std::size_t{0});
        }
        if (l.weighted()) {
            l.weight = load_tensor(dir / field<std::string>(lj, "weight", lw), weight_shape(l));
            l.bias = load_tensor(dir / field<std::string>(lj, "bias", lw), bias_shape(l));
        }
        m.layers.push_back(std::move(l));
    }
    m.check();
    return m;
}

void save_model(const Model& m, const fs::path& manifest) {
    m.check();
    const fs::path dir = manifest.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    json j;
    j["format"] = kModelFormat;
    j["name"] = m.name;
    j["input_shape"] = m.input_shape;
    j["layers"] = json::array();
    for (const LayerSpec& l : m.layers) {
        json lj;
        lj["kind"] = to_string(l.kind);
        lj["name"] = l.name;
        if (l.kind == LayerKind::Dense) {
            lj["in"] = l.in_features;
            lj["out"] = l.out_features;
        } else if (l.kind == LayerKind::Conv2d) {
            lj["in_channels"] = l.in_channels;
            lj["out_channels"] = l.out_channels;
            lj["kernel"] = l.kernel;
            lj["stride"] = l.stride;
            lj["padding"] = l.padding;
        }
        if (l.weighted()) {
            const std::string wf = l.name + ".weight.f32";
            const std::string bf = l.name + ".bias.f32";
            save_tensor(l.weight, dir / wf);
            save_tensor(l.bias, dir / bf);
            lj["weight"] = wf;
            lj["bias"] = bf;
        }
        j["layers"].push_back(lj);
    }
    write_json(j, manifest);
}

Dataset load_dataset(const fs::path& manifest) {
    const json j = read_json(manifest);
    const std::string where = manifest.string();
    if (field<std::string>(j, "format", where) != kDatasetFormat) {
        throw InvalidInput(where + ": unsupported format, expected " + kDatasetFormat);
    }
    const fs::path dir = manifest.parent_path();
    Dataset d;
    const json& inputs = j.at("inputs");
    d.inputs = load_tensor(dir / field<std::string>(inputs, "file", where),
                           field<Shape>(inputs, "shape", where));
    if (d.inputs.rows() == 0) throw InvalidInput(where + ": dataset is empty");
    if (j.contains("labels")) {
        const json& labels = j.at("labels");
        const Tensor t = load_tensor(dir / field<std::string>(labels, "file", where),
                                     Shape{d.inputs.rows()});
        for (double v : t.data) d.labels.push_back(static_cast<int>(v));
    }
    return d;
}

void save_dataset(const Dataset& d, const fs::path& manifest) {
    const fs::path dir = manifest.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const std::string stem = manifest.stem().string();
    json j;
    j["format"] = kDatasetFormat;
    j["inputs"] = {{"file", stem + ".inputs.f32"}, {"shape", d.inputs.shape}};
    save_tensor(d.inputs, dir / (stem + ".inputs.f32"));
    if (!d.labels.empty()) {
        Tensor t(Shape{d.labels.size()});
        for (std::size_t i = 0; i < d.labels.size(); ++i) t.data[i] = d.labels[i];
        save_tensor(t, dir / (stem + ".labels.f32"));
        j["labels"] = {{"file", stem + ".labels.f32"}};
    }
    write_json(j, manifest);
}

}  // namespace lp
