#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "logposit/tensor.hpp"

namespace lp {

enum class LayerKind { Dense, Conv2d, Relu, Softmax, Flatten };

const char* to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::string name;
    // dense
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    // conv2d, square kernels
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    // dense: [out, in]; conv2d: [out, in, kernel, kernel]
    Tensor weight;
    Tensor bias;

    bool weighted() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
};

struct Model {
    std::string name;
    Shape input_shape;  // per sample, e.g. {64} or {1, 8, 8}
    std::vector<LayerSpec> layers;

    // Indices into `layers` of the dense/conv layers, in order.
    std::vector<std::size_t> quantizable() const;
    std::size_t num_quantizable() const { return quantizable().size(); }

    // Per-sample output shape of every layer; throws InvalidInput on a
    // dimension mismatch anywhere along the chain.
    std::vector<Shape> output_shapes() const;
    void check() const;
};

// Manifest: JSON document, see docs/FORMATS.md. Tensor file names are
// resolved relative to the manifest's directory.
Model load_model(const std::filesystem::path& manifest);
void save_model(const Model& m, const std::filesystem::path& manifest);

struct Dataset {
    Tensor inputs;            // [count, ...input_shape]
    std::vector<int> labels;  // may be empty for unlabeled calibration data
};

Dataset load_dataset(const std::filesystem::path& manifest);
void save_dataset(const Dataset& d, const std::filesystem::path& manifest);

}  // namespace lp
