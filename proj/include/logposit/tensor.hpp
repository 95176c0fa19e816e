#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace lp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);

// Dense row-major tensor. Values are held in double; on disk they are
// little-endian binary32.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> d);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    // Leading dimension and the flattened size of everything after it.
    std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
    std::size_t row_size() const;
    std::span<const double> row(std::size_t i) const;
    std::span<double> row(std::size_t i);

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Raw little-endian float32, no header.
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path, const Shape& shape);

// First `count` rows of a tensor.
Tensor take_rows(const Tensor& t, std::size_t count);

}  // namespace lp
