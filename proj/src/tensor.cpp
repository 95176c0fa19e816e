#include "logposit/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "logposit/error.hpp"

namespace lp {

std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) {
        throw InvalidInput("tensor data length " + std::to_string(data.size()) +
                           " does not match its shape (" + std::to_string(shape_size(shape)) + ")");
    }
}

std::size_t Tensor::row_size() const {
    if (shape.empty()) return 0;
    return shape_size(Shape(shape.begin() + 1, shape.end()));
}

std::span<const double> Tensor::row(std::size_t i) const {
    const std::size_t w = row_size();
    return std::span<const double>(data).subspan(i * w, w);
}

std::span<double> Tensor::row(std::size_t i) {
    const std::size_t w = row_size();
    return std::span<double>(data).subspan(i * w, w);
}

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
}

}  // namespace

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open tensor file for writing: " + path.string());
    for (double v : t.data) {
        const std::uint32_t word = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        out.write(reinterpret_cast<const char*>(&word), sizeof word);
    }
    if (!out) throw IoError("failed writing tensor file: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path, const Shape& shape) {
    if (!std::filesystem::exists(path)) throw IoError("missing tensor file: " + path.string());
    const auto bytes = std::filesystem::file_size(path);
    const std::size_t count = shape_size(shape);
    if (bytes != count * sizeof(float)) {
        throw InvalidInput("tensor file " + path.string() + " holds " + std::to_string(bytes / 4) +
                           " values but the shape needs " + std::to_string(count));
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file: " + path.string());
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t word = 0;
        in.read(reinterpret_cast<char*>(&word), sizeof word);
        data[i] = std::bit_cast<float>(to_little(word));
    }
    if (!in) throw IoError("short read from tensor file: " + path.string());
    return Tensor(shape, std::move(data));
}

Tensor take_rows(const Tensor& t, std::size_t count) {
    if (count > t.rows()) count = t.rows();
    Shape s = t.shape;
    s.front() = count;
    const std::size_t w = t.row_size();
    return Tensor(s, std::vector<double>(t.data.begin(), t.data.begin() + static_cast<long>(count * w)));
}

}  // namespace lp
