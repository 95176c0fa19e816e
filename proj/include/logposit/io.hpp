#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "logposit/quantize.hpp"

namespace lp {

// Writes to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Delta document: {"format": "logposit-delta/1", "layers": [{layer, n, es, rs, sf}, ...]}.
std::string delta_to_json(const Model& m, const Delta& delta);
Delta delta_from_json(const std::string& text);
void save_delta(const Model& m, const Delta& delta, const std::filesystem::path& path);
Delta load_delta(const std::filesystem::path& path);

// Minimal CSV builder; numbers are written with round-trip precision.
class Csv {
public:
    explicit Csv(std::vector<std::string> header);
    Csv& row();
    Csv& add(const std::string& s);
    Csv& add(const char* s) { return add(std::string(s)); }
    Csv& add(double v);
    Csv& add(long long v);
    Csv& add(int v) { return add(static_cast<long long>(v)); }
    Csv& add(std::size_t v) { return add(static_cast<long long>(v)); }
    Csv& add(unsigned long long v) { return add(static_cast<long long>(v)); }
    std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

}  // namespace lp
