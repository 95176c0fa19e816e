#include "logposit/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "logposit/error.hpp"

namespace lp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kDeltaFormat = "logposit-delta/1";

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place");
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string delta_to_json(const Model& m, const Delta& delta) {
    check_delta(m, delta);
    json layers = json::array();
    const auto q = m.quantizable();
    for (std::size_t i = 0; i < delta.size(); ++i) {
        layers.push_back({{"layer", m.layers[q[i]].name},
                          {"n", delta[i].n},
                          {"es", delta[i].es},
                          {"rs", delta[i].rs},
                          {"sf", delta[i].sf}});
    }
    json j{{"format", kDeltaFormat}, {"model", m.name}, {"layers", layers}};
    return j.dump(2) + "\n";
}

Delta delta_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput(std::string("malformed delta document: ") + e.what());
    }
    if (!j.is_object() || j.value("format", std::string{}) != kDeltaFormat) {
        throw InvalidInput(std::string("delta document must have format ") + kDeltaFormat);
    }
    if (!j.contains("layers") || !j["layers"].is_array()) throw InvalidInput("delta document lacks 'layers'");
    Delta out;
    for (const json& l : j["layers"]) {
        try {
            LPParams p;
            p.n = l.at("n").get<int>();
            p.es = l.at("es").get<int>();
            p.rs = l.at("rs").get<int>();
            p.sf = l.at("sf").get<double>();
            require_codec_params(p);
            out.push_back(p);
        } catch (const json::exception& e) {
            throw InvalidInput(std::string("bad delta layer entry: ") + e.what());
        }
    }
    return out;
}

void save_delta(const Model& m, const Delta& delta, const fs::path& path) {
    write_text_atomic(path, delta_to_json(m, delta));
}

Delta load_delta(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing delta document: " + path.string());
    return delta_from_json(read_text(path));
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

Csv::Csv(std::vector<std::string> header) : header_(std::move(header)) {}

Csv& Csv::row() {
    rows_.emplace_back();
    return *this;
}

Csv& Csv::add(const std::string& s) {
    if (rows_.empty()) throw InvalidInput("Csv::add before row()");
    rows_.back().push_back(csv_escape(s));
    return *this;
}

Csv& Csv::add(double v) { return add(format_double(v)); }

Csv& Csv::add(long long v) { return add(std::to_string(v)); }

std::string Csv::str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + csv_escape(header_[i]);
    out += '\n';
    for (const auto& r : rows_) {
        if (r.size() != header_.size()) throw InvalidInput("CSV row has the wrong number of fields");
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
        out += '\n';
    }
    return out;
}

}  // namespace lp
