#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>

namespace piggyback::harness {

inline constexpr std::string_view kVersion = "0.1.0";

/// Decimal with 17 significant digits; non-finite values become null in JSON.
[[nodiscard]] inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace io_detail {

    inline void dump(const nlohmann::json& j, std::string& out)
    {
        using value_t = nlohmann::json::value_t;
        switch (j.type()) {
        case value_t::object: {
            out += '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) {
                    out += ',';
                }
                first = false;
                out += nlohmann::json(key).dump();
                out += ':';
                dump(value, out);
            }
            out += '}';
            break;
        }
        case value_t::array: {
            out += '[';
            bool first = true;
            for (const auto& value : j) {
                if (!first) {
                    out += ',';
                }
                first = false;
                dump(value, out);
            }
            out += ']';
            break;
        }
        case value_t::number_float: {
            const double v = j.get<double>();
            out += std::isfinite(v) ? format_double(v) : "null";
            break;
        }
        default:
            out += j.dump();
        }
    }

} // namespace io_detail

/// Compact JSON with every floating-point number at 17 significant digits.
/// Object keys keep nlohmann's sorted order, so output is deterministic.
[[nodiscard]] inline std::string dump_json(const nlohmann::json& j)
{
    std::string out;
    io_detail::dump(j, out);
    return out;
}

inline void write_file(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace piggyback::harness
