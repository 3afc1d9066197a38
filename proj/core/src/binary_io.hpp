#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include "maescale/error.hpp"

namespace maescale {

template <class Word, class Value>
void write_le(std::ostream& out, std::span<const Value> values) {
    static_assert(sizeof(Word) == sizeof(Value));
    constexpr std::size_t kChunk = 4096;
    unsigned char buf[kChunk * sizeof(Word)];
    std::size_t i = 0;
    while (i < values.size()) {
        const std::size_t n = std::min(kChunk, values.size() - i);
        for (std::size_t k = 0; k < n; ++k) {
            const auto bits = std::bit_cast<Word>(values[i + k]);
            for (std::size_t b = 0; b < sizeof(Word); ++b) {
                buf[k * sizeof(Word) + b] = static_cast<unsigned char>(bits >> (8 * b));
            }
        }
        out.write(reinterpret_cast<const char*>(buf),
                  static_cast<std::streamsize>(n * sizeof(Word)));
        i += n;
    }
}

template <class Word, class Value>
bool read_le(std::istream& in, std::span<Value> values) {
    static_assert(sizeof(Word) == sizeof(Value));
    constexpr std::size_t kChunk = 4096;
    unsigned char buf[kChunk * sizeof(Word)];
    std::size_t i = 0;
    while (i < values.size()) {
        const std::size_t n = std::min(kChunk, values.size() - i);
        if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n * sizeof(Word)))) {
            return false;
        }
        for (std::size_t k = 0; k < n; ++k) {
            Word bits = 0;
            for (std::size_t b = 0; b < sizeof(Word); ++b) {
                bits |= static_cast<Word>(buf[k * sizeof(Word) + b]) << (8 * b);
            }
            values[i + k] = std::bit_cast<Value>(bits);
        }
        i += n;
    }
    return true;
}

inline void write_f32_le(std::ostream& out, std::span<const float> v) {
    write_le<std::uint32_t>(out, v);
}
inline bool read_f32_le(std::istream& in, std::span<float> v) {
    return read_le<std::uint32_t>(in, v);
}
inline void write_f64_le(std::ostream& out, std::span<const double> v) {
    write_le<std::uint64_t>(out, v);
}
inline bool read_f64_le(std::istream& in, std::span<double> v) {
    return read_le<std::uint64_t>(in, v);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace maescale
