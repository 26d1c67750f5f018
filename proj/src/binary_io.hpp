// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lrf/error.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string_view>
#include <vector>

namespace lrf::detail {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(fmt::format("cannot open '{}' for writing", path.string()));
    }
    return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot open '{}'", path.string()));
    }
    return in;
}

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_f32(std::ostream& out, const std::vector<double>& values) {
    std::vector<float> buf(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw Error(fmt::format("'{}' is truncated", path.string()));
    }
    return value;
}

inline std::vector<double> read_f32(std::istream& in, std::size_t count, const std::filesystem::path& path) {
    std::vector<float> buf(count);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)))) {
        throw Error(fmt::format("'{}' is truncated: expected {} float values", path.string(), count));
    }
    return {buf.begin(), buf.end()};
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::filesystem::path& path) {
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw Error(fmt::format("'{}' does not start with magic '{}'", path.string(), magic));
    }
}

inline void expect_end(std::istream& in, const std::filesystem::path& path) {
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(fmt::format("'{}' has trailing bytes", path.string()));
    }
}

} // namespace lrf::detail
