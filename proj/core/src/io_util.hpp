#pragma once

// Internal helpers for the JSON-manifest + float32-blob container family.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "cropcast/common.hpp"

namespace cropcast::detail {

static_assert(sizeof(float) == 4, "float must be 32-bit");

inline bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

inline void write_f32_blob(const std::string& path, const float* data, std::size_t count) {
    if (!host_is_little_endian())
        throw NumericError("big-endian hosts are not supported by the blob writer");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write blob: " + path);
    const std::size_t written = std::fwrite(data, sizeof(float), count, f);
    std::fclose(f);
    if (written != count) throw DataError("short write to blob: " + path);
}

inline std::vector<float> read_f32_blob(const std::string& path, std::size_t expected_count) {
    if (!host_is_little_endian())
        throw NumericError("big-endian hosts are not supported by the blob reader");
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open blob: " + path);
    std::fseek(f, 0, SEEK_END);
    const long bytes = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    if (bytes < 0 || static_cast<std::size_t>(bytes) != expected_count * sizeof(float)) {
        std::fclose(f);
        throw DataError("blob size mismatch for " + path + ": expected " +
                        std::to_string(expected_count * sizeof(float)) + " bytes, found " +
                        std::to_string(bytes < 0 ? 0 : bytes));
    }
    std::vector<float> data(expected_count);
    const std::size_t got = std::fread(data.data(), sizeof(float), expected_count, f);
    std::fclose(f);
    if (got != expected_count) throw DataError("short read from blob: " + path);
    return data;
}

inline std::string read_text_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open file: " + path);
    std::fseek(f, 0, SEEK_END);
    const long bytes = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::string text(bytes > 0 ? static_cast<std::size_t>(bytes) : 0, '\0');
    if (bytes > 0 && std::fread(text.data(), 1, text.size(), f) != text.size()) {
        std::fclose(f);
        throw DataError("short read from file: " + path);
    }
    std::fclose(f);
    return text;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write file: " + path);
    const std::size_t written = std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    if (written != text.size()) throw DataError("short write to file: " + path);
}

/// "foo/bar.json" -> "foo/bar.bin"
inline std::string sibling_bin_path(const std::string& manifest_path) {
    const auto dot = manifest_path.rfind('.');
    const auto slash = manifest_path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return manifest_path + ".bin";
    return manifest_path.substr(0, dot) + ".bin";
}

/// Basename of the sibling blob, as recorded inside manifests.
inline std::string sibling_bin_name(const std::string& manifest_path) {
    std::string bin = sibling_bin_path(manifest_path);
    const auto slash = bin.find_last_of("/\\");
    return slash == std::string::npos ? bin : bin.substr(slash + 1);
}

} // namespace cropcast::detail
