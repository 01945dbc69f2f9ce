#pragma once

// Little-endian primitives for the "FCMI" container shared by checkpoints and
// binary datasets.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fcmi/error.hpp"

namespace fcmi::detail {

inline constexpr std::array<char, 4> kMagic{'F', 'C', 'M', 'I'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kKindModel = 1;
inline constexpr std::uint32_t kKindDataset = 2;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    }

    template <typename T>
    void put(T value) {
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
    void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
    void put_doubles(const std::vector<double>& values) {
        out_.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    }
    void header(std::uint32_t kind) {
        put_bytes(kMagic.data(), kMagic.size());
        put(kContainerVersion);
        put(kind);
    }
    void finish() {
        out_.flush();
        if (!out_) throw FormatError(fmt::format("write to {} failed", path_.string()));
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw FormatError(fmt::format("cannot open {}", path.string()));
    }

    template <typename T>
    T get() {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (!in_) throw FormatError(fmt::format("{}: truncated container", path_.string()));
        return value;
    }
    void get_doubles(std::vector<double>& values) {
        in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
        if (!in_) throw FormatError(fmt::format("{}: truncated container", path_.string()));
    }
    void expect_header(std::uint32_t kind) {
        std::array<char, 4> magic{};
        in_.read(magic.data(), magic.size());
        if (!in_ || magic != kMagic) throw FormatError(fmt::format("{}: not an FCMI container", path_.string()));
        const auto version = get<std::uint32_t>();
        if (version != kContainerVersion) {
            throw FormatError(fmt::format("{}: unsupported container version {}", path_.string(), version));
        }
        const auto found = get<std::uint32_t>();
        if (found != kind) {
            throw FormatError(fmt::format("{}: container kind {} where {} was expected", path_.string(), found, kind));
        }
    }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw FormatError(fmt::format("{}: trailing bytes after payload", path_.string()));
        }
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace fcmi::detail
