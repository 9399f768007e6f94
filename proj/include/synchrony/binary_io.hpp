#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synchrony/error.hpp"

namespace synchrony::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::span<const std::uint8_t> data) {
        bytes_.insert(bytes_.end(), data.begin(), data.end());
    }
    void put_doubles(std::span<const double> data) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
        bytes_.insert(bytes_.end(), p, p + data.size_bytes());
    }
    void put_string(std::string_view s) {
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; running past the end throws
/// ParseError("unexpected end of record ...").
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        require(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    void get_doubles(std::span<double> out) {
        require(out.size_bytes());
        std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }
    std::string get_string(std::size_t n) {
        auto b = get_bytes(n);
        return std::string(b.begin(), b.end());
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void require(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw ParseError(context_ + ": unexpected end of record at byte " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace synchrony::io
