#pragma once

// Little-endian binary writer/reader shared by dataset and checkpoint files.
// The reader tracks its byte offset so format errors can name it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "anq/errors.hpp"

namespace anq::io {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class BinaryWriter {
public:
    explicit BinaryWriter(std::ofstream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }

    template <typename T>
    void put_array(const std::vector<T>& values) {
        if (!values.empty()) {
            out_.write(reinterpret_cast<const char*>(values.data()),
                       static_cast<std::streamsize>(values.size() * sizeof(T)));
        }
    }

    void put_bytes(const std::string& bytes) {
        out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }

private:
    std::ofstream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    std::uint64_t offset() const { return offset_; }
    std::uint64_t remaining() const { return bytes_.size() - offset_; }

    template <typename T>
    T get(const char* what) {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    template <typename T>
    std::vector<T> get_array(std::uint64_t count, const char* what) {
        if (count > remaining() / sizeof(T)) {
            throw FormatError(std::string("truncated ") + what, offset_);
        }
        std::vector<T> values(count);
        if (count > 0) {
            std::memcpy(values.data(), bytes_.data() + offset_, count * sizeof(T));
        }
        offset_ += count * sizeof(T);
        return values;
    }

    std::string get_bytes(std::uint64_t count, const char* what) {
        require(count, what);
        std::string s(bytes_.data() + offset_, count);
        offset_ += count;
        return s;
    }

private:
    void require(std::uint64_t n, const char* what) const {
        if (n > remaining()) {
            throw FormatError(std::string("truncated ") + what, offset_);
        }
    }

    std::vector<char> bytes_;
    std::uint64_t offset_ = 0;
};

std::vector<char> read_file(const std::string& path);

}  // namespace anq::io
