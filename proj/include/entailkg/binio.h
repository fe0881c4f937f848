#pragma once

// Little-endian primitive I/O shared by all binary artifact formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "entailkg/errors.h"

namespace entailkg::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

template <typename T>
    requires std::is_trivially_copyable_v<T>
void write(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
    requires std::is_trivially_copyable_v<T>
void write_array(std::ostream& out, std::span<const T> values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void write_string(std::ostream& out, std::string_view s) {
    write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Reader that converts short reads into FormatError naming the artifact.
class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T read() {
        T value{};
        raw(reinterpret_cast<char*>(&value), sizeof(T));
        return value;
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void read_array(std::span<T> out) {
        raw(reinterpret_cast<char*>(out.data()), out.size_bytes());
    }

    template <typename T>
    std::vector<T> read_vector(std::size_t n) {
        std::vector<T> v(n);
        read_array(std::span<T>(v));
        return v;
    }

    std::string read_string() {
        const auto n = read<std::uint32_t>();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    void expect_magic(std::string_view magic) {
        std::string got(magic.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (in_.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
            throw FormatError(what_ + ": bad magic (expected \"" + std::string(magic) + "\")");
        }
    }

    void expect_version(std::uint16_t supported) {
        const auto v = read<std::uint16_t>();
        if (v != supported) {
            throw FormatError(what_ + ": unsupported format version " + std::to_string(v) +
                              " (expected " + std::to_string(supported) + ")");
        }
    }

    // True when the stream is exhausted; used to reject trailing garbage.
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    const std::string& what() const { return what_; }

private:
    void raw(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(what_ + ": truncated file");
        }
    }

    std::istream& in_;
    std::string what_;
};

}  // namespace entailkg::binio
