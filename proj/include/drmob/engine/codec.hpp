#pragma once

// Binary row encoding for spill files and order-preserving key encoding.

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "drmob/errors.hpp"

namespace drmob::engine {

class ByteWriter {
public:
    explicit ByteWriter(std::string& out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }

    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }

    template <typename T>
    void put_optional(const std::optional<T>& v) {
        put(static_cast<std::uint8_t>(v.has_value()));
        if (v) put(*v);
    }

private:
    std::string& out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    bool done() const noexcept { return pos_ >= in_.size(); }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    template <typename T>
    std::optional<T> get_optional() {
        if (get<std::uint8_t>() == 0) return std::nullopt;
        return get<T>();
    }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw DataError("spill record truncated");
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

/// Builds a byte string whose lexicographic order matches the field-wise
/// order of the encoded values. Strings must not contain NUL.
class KeyEncoder {
public:
    void add(std::string_view s) {
        key_.append(s);
        key_.push_back('\0');
    }
    void add(std::int64_t v) { add_big_endian(static_cast<std::uint64_t>(v) ^ (1ull << 63)); }
    void add(std::int32_t v) { add(static_cast<std::int64_t>(v)); }
    void add(double v) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        bits = (bits & (1ull << 63)) ? ~bits : bits | (1ull << 63);
        add_big_endian(bits);
    }
    void add(bool v) { key_.push_back(v ? '\1' : '\0'); }

    void clear() { key_.clear(); }
    const std::string& bytes() const noexcept { return key_; }
    std::string take() { return std::move(key_); }

private:
    void add_big_endian(std::uint64_t v) {
        for (int shift = 56; shift >= 0; shift -= 8)
            key_.push_back(static_cast<char>((v >> shift) & 0xff));
    }

    std::string key_;
};

/// FNV-1a followed by a splitmix finalizer. Stable across platforms and runs.
inline std::uint64_t stable_hash(std::string_view bytes, std::uint64_t salt = 0) {
    std::uint64_t h = 1469598103934665603ull ^ salt;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

}  // namespace drmob::engine
