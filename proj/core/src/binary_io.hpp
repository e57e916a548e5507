#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "analogia/errors.hpp"

// Explicit little-endian encoding, independent of host byte order.
namespace analogia::binio {

class Writer {
public:
    void bytes(std::string_view s) { out_.append(s); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

    std::string_view bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }
    std::uint32_t u32(const char* what) {
        auto s = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[i]);
        return v;
    }
    std::uint64_t u64(const char* what) {
        auto s = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[i]);
        return v;
    }
    std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(const char* what) {
        const std::size_t at = pos_;
        const std::uint32_t n = u32(what);
        if (n > remaining()) throw ParseError(std::string("truncated ") + what, at);
        return std::string(bytes(n, what));
    }
    // A count of items that each occupy at least `min_item_bytes`.
    std::uint32_t count(const char* what, std::size_t min_item_bytes) {
        const std::size_t at = pos_;
        const std::uint32_t n = u32(what);
        if (min_item_bytes > 0 && n > remaining() / min_item_bytes) {
            throw ParseError(std::string("implausible ") + what + " " + std::to_string(n), at);
        }
        return n;
    }

    [[noreturn]] void fail(const std::string& what, std::size_t at) const { throw ParseError(what, at); }

private:
    void need(std::size_t n, const char* what) const {
        if (n > remaining()) throw ParseError(std::string("truncated ") + what, pos_);
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace analogia::binio
