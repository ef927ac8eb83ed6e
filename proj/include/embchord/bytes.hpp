#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "embchord/errors.hpp"

namespace embchord {

using byte_buffer = std::vector<std::uint8_t>;
using byte_view = std::span<const std::uint8_t>;

inline byte_buffer to_bytes(std::string_view s) {
    return byte_buffer(s.begin(), s.end());
}

inline std::string to_string(byte_view b) {
    return std::string(b.begin(), b.end());
}

inline std::uint32_t crc32_of(byte_view data) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
                static_cast<uInt>(data.size())));
}

inline std::string to_hex(byte_view data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

inline byte_buffer from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw config_error("hex string has odd length");
    byte_buffer out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) throw config_error("invalid hex digit");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

/// Big-endian append-only writer. All multi-byte wire fields in this
/// project are big-endian.
class byte_writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v));
    }

    void u32(std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void u64(std::uint64_t v) {
        for (int shift = 56; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void bytes(byte_view data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

    void bytes(const byte_buffer& data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

    /// u8 length prefix + raw bytes; rejects data longer than 255.
    void len8_bytes(byte_view data) {
        if (data.size() > 0xFF) throw config_error("field exceeds u8 length prefix");
        u8(static_cast<std::uint8_t>(data.size()));
        bytes(data);
    }

    void append_crc32() { u32(crc32_of(buf_)); }

    std::size_t size() const noexcept { return buf_.size(); }
    const byte_buffer& data() const noexcept { return buf_; }
    byte_buffer take() { return std::move(buf_); }

private:
    byte_buffer buf_;
};

/// Bounds-checked big-endian reader; throws malformed_error carrying the
/// offset of the first byte that could not be read.
class byte_reader {
public:
    explicit byte_reader(byte_view data) : data_(data) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

    std::uint8_t u8() {
        need(1, "u8");
        return data_[pos_++];
    }

    std::uint16_t u16() {
        need(2, "u16");
        std::uint16_t v = (std::uint16_t(data_[pos_]) << 8) | data_[pos_ + 1];
        pos_ += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8, "u64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_ + i];
        pos_ += 8;
        return v;
    }

    byte_view bytes(std::size_t n) {
        need(n, "byte run");
        byte_view v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    byte_buffer bytes_copy(std::size_t n) {
        byte_view v = bytes(n);
        return byte_buffer(v.begin(), v.end());
    }

    byte_buffer len8_bytes() { return bytes_copy(u8()); }

    /// Verifies a trailing CRC-32 over everything before it and returns the
    /// covered region. Call before reading fields.
    static byte_view check_crc32(byte_view frame) {
        if (frame.size() < 4) throw malformed_error("buffer too short for CRC-32", frame.size());
        byte_view body = frame.subspan(0, frame.size() - 4);
        byte_reader tail(frame.subspan(frame.size() - 4));
        std::uint32_t stored = tail.u32();
        if (crc32_of(body) != stored)
            throw malformed_error("CRC-32 mismatch", frame.size() - 4);
        return body;
    }

private:
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > data_.size())
            throw malformed_error(std::string("truncated ") + what, pos_);
    }

    byte_view data_;
    std::size_t pos_ = 0;
};

} // namespace embchord
