#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "embchord/bytes.hpp"

namespace embchord {

enum class coap_type : std::uint8_t { con = 0, non = 1, ack = 2, rst = 3 };

/// class.detail codes packed as (class << 5) | detail.
namespace coap_code {
inline constexpr std::uint8_t get = 0x01;           // 0.01
inline constexpr std::uint8_t post = 0x02;          // 0.02
inline constexpr std::uint8_t put = 0x03;           // 0.03
inline constexpr std::uint8_t del = 0x04;           // 0.04
inline constexpr std::uint8_t created = 0x41;       // 2.01
inline constexpr std::uint8_t deleted = 0x42;       // 2.02
inline constexpr std::uint8_t changed = 0x44;       // 2.04
inline constexpr std::uint8_t content = 0x45;       // 2.05
inline constexpr std::uint8_t unauthorized = 0x81;  // 4.01
inline constexpr std::uint8_t not_found = 0x84;     // 4.04
inline constexpr std::uint8_t internal_error = 0xA0; // 5.00

inline constexpr unsigned cls(std::uint8_t code) { return code >> 5; }
inline constexpr unsigned detail(std::uint8_t code) { return code & 0x1F; }
inline bool is_request(std::uint8_t code) { return cls(code) == 0 && code != 0; }

inline std::string to_string(std::uint8_t code) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%u.%02u", cls(code), detail(code));
    return buf;
}
} // namespace coap_code

/// Reliability constants: 2 s base timeout doubling across at most 4
/// retransmissions, no jitter, so retransmission instants are exact in
/// simulated time.
inline constexpr std::uint64_t kCoapAckTimeoutMs = 2000;
inline constexpr unsigned kCoapMaxRetransmit = 4;

/// RESTful request/response unit layered on pipes. Not RFC-bit-compatible:
/// the overlay envelope already carries addressing, so the layout below is
/// a compact fixed serialization inside envelope payloads.
struct CoapMessage {
    coap_type type = coap_type::con;
    std::uint8_t code = coap_code::get;
    std::uint16_t message_id = 0;
    byte_buffer token;                  // 0..8 bytes
    std::vector<std::string> uri_path;  // '/'-separated ASCII segments
    std::uint16_t content_format = 0;
    byte_buffer payload;

    friend bool operator==(const CoapMessage&, const CoapMessage&) = default;
};

/// Layout: msg_type u8, code u8, message_id u16, token length u8 + token,
/// path-segment count u8 + length-prefixed segments, content_format u16,
/// payload u16 length + bytes.
inline byte_buffer encode_coap(const CoapMessage& m) {
    if (m.token.size() > 8) throw config_error("coap token longer than 8 bytes");
    if (m.uri_path.size() > 255) throw config_error("coap path has too many segments");
    if (m.payload.size() > 0xFFFF) throw config_error("coap payload exceeds u16 length");
    byte_writer w;
    w.u8(static_cast<std::uint8_t>(m.type));
    w.u8(m.code);
    w.u16(m.message_id);
    w.len8_bytes(m.token);
    w.u8(static_cast<std::uint8_t>(m.uri_path.size()));
    for (const auto& seg : m.uri_path) w.len8_bytes(to_bytes(seg));
    w.u16(m.content_format);
    w.u16(static_cast<std::uint16_t>(m.payload.size()));
    w.bytes(m.payload);
    return w.take();
}

inline CoapMessage decode_coap(byte_view frame) {
    byte_reader r(frame);
    CoapMessage m;
    std::uint8_t t = r.u8();
    if (t > 3) throw malformed_error("bad coap message type", r.offset() - 1);
    m.type = static_cast<coap_type>(t);
    m.code = r.u8();
    m.message_id = r.u16();
    m.token = r.len8_bytes();
    if (m.token.size() > 8) throw malformed_error("coap token longer than 8 bytes", r.offset());
    std::uint8_t segs = r.u8();
    for (unsigned i = 0; i < segs; ++i) m.uri_path.push_back(to_string(r.len8_bytes()));
    m.content_format = r.u16();
    m.payload = r.bytes_copy(r.u16());
    if (!r.at_end()) throw malformed_error("trailing bytes after coap message", r.offset());
    return m;
}

/// Splits "/a/b/c" into {"a","b","c"}; empty segments are dropped.
inline std::vector<std::string> split_uri_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (begin <= path.size()) {
        auto end = path.find('/', begin);
        if (end == std::string_view::npos) end = path.size();
        if (end > begin) out.emplace_back(path.substr(begin, end - begin));
        begin = end + 1;
    }
    return out;
}

inline std::string join_uri_path(const std::vector<std::string>& segs) {
    std::string out;
    for (const auto& s : segs) {
        out.push_back('/');
        out.append(s);
    }
    return out.empty() ? "/" : out;
}

} // namespace embchord
