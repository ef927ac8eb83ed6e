#pragma once

#include <cstdint>

#include "embchord/bytes.hpp"
#include "embchord/ids.hpp"

namespace embchord {

/// Discriminates what rides inside an envelope. Ring maintenance and DHT
/// RPCs live below 0x20; everything above is application-layer.
enum class payload_kind : std::uint8_t {
    find_succ = 0x01,
    find_succ_reply = 0x02,
    notify = 0x03,
    get_pred = 0x04,
    get_pred_reply = 0x05,
    put = 0x06,
    put_ack = 0x07,
    get = 0x08,
    get_reply = 0x09,
    transfer = 0x0A,
    pipe_data = 0x20,
    coap = 0x30,
    key_mgmt = 0x40,
    ctrl = 0x50,
};

inline constexpr std::uint8_t kEnvelopeMagic = 0xE0;
inline constexpr std::uint8_t kEnvelopeVersion = 1;
inline constexpr std::uint8_t kFlagEncrypted = 0x01;
inline constexpr std::uint8_t kFlagPropagate = 0x02;
inline constexpr std::uint8_t kDefaultTtl = 16;

/// Fixed wire size of an envelope with an empty payload, per ring width.
inline constexpr std::size_t envelope_overhead(unsigned ring_bits) {
    std::size_t id_w = 1 + (ring_bits + 7) / 8;
    return 5 + 3 * id_w + 8 + 4 + 4; // header, three ids, correlation, len, crc
}

/// Transport-independent wire unit carrying all overlay traffic. The same
/// envelope crosses Mem, NarrowSim, and Tcp segments unchanged; only the
/// fragmentation below it adapts per link.
struct MessageEnvelope {
    std::uint8_t version = kEnvelopeVersion;
    payload_kind kind = payload_kind::pipe_data;
    std::uint8_t flags = 0;
    std::uint8_t ttl = kDefaultTtl;
    PeerId src;
    NodeId dst;     // peer id, or group id when the propagate flag is set
    GroupId group;
    std::uint64_t correlation_id = 0;
    byte_buffer payload;

    friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;

    bool encrypted() const noexcept { return flags & kFlagEncrypted; }
    bool propagate() const noexcept { return flags & kFlagPropagate; }
};

/// Layout (big-endian): magic 0xE0; version u8; payload_kind u8; flags u8;
/// ttl u8; src id (u8 len + bytes); dst id (u8 len + bytes); group id
/// (u8 len + bytes); correlation_id u64; payload u32 length + bytes;
/// CRC-32 over all preceding bytes.
inline byte_buffer encode_envelope(const MessageEnvelope& e) {
    byte_writer w;
    w.u8(kEnvelopeMagic);
    w.u8(e.version);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.u8(e.flags);
    w.u8(e.ttl);
    w.len8_bytes(e.src.id.to_bytes_be());
    w.len8_bytes(e.dst.to_bytes_be());
    w.len8_bytes(e.group.id.to_bytes_be());
    w.u64(e.correlation_id);
    w.u32(static_cast<std::uint32_t>(e.payload.size()));
    w.bytes(e.payload);
    w.append_crc32();
    return w.take();
}

inline MessageEnvelope decode_envelope(byte_view frame, unsigned ring_bits) {
    byte_view body = byte_reader::check_crc32(frame);
    byte_reader r(body);
    if (r.u8() != kEnvelopeMagic) throw malformed_error("bad envelope magic", r.offset() - 1);
    MessageEnvelope e;
    e.version = r.u8();
    if (e.version != kEnvelopeVersion)
        throw malformed_error("unsupported envelope version", r.offset() - 1);
    e.kind = static_cast<payload_kind>(r.u8());
    e.flags = r.u8();
    e.ttl = r.u8();
    auto read_id = [&]() {
        std::size_t at = r.offset();
        byte_buffer raw = r.len8_bytes();
        if (raw.size() != (ring_bits + 7) / 8)
            throw malformed_error("id width does not match ring", at);
        return NodeId::from_bytes_be(raw, ring_bits);
    };
    e.src = PeerId{read_id()};
    e.dst = read_id();
    e.group = GroupId{read_id()};
    e.correlation_id = r.u64();
    std::uint32_t plen = r.u32();
    e.payload = r.bytes_copy(plen);
    if (!r.at_end()) throw malformed_error("trailing bytes after envelope", r.offset());
    return e;
}

} // namespace embchord
