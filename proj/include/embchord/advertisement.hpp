#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embchord/bytes.hpp"
#include "embchord/endpoint.hpp"
#include "embchord/ids.hpp"

namespace embchord {

/// Static bidirectional mapping from well-known field names and attribute
/// keys to 1-byte tag codes. 0xFF escapes a length-prefixed literal key, so
/// unknown keys still encode; known keys cost a single byte. This is what
/// keeps advertisements small enough for narrowband frames.
class TagTable {
public:
    static constexpr std::uint8_t escape_code = 0xFF;

    static const std::vector<std::string_view>& entries() {
        static const std::vector<std::string_view> table = {
            // structural field names
            "kind", "subject", "scope", "name", "attributes", "endpoints",
            "expiration", "version",
            // common attribute keys for peers/groups/pipes/resources
            "peer", "group", "pipe", "resource", "type", "proto", "path",
            "unit", "value", "format", "rate", "interval", "ttl", "owner",
            "desc", "location", "model", "vendor", "serial", "fw", "hw",
            "service", "port", "addr", "segment", "role", "bridge", "policy",
            "parent", "epoch", "state", "temp", "humidity", "pressure",
            "light", "battery", "rssi", "uptime", "status",
        };
        return table;
    }

    static std::optional<std::uint8_t> code_for(std::string_view key) {
        const auto& t = entries();
        for (std::size_t i = 0; i < t.size(); ++i)
            if (t[i] == key) return static_cast<std::uint8_t>(i);
        return std::nullopt;
    }

    static std::optional<std::string_view> key_for(std::uint8_t code) {
        const auto& t = entries();
        if (code < t.size()) return t[code];
        return std::nullopt;
    }
};

enum class adv_kind : std::uint8_t { peer = 0, group = 1, pipe = 2, resource = 3 };

inline const char* adv_kind_name(adv_kind k) {
    switch (k) {
        case adv_kind::peer: return "Peer";
        case adv_kind::group: return "Group";
        case adv_kind::pipe: return "Pipe";
        case adv_kind::resource: return "Resource";
    }
    return "?";
}

/// Self-describing record announcing a peer, group, pipe, or resource —
/// the unit stored in the DHT.
struct Advertisement {
    adv_kind kind = adv_kind::resource;
    NodeId subject_id;
    GroupId group_scope;
    std::string name;                             // non-empty, <= 255 bytes
    std::map<std::string, std::string> attributes; // <= 64 entries, keys unique
    std::vector<EndpointAddress> endpoints;
    std::uint64_t expiration_ms = 0;              // absolute simulated time
    std::uint8_t version = 1;

    friend bool operator==(const Advertisement&, const Advertisement&) = default;

    void validate() const {
        if (name.empty() || name.size() > 255)
            throw config_error("advertisement name must be 1..255 bytes");
        if (attributes.size() > 64) throw config_error("advertisement has more than 64 attributes");
        if (endpoints.size() > 255) throw config_error("advertisement has more than 255 endpoints");
        if (subject_id.bits() != group_scope.id.bits())
            throw config_error("subject and scope ids use different ring widths");
        for (const auto& [k, v] : attributes) {
            if (k.empty() || k.size() > 255)
                throw config_error("attribute key must be 1..255 bytes");
            if (v.size() > 0xFFFF) throw config_error("attribute value exceeds u16 length");
        }
        for (const auto& ep : endpoints)
            if (ep.address.size() > 255) throw config_error("endpoint address exceeds 255 bytes");
    }
};

inline constexpr std::uint8_t kAdvertisementMagic = 0xAD;

/// Wire layout (big-endian): magic 0xAD; version u8; kind u8; subject_id as
/// u8 byte-length + value bytes; group_scope likewise; name u8 len + UTF-8;
/// attribute count u8, each = tag u8 (or 0xFF + u8 len + literal key) +
/// u16 value length + value; endpoint count u8, each = kind u8 + u8 len +
/// address; expiration u64; CRC-32 over all preceding bytes.
inline byte_buffer encode_advertisement(const Advertisement& a) {
    a.validate();
    byte_writer w;
    w.u8(kAdvertisementMagic);
    w.u8(a.version);
    w.u8(static_cast<std::uint8_t>(a.kind));
    w.len8_bytes(a.subject_id.to_bytes_be());
    w.len8_bytes(a.group_scope.id.to_bytes_be());
    w.len8_bytes(to_bytes(a.name));
    w.u8(static_cast<std::uint8_t>(a.attributes.size()));
    for (const auto& [key, value] : a.attributes) {
        if (auto code = TagTable::code_for(key)) {
            w.u8(*code);
        } else {
            w.u8(TagTable::escape_code);
            w.len8_bytes(to_bytes(key));
        }
        w.u16(static_cast<std::uint16_t>(value.size()));
        w.bytes(to_bytes(value));
    }
    w.u8(static_cast<std::uint8_t>(a.endpoints.size()));
    for (const auto& ep : a.endpoints) {
        w.u8(static_cast<std::uint8_t>(ep.kind));
        w.len8_bytes(to_bytes(ep.address));
    }
    w.u64(a.expiration_ms);
    w.append_crc32();
    return w.take();
}

/// Decodes one advertisement. `ring_bits` supplies the deployment's id
/// width, which the wire form does not repeat. Throws malformed_error with
/// the offending byte offset on truncated or corrupted input.
inline Advertisement decode_advertisement(byte_view frame, unsigned ring_bits) {
    byte_view body = byte_reader::check_crc32(frame);
    byte_reader r(body);
    if (r.u8() != kAdvertisementMagic)
        throw malformed_error("bad advertisement magic", r.offset() - 1);
    Advertisement a;
    a.version = r.u8();
    std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(adv_kind::resource))
        throw malformed_error("unknown advertisement kind", r.offset() - 1);
    a.kind = static_cast<adv_kind>(kind);

    auto read_id = [&](const char* field) {
        std::size_t at = r.offset();
        byte_buffer raw = r.len8_bytes();
        if (raw.size() != (ring_bits + 7) / 8)
            throw malformed_error(std::string(field) + " width does not match ring", at);
        return NodeId::from_bytes_be(raw, ring_bits);
    };
    a.subject_id = read_id("subject id");
    a.group_scope = GroupId{read_id("scope id")};

    std::size_t name_at = r.offset();
    a.name = to_string(r.len8_bytes());
    if (a.name.empty()) throw malformed_error("empty advertisement name", name_at);

    std::uint8_t attr_count = r.u8();
    if (attr_count > 64) throw malformed_error("attribute count exceeds 64", r.offset() - 1);
    for (unsigned i = 0; i < attr_count; ++i) {
        std::uint8_t tag = r.u8();
        std::string key;
        if (tag == TagTable::escape_code) {
            key = to_string(r.len8_bytes());
        } else if (auto known = TagTable::key_for(tag)) {
            key = std::string(*known);
        } else {
            throw malformed_error("unassigned attribute tag code", r.offset() - 1);
        }
        std::uint16_t vlen = r.u16();
        std::string value = to_string(r.bytes(vlen));
        if (!a.attributes.emplace(std::move(key), std::move(value)).second)
            throw malformed_error("duplicate attribute key", r.offset());
    }

    std::uint8_t ep_count = r.u8();
    for (unsigned i = 0; i < ep_count; ++i) {
        std::uint8_t k = r.u8();
        if (k > static_cast<std::uint8_t>(transport_kind::narrow_sim))
            throw malformed_error("unknown transport kind", r.offset() - 1);
        EndpointAddress ep;
        ep.kind = static_cast<transport_kind>(k);
        ep.address = to_string(r.len8_bytes());
        a.endpoints.push_back(std::move(ep));
    }

    a.expiration_ms = r.u64();
    if (!r.at_end()) throw malformed_error("trailing bytes after advertisement", r.offset());
    a.validate();
    return a;
}

/// Plain "key=value;" text rendering of the same content; the compactness
/// baseline the binary form is measured against.
inline std::string render_plain(const Advertisement& a) {
    std::string out;
    auto field = [&out](std::string_view k, std::string_view v) {
        out.append(k);
        out.push_back('=');
        out.append(v);
        out.push_back(';');
    };
    field("kind", adv_kind_name(a.kind));
    field("version", std::to_string(a.version));
    field("subject", a.subject_id.to_hex());
    field("scope", a.group_scope.to_hex());
    field("name", a.name);
    for (const auto& [k, v] : a.attributes) field(k, v);
    for (const auto& ep : a.endpoints) field("endpoint", ep.to_string());
    field("expiration", std::to_string(a.expiration_ms));
    return out;
}

} // namespace embchord
