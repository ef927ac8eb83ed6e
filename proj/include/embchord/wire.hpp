#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "embchord/bytes.hpp"
#include "embchord/dht.hpp"
#include "embchord/endpoint.hpp"
#include "embchord/groupkeys.hpp"
#include "embchord/ids.hpp"

namespace embchord {

/// A peer's id together with its attachment points. Descriptors ride in
/// every ring-maintenance payload, which is how reachability information
/// spreads without a separate membership protocol.
struct PeerDescriptor {
    PeerId id;
    std::vector<EndpointAddress> endpoints;

    friend bool operator==(const PeerDescriptor&, const PeerDescriptor&) = default;
    bool valid() const noexcept { return id.bits() != 0; }
};

inline void write_descriptor(byte_writer& w, const PeerDescriptor& d) {
    w.len8_bytes(d.id.id.to_bytes_be());
    w.u8(static_cast<std::uint8_t>(d.endpoints.size()));
    for (const auto& ep : d.endpoints) {
        w.u8(static_cast<std::uint8_t>(ep.kind));
        w.len8_bytes(to_bytes(ep.address));
    }
}

inline PeerDescriptor read_descriptor(byte_reader& r, unsigned ring_bits) {
    PeerDescriptor d;
    d.id = PeerId{NodeId::from_bytes_be(r.len8_bytes(), ring_bits)};
    std::uint8_t n = r.u8();
    for (unsigned i = 0; i < n; ++i) {
        EndpointAddress ep;
        std::uint8_t k = r.u8();
        if (k > static_cast<std::uint8_t>(transport_kind::narrow_sim))
            throw malformed_error("unknown transport kind in descriptor", r.offset() - 1);
        ep.kind = static_cast<transport_kind>(k);
        ep.address = to_string(r.len8_bytes());
        d.endpoints.push_back(std::move(ep));
    }
    return d;
}

inline void write_descriptor_list(byte_writer& w, const std::vector<PeerDescriptor>& list) {
    w.u8(static_cast<std::uint8_t>(list.size()));
    for (const auto& d : list) write_descriptor(w, d);
}

inline std::vector<PeerDescriptor> read_descriptor_list(byte_reader& r, unsigned ring_bits) {
    std::vector<PeerDescriptor> out;
    std::uint8_t n = r.u8();
    out.reserve(n);
    for (unsigned i = 0; i < n; ++i) out.push_back(read_descriptor(r, ring_bits));
    return out;
}

namespace rpc {

/// FIND_SUCC: recursive lookup request. hops counts forwarding steps so
/// far; the reply returns straight to origin.
struct FindSucc {
    NodeId target;
    PeerDescriptor origin;
    std::uint64_t request_id = 0;
    std::uint8_t hops = 0;

    byte_buffer encode() const {
        byte_writer w;
        w.len8_bytes(target.to_bytes_be());
        write_descriptor(w, origin);
        w.u64(request_id);
        w.u8(hops);
        return w.take();
    }
    static FindSucc decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        FindSucc m;
        m.target = NodeId::from_bytes_be(r.len8_bytes(), bits);
        m.origin = read_descriptor(r, bits);
        m.request_id = r.u64();
        m.hops = r.u8();
        return m;
    }
};

/// FIND_SUCC_REPLY: the resolved successor plus the replier's successor
/// list, which doubles as the replica candidate set for the looked-up key.
struct FindSuccReply {
    std::uint64_t request_id = 0;
    NodeId target;
    PeerDescriptor successor;
    std::uint8_t hops = 0;
    std::vector<PeerDescriptor> replica_chain;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        w.len8_bytes(target.to_bytes_be());
        write_descriptor(w, successor);
        w.u8(hops);
        write_descriptor_list(w, replica_chain);
        return w.take();
    }
    static FindSuccReply decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        FindSuccReply m;
        m.request_id = r.u64();
        m.target = NodeId::from_bytes_be(r.len8_bytes(), bits);
        m.successor = read_descriptor(r, bits);
        m.hops = r.u8();
        m.replica_chain = read_descriptor_list(r, bits);
        return m;
    }
};

/// NOTIFY: "I might be your predecessor". want_transfer is set by a
/// joining node to request the records it now owns.
struct Notify {
    PeerDescriptor sender;
    std::uint8_t want_transfer = 0;

    byte_buffer encode() const {
        byte_writer w;
        write_descriptor(w, sender);
        w.u8(want_transfer);
        return w.take();
    }
    static Notify decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        Notify m;
        m.sender = read_descriptor(r, bits);
        m.want_transfer = r.u8();
        return m;
    }
};

/// GET_PRED doubles as the liveness probe.
struct GetPred {
    std::uint64_t request_id = 0;
    PeerDescriptor sender;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        write_descriptor(w, sender);
        return w.take();
    }
    static GetPred decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        GetPred m;
        m.request_id = r.u64();
        m.sender = read_descriptor(r, bits);
        return m;
    }
};

struct GetPredReply {
    std::uint64_t request_id = 0;
    std::optional<PeerDescriptor> predecessor;
    std::vector<PeerDescriptor> successors;
    PeerDescriptor sender;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        w.u8(predecessor ? 1 : 0);
        if (predecessor) write_descriptor(w, *predecessor);
        write_descriptor_list(w, successors);
        write_descriptor(w, sender);
        return w.take();
    }
    static GetPredReply decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        GetPredReply m;
        m.request_id = r.u64();
        if (r.u8()) m.predecessor = read_descriptor(r, bits);
        m.successors = read_descriptor_list(r, bits);
        m.sender = read_descriptor(r, bits);
        return m;
    }
};

struct Put {
    std::uint64_t request_id = 0;
    DhtRecord record;
    PeerDescriptor origin;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        write_record(w, record);
        write_descriptor(w, origin);
        return w.take();
    }
    static Put decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        Put m;
        m.request_id = r.u64();
        m.record = read_record(r, bits);
        m.origin = read_descriptor(r, bits);
        return m;
    }
};

struct PutAck {
    std::uint64_t request_id = 0;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        return w.take();
    }
    static PutAck decode(byte_view b, unsigned) {
        byte_reader r(b);
        return PutAck{r.u64()};
    }
};

struct Get {
    std::uint64_t request_id = 0;
    NodeId key;
    PeerDescriptor origin;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        w.len8_bytes(key.to_bytes_be());
        write_descriptor(w, origin);
        return w.take();
    }
    static Get decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        Get m;
        m.request_id = r.u64();
        m.key = NodeId::from_bytes_be(r.len8_bytes(), bits);
        m.origin = read_descriptor(r, bits);
        return m;
    }
};

struct GetReply {
    std::uint64_t request_id = 0;
    std::vector<DhtRecord> records;

    byte_buffer encode() const {
        byte_writer w;
        w.u64(request_id);
        w.u16(static_cast<std::uint16_t>(records.size()));
        for (const auto& rec : records) write_record(w, rec);
        return w.take();
    }
    static GetReply decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        GetReply m;
        m.request_id = r.u64();
        std::uint16_t n = r.u16();
        for (unsigned i = 0; i < n; ++i) m.records.push_back(read_record(r, bits));
        return m;
    }
};

enum class transfer_reason : std::uint8_t { handoff = 0, replica = 1 };

/// TRANSFER: bulk record movement. handoff answers a joining node's
/// NOTIFY; replica pushes refresh the successor copies every repair round.
struct Transfer {
    transfer_reason reason = transfer_reason::replica;
    std::vector<DhtRecord> records;
    PeerDescriptor sender;

    byte_buffer encode() const {
        byte_writer w;
        w.u8(static_cast<std::uint8_t>(reason));
        w.u16(static_cast<std::uint16_t>(records.size()));
        for (const auto& rec : records) write_record(w, rec);
        write_descriptor(w, sender);
        return w.take();
    }
    static Transfer decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        Transfer m;
        m.reason = static_cast<transfer_reason>(r.u8());
        std::uint16_t n = r.u16();
        for (unsigned i = 0; i < n; ++i) m.records.push_back(read_record(r, bits));
        m.sender = read_descriptor(r, bits);
        return m;
    }
};

enum class key_op : std::uint8_t {
    join_request = 1,
    join_ack = 2,
    join_nak = 3,
    key_update = 4,
    key_fetch = 5,
};

/// KEY_MGMT: admission and key distribution for secured groups. Sealed
/// blobs are AEAD ciphertexts under the member's credential authenticator.
struct KeyMgmt {
    key_op op = key_op::join_request;
    PeerDescriptor sender;
    std::uint64_t issued_at_ms = 0;   // credential binding (requests)
    crypto::mac256 proof{};           // credential possession (requests)
    std::uint32_t key_id = 0;         // delivered epoch (ack/update)
    byte_buffer sealed;               // encoded EncryptedPayload (ack/update)
    std::uint8_t reason = 0;          // errc (nak)

    byte_buffer encode() const {
        byte_writer w;
        w.u8(static_cast<std::uint8_t>(op));
        write_descriptor(w, sender);
        w.u64(issued_at_ms);
        w.bytes(byte_view(proof));
        w.u32(key_id);
        w.u32(static_cast<std::uint32_t>(sealed.size()));
        w.bytes(sealed);
        w.u8(reason);
        return w.take();
    }
    static KeyMgmt decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        KeyMgmt m;
        m.op = static_cast<key_op>(r.u8());
        m.sender = read_descriptor(r, bits);
        m.issued_at_ms = r.u64();
        auto proof = r.bytes(m.proof.size());
        std::copy(proof.begin(), proof.end(), m.proof.begin());
        m.key_id = r.u32();
        m.sealed = r.bytes_copy(r.u32());
        m.reason = r.u8();
        return m;
    }
};

enum class ctrl_op : std::uint8_t { route_stale = 1 };

struct Ctrl {
    ctrl_op op = ctrl_op::route_stale;
    PeerId about;      // peer whose route went stale
    std::string note;

    byte_buffer encode() const {
        byte_writer w;
        w.u8(static_cast<std::uint8_t>(op));
        w.len8_bytes(about.id.to_bytes_be());
        w.len8_bytes(to_bytes(note));
        return w.take();
    }
    static Ctrl decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        Ctrl m;
        m.op = static_cast<ctrl_op>(r.u8());
        m.about = PeerId{NodeId::from_bytes_be(r.len8_bytes(), bits)};
        m.note = to_string(r.len8_bytes());
        return m;
    }
};

/// PIPE_DATA payload: pipe id + application bytes (possibly an encoded
/// EncryptedPayload when the envelope's encrypted flag is set).
struct PipeData {
    ResourceId pipe;
    byte_buffer data;

    byte_buffer encode() const {
        byte_writer w;
        w.len8_bytes(pipe.id.to_bytes_be());
        w.u32(static_cast<std::uint32_t>(data.size()));
        w.bytes(data);
        return w.take();
    }
    static PipeData decode(byte_view b, unsigned bits) {
        byte_reader r(b);
        PipeData m;
        m.pipe = ResourceId{NodeId::from_bytes_be(r.len8_bytes(), bits)};
        m.data = r.bytes_copy(r.u32());
        return m;
    }
};

} // namespace rpc
} // namespace embchord
