#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embchord/bytes.hpp"
#include "embchord/crypto.hpp"
#include "embchord/ids.hpp"

namespace embchord {

/// One replicated discovery entry: key is hash_to_id of the canonical
/// discovery name, payload is the encoded advertisement. Multiple records
/// may share a key (multi-value store).
struct DhtRecord {
    NodeId key;
    byte_buffer payload;
    PeerId publisher;
    std::uint64_t expires_at_ms = 0;

    friend bool operator==(const DhtRecord&, const DhtRecord&) = default;

    bool expired(std::uint64_t now_ms) const { return expires_at_ms <= now_ms; }
};

/// Per-node record storage. Records are re-pushed by the key's owner every
/// repair round; a copy whose lease goes stale (this node fell out of the
/// key's replica set) is pruned, so quiesced stores hold exactly the
/// replica placement.
class RecordStore {
public:
    /// Stores or refreshes one record; identical (publisher, payload)
    /// pairs collapse, keeping the later expiry.
    void put(const DhtRecord& rec, std::uint64_t now_ms) {
        auto ident = identity_of(rec);
        auto& slot = records_[rec.key][ident];
        if (slot.record.payload.empty() || rec.expires_at_ms >= slot.record.expires_at_ms)
            slot.record = rec;
        slot.lease_ms = now_ms;
    }

    std::vector<DhtRecord> live_records(const NodeId& key, std::uint64_t now_ms) const {
        std::vector<DhtRecord> out;
        auto it = records_.find(key);
        if (it == records_.end()) return out;
        for (const auto& [ident, slot] : it->second)
            if (!slot.record.expired(now_ms)) out.push_back(slot.record);
        return out;
    }

    std::vector<NodeId> keys() const {
        std::vector<NodeId> out;
        out.reserve(records_.size());
        for (const auto& [key, slots] : records_) out.push_back(key);
        return out;
    }

    std::vector<DhtRecord> records_under(const NodeId& key) const {
        std::vector<DhtRecord> out;
        auto it = records_.find(key);
        if (it == records_.end()) return out;
        for (const auto& [ident, slot] : it->second) out.push_back(slot.record);
        return out;
    }

    void refresh_lease(const NodeId& key, std::uint64_t now_ms) {
        auto it = records_.find(key);
        if (it == records_.end()) return;
        for (auto& [ident, slot] : it->second) slot.lease_ms = now_ms;
    }

    std::uint64_t lease_of(const NodeId& key) const {
        auto it = records_.find(key);
        if (it == records_.end()) return 0;
        std::uint64_t newest = 0;
        for (const auto& [ident, slot] : it->second) newest = std::max(newest, slot.lease_ms);
        return newest;
    }

    void drop_key(const NodeId& key) { records_.erase(key); }

    /// Removes expired records; returns how many were purged.
    std::size_t purge_expired(std::uint64_t now_ms) {
        std::size_t purged = 0;
        for (auto it = records_.begin(); it != records_.end();) {
            auto& slots = it->second;
            for (auto s = slots.begin(); s != slots.end();) {
                if (s->second.record.expired(now_ms)) {
                    s = slots.erase(s);
                    ++purged;
                } else {
                    ++s;
                }
            }
            it = slots.empty() ? records_.erase(it) : ++it;
        }
        return purged;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [key, slots] : records_) n += slots.size();
        return n;
    }

private:
    struct slot_data {
        DhtRecord record;
        std::uint64_t lease_ms = 0;
    };

    static std::string identity_of(const DhtRecord& rec) {
        auto digest = crypto::sha1(rec.payload);
        return rec.publisher.to_hex() + ":" + to_hex(digest);
    }

    std::map<NodeId, std::map<std::string, slot_data>> records_;
};

/// Wire form of a record inside PUT/GET_REPLY/TRANSFER payloads.
inline void write_record(byte_writer& w, const DhtRecord& rec) {
    w.len8_bytes(rec.key.to_bytes_be());
    w.u32(static_cast<std::uint32_t>(rec.payload.size()));
    w.bytes(rec.payload);
    w.len8_bytes(rec.publisher.id.to_bytes_be());
    w.u64(rec.expires_at_ms);
}

inline DhtRecord read_record(byte_reader& r, unsigned ring_bits) {
    DhtRecord rec;
    rec.key = NodeId::from_bytes_be(r.len8_bytes(), ring_bits);
    rec.payload = r.bytes_copy(r.u32());
    rec.publisher = PeerId{NodeId::from_bytes_be(r.len8_bytes(), ring_bits)};
    rec.expires_at_ms = r.u64();
    return rec;
}

} // namespace embchord
