#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "embchord/bytes.hpp"
#include "embchord/endpoint.hpp"

namespace embchord {

inline constexpr std::size_t kFragmentHeaderSize = 8; // envelope_id u32 + index u16 + total u16

/// One slice of an encoded envelope, sized to a link MTU. All `total`
/// distinct indices of one envelope_id are required to reassemble.
struct Fragment {
    std::uint32_t envelope_id = 0;
    std::uint16_t index = 0;
    std::uint16_t total = 1;
    byte_buffer payload;

    friend bool operator==(const Fragment&, const Fragment&) = default;
};

inline byte_buffer encode_fragment(const Fragment& f) {
    byte_writer w;
    w.u32(f.envelope_id);
    w.u16(f.index);
    w.u16(f.total);
    w.bytes(f.payload);
    return w.take();
}

inline Fragment decode_fragment(byte_view frame) {
    byte_reader r(frame);
    Fragment f;
    f.envelope_id = r.u32();
    f.index = r.u16();
    f.total = r.u16();
    f.payload = r.bytes_copy(r.remaining());
    if (f.index >= f.total) throw malformed_error("fragment index out of range", 4);
    return f;
}

/// Splits an encoded envelope into MTU-sized fragments. Each wire fragment
/// is header + slice <= mtu, so the slice budget is mtu - 8.
inline std::vector<Fragment> fragment_envelope(byte_view envelope_bytes, std::uint32_t envelope_id,
                                               std::uint32_t mtu) {
    if (mtu < kFragmentHeaderSize + 1) throw config_error("MTU too small for fragment header");
    std::size_t slice = mtu - kFragmentHeaderSize;
    std::size_t count = envelope_bytes.empty() ? 1 : (envelope_bytes.size() + slice - 1) / slice;
    if (count > 0xFFFF) throw config_error("envelope needs more than 65535 fragments");
    std::vector<Fragment> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Fragment f;
        f.envelope_id = envelope_id;
        f.index = static_cast<std::uint16_t>(i);
        f.total = static_cast<std::uint16_t>(count);
        std::size_t begin = i * slice;
        std::size_t len = std::min(slice, envelope_bytes.size() - begin);
        auto view = envelope_bytes.subspan(begin, len);
        f.payload.assign(view.begin(), view.end());
        out.push_back(std::move(f));
    }
    return out;
}

/// Collects fragments per (origin, envelope_id) and yields the envelope
/// bytes once every index has arrived, in any order. Duplicate indices are
/// ignored. Entries that idle past the reassembly window are dropped by
/// expire_older_than().
class Reassembler {
public:
    struct key {
        std::string origin; // sending endpoint address, scopes envelope_id
        std::uint32_t envelope_id;
        friend auto operator<=>(const key&, const key&) = default;
    };

    /// Returns the full envelope byte sequence when `f` completes it.
    std::optional<byte_buffer> accept(const key& k, Fragment f, std::uint64_t now_ms) {
        auto& entry = pending_[k];
        if (entry.slices.empty()) entry.slices.resize(f.total);
        if (f.total != entry.slices.size()) {
            pending_.erase(k); // conflicting totals: discard the whole attempt
            return std::nullopt;
        }
        entry.last_activity_ms = now_ms;
        auto& slot = entry.slices[f.index];
        if (!slot.has_value()) {
            slot = std::move(f.payload);
            ++entry.received;
        }
        if (entry.received < entry.slices.size()) return std::nullopt;
        byte_buffer whole;
        for (auto& s : entry.slices) whole.insert(whole.end(), s->begin(), s->end());
        pending_.erase(k);
        return whole;
    }

    /// Drops attempts idle since before `cutoff_ms`; returns how many.
    std::size_t expire_older_than(std::uint64_t cutoff_ms) {
        std::size_t dropped = 0;
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->second.last_activity_ms < cutoff_ms) {
                it = pending_.erase(it);
                ++dropped;
            } else {
                ++it;
            }
        }
        return dropped;
    }

    std::size_t pending_count() const noexcept { return pending_.size(); }

private:
    struct partial {
        std::vector<std::optional<byte_buffer>> slices;
        std::size_t received = 0;
        std::uint64_t last_activity_ms = 0;
    };
    std::map<key, partial> pending_;
};

} // namespace embchord
