#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

#include "embchord/bytes.hpp"
#include "embchord/crypto.hpp"
#include "embchord/errors.hpp"

namespace embchord {

inline constexpr unsigned kMinRingBits = 8;
inline constexpr unsigned kMaxRingBits = 160;
inline constexpr unsigned kDefaultRingBits = 64;

/// Point on the m-bit identifier ring. Values are unsigned integers
/// modulo 2^m with m in [8, 160]; stored as three little-endian 64-bit
/// limbs masked to m bits. Two ids may only be compared or combined when
/// they share the same ring width.
class NodeId {
public:
    NodeId() = default;

    static NodeId from_u64(std::uint64_t v, unsigned bits) {
        check_bits(bits);
        NodeId id;
        id.bits_ = static_cast<std::uint8_t>(bits);
        id.limbs_[0] = v;
        id.mask();
        return id;
    }

    /// Interprets `data` as a big-endian integer and reduces it modulo 2^bits.
    static NodeId from_bytes_be(byte_view data, unsigned bits) {
        check_bits(bits);
        NodeId id;
        id.bits_ = static_cast<std::uint8_t>(bits);
        for (std::uint8_t b : data) {
            id.shl8();
            id.limbs_[0] |= b;
        }
        id.mask();
        return id;
    }

    unsigned bits() const noexcept { return bits_; }

    /// Big-endian value bytes, ceil(bits/8) long; the canonical wire form.
    byte_buffer to_bytes_be() const {
        std::size_t n = byte_width();
        byte_buffer out(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t byte_index = n - 1 - i; // position from LSB
            out[i] = static_cast<std::uint8_t>(limbs_[byte_index / 8] >> ((byte_index % 8) * 8));
        }
        return out;
    }

    std::size_t byte_width() const noexcept { return (bits_ + 7) / 8; }

    std::string to_hex() const { return embchord::to_hex(to_bytes_be()); }

    std::uint64_t low64() const noexcept { return limbs_[0]; }

    /// (value + 2^k) mod 2^bits — the finger-start arithmetic.
    NodeId plus_pow2(unsigned k) const {
        if (k >= bits_) throw config_error("plus_pow2 exponent outside ring width");
        NodeId out = *this;
        unsigned limb = k / 64;
        std::uint64_t add = std::uint64_t(1) << (k % 64);
        for (unsigned i = limb; i < out.limbs_.size(); ++i) {
            std::uint64_t before = out.limbs_[i];
            out.limbs_[i] += add;
            if (out.limbs_[i] >= before) break; // no carry
            add = 1;
        }
        out.mask();
        return out;
    }

    friend bool operator==(const NodeId& a, const NodeId& b) {
        return a.bits_ == b.bits_ && a.limbs_ == b.limbs_;
    }

    friend std::strong_ordering operator<=>(const NodeId& a, const NodeId& b) {
        for (int i = 2; i >= 0; --i)
            if (a.limbs_[i] != b.limbs_[i])
                return a.limbs_[i] < b.limbs_[i] ? std::strong_ordering::less
                                                 : std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

private:
    static void check_bits(unsigned bits) {
        if (bits < kMinRingBits || bits > kMaxRingBits)
            throw config_error("ring width must be in [8, 160] bits, got " + std::to_string(bits));
    }

    void shl8() {
        limbs_[2] = (limbs_[2] << 8) | (limbs_[1] >> 56);
        limbs_[1] = (limbs_[1] << 8) | (limbs_[0] >> 56);
        limbs_[0] <<= 8;
    }

    void mask() {
        for (unsigned i = 0; i < limbs_.size(); ++i) {
            unsigned low = i * 64;
            if (bits_ <= low) {
                limbs_[i] = 0;
            } else if (bits_ - low < 64) {
                limbs_[i] &= (std::uint64_t(1) << (bits_ - low)) - 1;
            }
        }
    }

    std::array<std::uint64_t, 3> limbs_{};
    std::uint8_t bits_ = 0;
};

/// Maps arbitrary bytes onto the ring: the top m bits of the 160-bit
/// digest of `data`, interpreted big-endian.
inline NodeId hash_to_id(byte_view data, unsigned bits) {
    if (bits < kMinRingBits || bits > kMaxRingBits)
        throw config_error("hash_to_id: ring width must be in [8, 160] bits");
    crypto::digest160 d = crypto::sha1(data);
    NodeId full = NodeId::from_bytes_be(d, kMaxRingBits);
    if (bits == kMaxRingBits) return full;
    // shift right by (160 - bits): rebuild from the leading ceil(bits/8) bytes,
    // then drop the surplus low bits of the last byte.
    unsigned drop = kMaxRingBits - bits;
    byte_buffer be(d.begin(), d.end());
    be.resize(be.size() - drop / 8); // whole-byte shift: discard least-significant bytes
    unsigned rem = drop % 8;
    if (rem != 0) {
        std::uint8_t carry = 0;
        for (auto& b : be) {
            std::uint8_t next = static_cast<std::uint8_t>(b << (8 - rem));
            b = static_cast<std::uint8_t>((b >> rem) | carry);
            carry = next;
        }
    }
    return NodeId::from_bytes_be(be, bits);
}

inline NodeId hash_to_id(std::string_view name, unsigned bits) {
    return hash_to_id(byte_view(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()),
                      bits);
}

enum class interval_kind : std::uint8_t { open_open, open_closed };

/// Circular interval membership on the ring. When a == b, the open-open
/// interval is the whole ring minus {a}; the open-closed interval is the
/// whole ring.
inline bool in_interval(const NodeId& x, const NodeId& a, const NodeId& b, interval_kind kind) {
    if (a == b) return kind == interval_kind::open_closed || !(x == a);
    bool closed = kind == interval_kind::open_closed;
    if (a < b) return a < x && (closed ? x <= b : x < b);
    // wraps past zero
    return a < x || (closed ? x <= b : x < b);
}

enum class id_role : std::uint8_t { peer, group, resource };

template <id_role Role>
struct TypedId {
    NodeId id;

    TypedId() = default;
    explicit TypedId(NodeId v) : id(std::move(v)) {}

    friend bool operator==(const TypedId&, const TypedId&) = default;
    friend std::strong_ordering operator<=>(const TypedId& a, const TypedId& b) {
        return a.id <=> b.id;
    }

    unsigned bits() const noexcept { return id.bits(); }
    std::string to_hex() const { return id.to_hex(); }
};

using PeerId = TypedId<id_role::peer>;
using GroupId = TypedId<id_role::group>;
using ResourceId = TypedId<id_role::resource>;

/// Ids derive deterministically from canonical names so that identical
/// names always collide onto the same ring point.
inline PeerId peer_id_from_name(std::string_view name, unsigned bits) {
    return PeerId{hash_to_id(name, bits)};
}

/// Group ids bind the parent scope: hash(parent id bytes ‖ name).
inline GroupId group_id_from_name(const GroupId& parent, std::string_view name, unsigned bits) {
    byte_buffer seed = parent.id.to_bytes_be();
    byte_buffer n = to_bytes(name);
    seed.insert(seed.end(), n.begin(), n.end());
    return GroupId{hash_to_id(seed, bits)};
}

/// Discovery keys bind the group scope: hash(group id bytes ‖ canonical name).
inline NodeId discovery_key(const GroupId& scope, std::string_view canonical_name, unsigned bits) {
    byte_buffer seed = scope.id.to_bytes_be();
    byte_buffer n = to_bytes(canonical_name);
    seed.insert(seed.end(), n.begin(), n.end());
    return hash_to_id(seed, bits);
}

inline ResourceId resource_id_from_name(const GroupId& scope, std::string_view name,
                                        unsigned bits) {
    return ResourceId{discovery_key(scope, name, bits)};
}

} // namespace embchord
