#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "embchord/bytes.hpp"
#include "embchord/crypto.hpp"
#include "embchord/errors.hpp"
#include "embchord/ids.hpp"

namespace embchord {

enum class group_policy : std::uint8_t { open = 0, secured = 1 };

/// Epoch-versioned symmetric group key. Only key_id ever travels in clear;
/// material moves exclusively inside per-member sealed blobs.
struct GroupKey {
    std::uint32_t key_id = 0;
    crypto::key256 material{};

    friend bool operator==(const GroupKey&, const GroupKey&) = default;
};

/// Admission token for a secured group: a MAC over (peer, group, issued_at)
/// keyed by the group's admission secret, handed out by the group creator.
/// The authenticator doubles as the pairwise key protecting key delivery to
/// that member, so it never travels on the wire itself.
struct Credential {
    PeerId peer;
    GroupId group;
    std::uint64_t issued_at_ms = 0;
    crypto::mac256 authenticator{};

    friend bool operator==(const Credential&, const Credential&) = default;
};

inline crypto::mac256 credential_mac(const crypto::key256& admission_secret, const PeerId& peer,
                                     const GroupId& group, std::uint64_t issued_at_ms) {
    byte_writer w;
    w.bytes(to_bytes("cred"));
    w.len8_bytes(peer.id.to_bytes_be());
    w.len8_bytes(group.id.to_bytes_be());
    w.u64(issued_at_ms);
    return crypto::hmac_sha256(admission_secret, w.data());
}

inline Credential issue_credential(const crypto::key256& admission_secret, const PeerId& peer,
                                   const GroupId& group, std::uint64_t issued_at_ms) {
    return Credential{peer, group, issued_at_ms,
                      credential_mac(admission_secret, peer, group, issued_at_ms)};
}

inline bool verify_credential(const crypto::key256& admission_secret, const Credential& cred) {
    return credential_mac(admission_secret, cred.peer, cred.group, cred.issued_at_ms) ==
           cred.authenticator;
}

/// Join-request proof: demonstrates possession of the credential without
/// revealing the authenticator to on-path observers.
inline crypto::mac256 credential_proof(const Credential& cred) {
    byte_writer w;
    w.bytes(to_bytes("join-proof"));
    w.len8_bytes(cred.peer.id.to_bytes_be());
    w.len8_bytes(cred.group.id.to_bytes_be());
    w.u64(cred.issued_at_ms);
    return crypto::hmac_sha256(cred.authenticator, w.data());
}

/// Group ciphertext unit. Wire layout: key_id u32, nonce 12 bytes,
/// u32 ciphertext length, ciphertext, 16-byte tag.
struct EncryptedPayload {
    std::uint32_t key_id = 0;
    crypto::nonce96 nonce{};
    byte_buffer ciphertext;
    crypto::tag128 tag{};

    friend bool operator==(const EncryptedPayload&, const EncryptedPayload&) = default;
};

inline byte_buffer encode_encrypted_payload(const EncryptedPayload& p) {
    byte_writer w;
    w.u32(p.key_id);
    w.bytes(byte_view(p.nonce));
    w.u32(static_cast<std::uint32_t>(p.ciphertext.size()));
    w.bytes(p.ciphertext);
    w.bytes(byte_view(p.tag));
    return w.take();
}

inline EncryptedPayload decode_encrypted_payload(byte_view frame) {
    byte_reader r(frame);
    EncryptedPayload p;
    p.key_id = r.u32();
    auto nonce = r.bytes(p.nonce.size());
    std::copy(nonce.begin(), nonce.end(), p.nonce.begin());
    p.ciphertext = r.bytes_copy(r.u32());
    auto tag = r.bytes(p.tag.size());
    std::copy(tag.begin(), tag.end(), p.tag.begin());
    if (!r.at_end()) throw malformed_error("trailing bytes after encrypted payload", r.offset());
    return p;
}

/// Nonces are (sender id low 32 bits ‖ per-sender 64-bit counter): unique
/// per sender as long as counters never repeat within a key epoch.
inline crypto::nonce96 make_nonce(const PeerId& sender, std::uint64_t counter) {
    crypto::nonce96 n{};
    std::uint32_t low = static_cast<std::uint32_t>(sender.id.low64());
    for (int i = 0; i < 4; ++i) n[i] = static_cast<std::uint8_t>(low >> (24 - 8 * i));
    for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
    return n;
}

inline EncryptedPayload group_encrypt(const GroupKey& key, byte_view plaintext,
                                      const crypto::nonce96& nonce) {
    EncryptedPayload p;
    p.key_id = key.key_id;
    p.nonce = nonce;
    byte_writer aad;
    aad.u32(key.key_id);
    p.ciphertext = crypto::aead_seal(key.material, nonce, aad.data(), plaintext, p.tag);
    return p;
}

/// Chain of group keys held by one member. The current epoch encrypts;
/// superseded epochs stay decrypt-only until their grace deadline so
/// in-flight multicast survives a rotation.
class GroupKeyring {
public:
    bool empty() const noexcept { return keys_.empty(); }

    const GroupKey* current() const {
        auto it = keys_.find(current_id_);
        return it == keys_.end() ? nullptr : &it->second;
    }

    /// Installs a newer epoch; the previous current key is retired with a
    /// decrypt-only grace window. Stale installs are ignored.
    void install(const GroupKey& key, std::uint64_t now_ms, std::uint64_t grace_ms) {
        if (!keys_.empty() && key.key_id <= current_id_) return;
        if (!keys_.empty()) retire_deadline_[current_id_] = now_ms + grace_ms;
        keys_[key.key_id] = key;
        current_id_ = key.key_id;
    }

    /// Key usable for decrypting `key_id` at `now_ms`: the current key, or
    /// a retired one still inside its grace window.
    const GroupKey* for_decrypt(std::uint32_t key_id, std::uint64_t now_ms) const {
        auto it = keys_.find(key_id);
        if (it == keys_.end()) return nullptr;
        if (key_id == current_id_) return &it->second;
        auto dl = retire_deadline_.find(key_id);
        if (dl != retire_deadline_.end() && now_ms <= dl->second) return &it->second;
        return nullptr;
    }

    result<byte_buffer> decrypt(const EncryptedPayload& p, std::uint64_t now_ms) const {
        const GroupKey* key = for_decrypt(p.key_id, now_ms);
        if (!key) return result<byte_buffer>::failure(errc::stale_key);
        byte_writer aad;
        aad.u32(p.key_id);
        auto plain = crypto::aead_open(key->material, p.nonce, aad.data(), p.ciphertext, p.tag);
        if (!plain) return result<byte_buffer>::failure(errc::tampered);
        return result<byte_buffer>::success(std::move(*plain));
    }

    std::uint32_t current_id() const noexcept { return current_id_; }

private:
    std::map<std::uint32_t, GroupKey> keys_;
    std::map<std::uint32_t, std::uint64_t> retire_deadline_;
    std::uint32_t current_id_ = 0;
};

} // namespace embchord
