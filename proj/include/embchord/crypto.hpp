#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "embchord/bytes.hpp"

namespace embchord::crypto {

using digest160 = std::array<std::uint8_t, 20>;
using mac256 = std::array<std::uint8_t, 32>;
using key256 = std::array<std::uint8_t, 32>;
using nonce96 = std::array<std::uint8_t, 12>;
using tag128 = std::array<std::uint8_t, 16>;

/// 160-bit digest used as the key-space mapper (not a security boundary).
inline digest160 sha1(byte_view data) {
    digest160 out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha1(), nullptr) != 1 ||
        len != out.size())
        throw std::runtime_error("SHA-1 digest failed");
    return out;
}

inline mac256 hmac_sha256(byte_view key, byte_view data) {
    mac256 out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
             out.data(), &len) == nullptr ||
        len != out.size())
        throw std::runtime_error("HMAC-SHA256 failed");
    return out;
}

namespace detail {

class cipher_ctx {
public:
    cipher_ctx() : ctx_(EVP_CIPHER_CTX_new()) {
        if (!ctx_) throw std::runtime_error("EVP_CIPHER_CTX_new failed");
    }
    ~cipher_ctx() { EVP_CIPHER_CTX_free(ctx_); }
    cipher_ctx(const cipher_ctx&) = delete;
    cipher_ctx& operator=(const cipher_ctx&) = delete;
    EVP_CIPHER_CTX* get() noexcept { return ctx_; }

private:
    EVP_CIPHER_CTX* ctx_;
};

} // namespace detail

/// Authenticated encryption: 256-bit key, 96-bit nonce, 128-bit tag
/// (ChaCha20-Poly1305). Returns ciphertext; tag written separately.
inline byte_buffer aead_seal(const key256& key, const nonce96& nonce, byte_view aad,
                             byte_view plaintext, tag128& tag_out) {
    detail::cipher_ctx ctx;
    if (EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(),
                           nonce.data()) != 1)
        throw std::runtime_error("AEAD encrypt init failed");
    int len = 0;
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw std::runtime_error("AEAD aad failed");
    byte_buffer ct(plaintext.size());
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), ct.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw std::runtime_error("AEAD encrypt failed");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), ct.data() + len, &fin) != 1)
        throw std::runtime_error("AEAD finalize failed");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, static_cast<int>(tag_out.size()),
                            tag_out.data()) != 1)
        throw std::runtime_error("AEAD tag extraction failed");
    return ct;
}

/// Decrypts and authenticates; nullopt on any tag mismatch (atomic failure,
/// no partial plaintext escapes).
inline std::optional<byte_buffer> aead_open(const key256& key, const nonce96& nonce, byte_view aad,
                                            byte_view ciphertext, const tag128& tag) {
    detail::cipher_ctx ctx;
    if (EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(),
                           nonce.data()) != 1)
        throw std::runtime_error("AEAD decrypt init failed");
    int len = 0;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        throw std::runtime_error("AEAD aad failed");
    byte_buffer pt(ciphertext.size());
    if (!ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.get(), pt.data(), &len, ciphertext.data(),
                          static_cast<int>(ciphertext.size())) != 1)
        return std::nullopt;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, static_cast<int>(tag.size()),
                            const_cast<std::uint8_t*>(tag.data())) != 1)
        throw std::runtime_error("AEAD tag set failed");
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), pt.data() + len, &fin) != 1) return std::nullopt;
    return pt;
}

} // namespace embchord::crypto
