#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace embchord {

/// Thrown for invalid static configuration (bad ring width, duplicate
/// registrations, malformed scenario files, ...).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a wire buffer cannot be decoded. Carries the byte offset
/// at which decoding failed.
class malformed_error : public std::runtime_error {
public:
    malformed_error(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Outcome codes for asynchronous operations completed via callback.
enum class errc : std::uint8_t {
    ok = 0,
    timeout,            // lookup / request deadline expired
    unreachable,        // no route to destination
    unreachable_ring,   // lookup exhausted all retries
    not_found,          // no reachable replica answered
    unauthorized,       // credential or membership check failed
    stale_key,          // ciphertext under an unknown key epoch
    tampered,           // AEAD authentication failed
    binding_failed,     // pipe advertisement unresolvable or expired
    route_stale,        // relay lacked the next segment
    rejected,           // precondition failed at the remote side
};

inline const char* errc_name(errc e) {
    switch (e) {
        case errc::ok: return "ok";
        case errc::timeout: return "timeout";
        case errc::unreachable: return "unreachable";
        case errc::unreachable_ring: return "unreachable_ring";
        case errc::not_found: return "not_found";
        case errc::unauthorized: return "unauthorized";
        case errc::stale_key: return "stale_key";
        case errc::tampered: return "tampered";
        case errc::binding_failed: return "binding_failed";
        case errc::route_stale: return "route_stale";
        case errc::rejected: return "rejected";
    }
    return "unknown";
}

/// Minimal result wrapper for callback-style completion.
template <typename T>
struct result {
    errc err = errc::ok;
    T value{};

    bool ok() const noexcept { return err == errc::ok; }
    static result success(T v) { return result{errc::ok, std::move(v)}; }
    static result failure(errc e) { return result{e, T{}}; }
};

template <>
struct result<void> {
    errc err = errc::ok;
    bool ok() const noexcept { return err == errc::ok; }
    static result success() { return result{errc::ok}; }
    static result failure(errc e) { return result{e}; }
};

} // namespace embchord
