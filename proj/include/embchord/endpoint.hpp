#pragma once

#include <compare>
#include <cstdint>
#include <string>

#include "embchord/errors.hpp"

namespace embchord {

/// Transport families an attachment point can belong to. Mem and NarrowSim
/// are simulated segments; Tcp is the thin real-socket adapter.
enum class transport_kind : std::uint8_t { mem = 0, tcp = 1, narrow_sim = 2 };

inline const char* transport_kind_name(transport_kind k) {
    switch (k) {
        case transport_kind::mem: return "mem";
        case transport_kind::tcp: return "tcp";
        case transport_kind::narrow_sim: return "narrowsim";
    }
    return "?";
}

/// One attachment point of one peer: (kind, address) is unique across the
/// whole network. Simulated addresses are "segment/label"; Tcp addresses
/// are "host:port".
struct EndpointAddress {
    transport_kind kind = transport_kind::mem;
    std::string address;

    friend bool operator==(const EndpointAddress&, const EndpointAddress&) = default;
    friend std::strong_ordering operator<=>(const EndpointAddress&, const EndpointAddress&) =
        default;

    /// Segment name for simulated kinds (the part before '/').
    std::string segment() const {
        auto slash = address.find('/');
        return slash == std::string::npos ? address : address.substr(0, slash);
    }

    std::string to_string() const {
        return std::string(transport_kind_name(kind)) + ":" + address;
    }
};

/// Performance envelope of one network segment.
struct LinkProfile {
    std::uint64_t bandwidth_bps = 125000; // bytes per second
    std::uint64_t latency_ms = 1;         // one-way
    std::uint32_t mtu = 1500;             // bytes per frame
    double loss_rate = 0.0;               // per-fragment drop probability

    void validate() const {
        if (mtu < 32) throw config_error("link MTU must be at least 32 bytes");
        if (bandwidth_bps == 0) throw config_error("link bandwidth must be positive");
        if (loss_rate < 0.0 || loss_rate > 1.0)
            throw config_error("loss rate must lie in [0, 1]");
    }
};

/// 6LoWPAN-class narrowband profile: tiny frames, tens of kbit/s.
inline LinkProfile narrowband_lowpan_profile() {
    return LinkProfile{.bandwidth_bps = 2500, .latency_ms = 15, .mtu = 127, .loss_rate = 0.0};
}

/// RFCOMM-class profile: serial-emulation rates, kilobyte frames.
inline LinkProfile narrowband_rfcomm_profile() {
    return LinkProfile{.bandwidth_bps = 25000, .latency_ms = 30, .mtu = 1024, .loss_rate = 0.0};
}

} // namespace embchord
