#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embchord/endpoint.hpp"
#include "embchord/ids.hpp"
#include "embchord/link.hpp"
#include "embchord/routing.hpp"
#include "embchord/sim/clock.hpp"
#include "embchord/sim/metrics.hpp"
#include "embchord/sim/rng.hpp"

namespace embchord::sim {

/// Simulated L2 metadata accompanying each transmission. `remaining` is
/// the source route still ahead of the frame; `reverse` accumulates a
/// ready-to-use return route hop by hop. `trace_*` identify the envelope
/// for instrumentation only; protocol logic never reads them.
struct TxMeta {
    std::vector<RouteHop> remaining;
    std::vector<RouteHop> reverse;
    NodeId trace_src;
    std::uint64_t trace_corr = 0;
    std::uint8_t trace_kind = 0;
};

/// The simulated multi-segment network: knows every segment's profile and
/// every attachment, applies the per-link delay and loss model, and hands
/// arriving fragments to the owning peer's handler.
class SimNetwork {
public:
    /// (receiving endpoint, sending endpoint, fragment, metadata)
    using frame_handler =
        std::function<void(const EndpointAddress&, const EndpointAddress&, Fragment, TxMeta)>;
    /// promiscuous observer: (segment, from, to, fragment bytes)
    using tap = std::function<void(const std::string&, const EndpointAddress&,
                                   const EndpointAddress&, const byte_buffer&)>;
    /// invoked when a frame is dropped: (reason, meta)
    using drop_hook = std::function<void(const std::string&, const TxMeta&)>;

    SimNetwork(EventLoop& loop, Rng& rng, MetricsReport& metrics)
        : loop_(loop), rng_(rng), metrics_(metrics) {}

    void add_segment(const std::string& name, const LinkProfile& profile) {
        profile.validate();
        auto [it, fresh] = segments_.emplace(name, profile);
        if (!fresh) throw config_error("segment already declared: " + name);
    }

    bool has_segment(const std::string& name) const { return segments_.contains(name); }

    const LinkProfile& segment_profile(const std::string& name) const {
        auto it = segments_.find(name);
        if (it == segments_.end()) throw config_error("unknown segment: " + name);
        return it->second;
    }

    void attach(const PeerId& owner, const EndpointAddress& ep, frame_handler handler) {
        if (ep.kind == transport_kind::tcp)
            throw config_error("tcp endpoints are not simulated segments");
        if (!segments_.contains(ep.segment()))
            throw config_error("endpoint references undeclared segment: " + ep.segment());
        auto [it, fresh] = attachments_.emplace(ep, attachment{owner, std::move(handler)});
        if (!fresh) throw config_error("endpoint already registered: " + ep.to_string());
    }

    void detach_all(const PeerId& owner) {
        for (auto it = attachments_.begin(); it != attachments_.end();)
            it = (it->second.owner == owner) ? attachments_.erase(it) : ++it;
    }

    bool attached(const EndpointAddress& ep) const { return attachments_.contains(ep); }

    void add_tap(tap t) { taps_.push_back(std::move(t)); }
    void set_drop_hook(drop_hook h) { drop_hook_ = std::move(h); }

    /// Optional deterministic interception: return true to swallow a frame
    /// (used by tests that need scripted drops rather than random loss).
    using interceptor = std::function<bool(const EndpointAddress& from, const EndpointAddress& to,
                                           const TxMeta&)>;
    void set_interceptor(interceptor fn) { interceptor_ = std::move(fn); }

    /// Fragments an encoded envelope for the segment shared by `from` and
    /// `to`, then schedules per-fragment arrivals with the link's latency
    /// plus cumulative serialization delay. Fragment i of an f-fragment
    /// burst lands at now + latency + ceil(bytes_0..i / bandwidth), so the
    /// last arrival matches latency + total_bytes/bandwidth exactly.
    void transmit(const EndpointAddress& from, const EndpointAddress& to, byte_view envelope_bytes,
                  std::uint32_t envelope_id, TxMeta meta) {
        const std::string seg = to.segment();
        if (from.segment() != seg)
            throw config_error("transmit endpoints on different segments: " + from.to_string() +
                               " -> " + to.to_string());
        const LinkProfile& link = segment_profile(seg);
        auto fragments = fragment_envelope(envelope_bytes, envelope_id, link.mtu);

        std::uint64_t cumulative_bytes = 0;
        for (auto& frag : fragments) {
            byte_buffer wire = encode_fragment(frag);
            cumulative_bytes += wire.size();
            metrics_.count("segment_bytes." + seg, wire.size());
            metrics_.count("frames_sent");
            for (auto& t : taps_) t(seg, from, to, wire);
            if (interceptor_ && interceptor_(from, to, meta)) {
                drop("frag_intercepted", meta);
                continue;
            }
            if (rng_.chance(link.loss_rate)) {
                drop("frag_lost", meta);
                continue;
            }
            std::uint64_t serialize_ms = (cumulative_bytes * 1000 + link.bandwidth_bps - 1) /
                                         link.bandwidth_bps;
            std::uint64_t arrival = loop_.now() + link.latency_ms + serialize_ms;
            loop_.schedule_at(arrival, [this, from, to, f = std::move(frag), meta]() mutable {
                deliver(from, to, std::move(f), std::move(meta));
            });
        }
    }

private:
    struct attachment {
        PeerId owner;
        frame_handler handler;
    };

    void deliver(const EndpointAddress& from, const EndpointAddress& to, Fragment frag,
                 TxMeta meta) {
        auto it = attachments_.find(to);
        if (it == attachments_.end()) {
            drop("frag_dead_endpoint", meta);
            return;
        }
        it->second.handler(to, from, std::move(frag), std::move(meta));
    }

    void drop(const std::string& reason, const TxMeta& meta) {
        metrics_.count(reason);
        if (drop_hook_) drop_hook_(reason, meta);
    }

    EventLoop& loop_;
    Rng& rng_;
    MetricsReport& metrics_;
    std::map<std::string, LinkProfile> segments_;
    std::map<EndpointAddress, attachment> attachments_;
    std::vector<tap> taps_;
    drop_hook drop_hook_;
    interceptor interceptor_;
};

} // namespace embchord::sim
