#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embchord/endpoint.hpp"
#include "embchord/ids.hpp"

namespace embchord {

/// One step of a source route: the peer to hand the envelope to and the
/// endpoint to address it at. The last hop is the destination itself.
struct RouteHop {
    PeerId peer;
    EndpointAddress endpoint;
    std::string segment;

    friend bool operator==(const RouteHop&, const RouteHop&) = default;
};

/// Resolved multi-segment route. `cost` counts relays (bridge peers
/// traversed); `segment_path` starts at the sender's segment and ends at
/// the destination's.
struct RouteEntry {
    PeerId destination;
    EndpointAddress next_hop;
    std::vector<std::string> segment_path;
    std::size_t cost = 0;
    std::vector<RouteHop> hops; // relays in order, then the destination
};

/// A peer's local view of who is attached where, assembled from its own
/// attachments plus every peer advertisement and descriptor it has seen.
class ConnectivityMap {
public:
    void learn(const PeerId& peer, std::vector<EndpointAddress> endpoints) {
        if (endpoints.empty()) return;
        auto& slot = attachments_[peer];
        for (auto& ep : endpoints)
            if (std::find(slot.begin(), slot.end(), ep) == slot.end()) slot.push_back(ep);
        std::sort(slot.begin(), slot.end());
    }

    void forget(const PeerId& peer) { attachments_.erase(peer); }

    const std::vector<EndpointAddress>* endpoints_of(const PeerId& peer) const {
        auto it = attachments_.find(peer);
        return it == attachments_.end() ? nullptr : &it->second;
    }

    bool knows(const PeerId& peer) const { return attachments_.contains(peer); }

    /// Peers attached to two or more distinct segments — the relay points.
    std::vector<PeerId> bridges() const {
        std::vector<PeerId> out;
        for (const auto& [peer, eps] : attachments_)
            if (segments_of(eps).size() >= 2) out.push_back(peer);
        return out;
    }

    const std::map<PeerId, std::vector<EndpointAddress>>& all() const { return attachments_; }

    static std::set<std::string> segments_of(const std::vector<EndpointAddress>& eps) {
        std::set<std::string> segs;
        for (const auto& ep : eps)
            if (ep.kind != transport_kind::tcp) segs.insert(ep.segment());
        return segs;
    }

private:
    std::map<PeerId, std::vector<EndpointAddress>> attachments_;
};

namespace detail {

/// Smallest-address endpoint of `peer` on `segment`; endpoints are kept
/// sorted by learn(), so the first match wins.
inline std::optional<EndpointAddress> endpoint_on(const ConnectivityMap& conn, const PeerId& peer,
                                                  const std::string& segment) {
    const auto* eps = conn.endpoints_of(peer);
    if (!eps) return std::nullopt;
    for (const auto& ep : *eps)
        if (ep.kind != transport_kind::tcp && ep.segment() == segment) return ep;
    return std::nullopt;
}

} // namespace detail

/// Minimum-relay path over the segment graph (segments as vertices, bridge
/// peers as edges). Equal-cost ties break on the lexicographically smallest
/// segment_path, then on the smallest bridge ids, so routes are stable
/// across runs. Returns nullopt when no path exists.
inline std::optional<RouteEntry> resolve_route(const ConnectivityMap& conn, const PeerId& src,
                                               const PeerId& dst) {
    const auto* src_eps = conn.endpoints_of(src);
    const auto* dst_eps = conn.endpoints_of(dst);
    if (!src_eps || !dst_eps) return std::nullopt;
    auto src_segs = ConnectivityMap::segments_of(*src_eps);
    auto dst_segs = ConnectivityMap::segments_of(*dst_eps);
    if (src_segs.empty() || dst_segs.empty()) return std::nullopt;

    struct state {
        std::size_t cost;
        std::vector<std::string> path;
        PeerId via_bridge;      // bridge that entered this segment (unset on source segments)
        std::string from;       // previous segment
        bool settled = false;
    };
    std::map<std::string, state> best;

    using qitem = std::pair<std::pair<std::size_t, std::vector<std::string>>, std::string>;
    std::set<qitem> queue; // ordered by (cost, path) then segment

    for (const auto& s : src_segs) {
        best[s] = state{0, {s}, {}, {}, false};
        queue.insert({{0, {s}}, s});
    }

    // bridge edges grouped per segment, bridges visited in id order
    std::vector<std::pair<PeerId, std::set<std::string>>> bridge_segs;
    for (const auto& b : conn.bridges())
        bridge_segs.emplace_back(b, ConnectivityMap::segments_of(*conn.endpoints_of(b)));

    std::optional<std::string> terminal;
    while (!queue.empty()) {
        auto [key, seg] = *queue.begin();
        queue.erase(queue.begin());
        auto& st = best[seg];
        if (st.settled) continue;
        if (key.first != st.cost || key.second != st.path) continue; // stale
        st.settled = true;
        if (dst_segs.contains(seg)) {
            terminal = seg;
            break;
        }
        for (const auto& [bridge, segs] : bridge_segs) {
            if (!segs.contains(seg)) continue;
            for (const auto& next : segs) {
                if (next == seg) continue;
                std::size_t ncost = st.cost + 1;
                auto npath = st.path;
                npath.push_back(next);
                auto it = best.find(next);
                bool better = it == best.end();
                if (!better && !it->second.settled) {
                    auto& cur = it->second;
                    auto cand = std::tie(ncost, npath, bridge);
                    auto have = std::tie(cur.cost, cur.path, cur.via_bridge);
                    better = cand < have;
                }
                if (better) {
                    best[next] = state{ncost, npath, bridge, seg, false};
                    queue.insert({{ncost, npath}, next});
                }
            }
        }
    }
    if (!terminal) return std::nullopt;

    // Unwind the parent chain into the relay hop list.
    std::vector<RouteHop> relays;
    std::string seg = *terminal;
    while (true) {
        const auto& st = best[seg];
        if (st.path.size() == 1) break;
        auto ep = detail::endpoint_on(conn, st.via_bridge, st.from);
        if (!ep) return std::nullopt; // inconsistent map
        relays.push_back(RouteHop{st.via_bridge, *ep, st.from});
        seg = st.from;
    }
    std::reverse(relays.begin(), relays.end());

    auto dst_ep = detail::endpoint_on(conn, dst, *terminal);
    if (!dst_ep) return std::nullopt;
    relays.push_back(RouteHop{dst, *dst_ep, *terminal});

    RouteEntry route;
    route.destination = dst;
    route.hops = std::move(relays);
    route.next_hop = route.hops.front().endpoint;
    route.segment_path = best[*terminal].path;
    route.cost = route.segment_path.size() - 1;
    return route;
}

} // namespace embchord
