#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <random>

#include "embchord/routing.hpp"

using namespace embchord;

namespace {

constexpr unsigned kBits = 16;

PeerId peer(const std::string& label) { return peer_id_from_name(label, kBits); }

EndpointAddress mem(const std::string& seg, const std::string& label) {
    return {transport_kind::mem, seg + "/" + label};
}

/// Breadth-first oracle over the segment graph: fewest bridge traversals
/// from any of src's segments to any of dst's. Independent of resolve_route.
std::optional<std::size_t> bfs_cost(const ConnectivityMap& conn, const PeerId& src,
                                    const PeerId& dst) {
    const auto* se = conn.endpoints_of(src);
    const auto* de = conn.endpoints_of(dst);
    if (!se || !de) return std::nullopt;
    auto src_segs = ConnectivityMap::segments_of(*se);
    auto dst_segs = ConnectivityMap::segments_of(*de);
    std::map<std::string, std::size_t> dist;
    std::deque<std::string> frontier;
    for (const auto& s : src_segs) {
        dist[s] = 0;
        frontier.push_back(s);
    }
    while (!frontier.empty()) {
        auto seg = frontier.front();
        frontier.pop_front();
        if (dst_segs.contains(seg)) return dist[seg];
        for (const auto& b : conn.bridges()) {
            auto segs = ConnectivityMap::segments_of(*conn.endpoints_of(b));
            if (!segs.contains(seg)) continue;
            for (const auto& next : segs)
                if (!dist.contains(next)) {
                    dist[next] = dist[seg] + 1;
                    frontier.push_back(next);
                }
        }
    }
    return std::nullopt;
}

/// Structural validity: hops walk existing attachments segment by segment.
void check_route_consistency(const ConnectivityMap& conn, const PeerId& src,
                             const RouteEntry& route) {
    REQUIRE(route.segment_path.size() == route.cost + 1);
    REQUIRE(route.hops.size() == route.cost + 1);
    // loop-free
    std::set<std::string> seen(route.segment_path.begin(), route.segment_path.end());
    CHECK(seen.size() == route.segment_path.size());
    // source must sit on the first segment
    CHECK(ConnectivityMap::segments_of(*conn.endpoints_of(src)).contains(route.segment_path[0]));
    for (std::size_t i = 0; i < route.hops.size(); ++i) {
        const auto& hop = route.hops[i];
        CHECK(hop.segment == route.segment_path[i]);
        auto segs = ConnectivityMap::segments_of(*conn.endpoints_of(hop.peer));
        CHECK(segs.contains(route.segment_path[i]));
        if (i + 1 < route.hops.size()) CHECK(segs.contains(route.segment_path[i + 1]));
    }
    CHECK(route.hops.back().peer == route.destination);
    CHECK(route.next_hop == route.hops.front().endpoint);
}

} // namespace

TEST_CASE("same segment resolves to a direct zero-relay route") {
    ConnectivityMap conn;
    conn.learn(peer("a"), {mem("s1", "a")});
    conn.learn(peer("b"), {mem("s1", "b")});
    auto route = resolve_route(conn, peer("a"), peer("b"));
    REQUIRE(route.has_value());
    CHECK(route->cost == 0);
    CHECK(route->segment_path == std::vector<std::string>{"s1"});
    CHECK(route->next_hop == mem("s1", "b"));
}

TEST_CASE("one bridge connects two segments at cost 1") {
    ConnectivityMap conn;
    conn.learn(peer("a"), {mem("s1", "a")});
    conn.learn(peer("b"), {mem("s2", "b")});
    conn.learn(peer("r"), {mem("s1", "r"), mem("s2", "r")});
    auto route = resolve_route(conn, peer("a"), peer("b"));
    REQUIRE(route.has_value());
    CHECK(route->cost == 1);
    CHECK(route->segment_path == std::vector<std::string>{"s1", "s2"});
    REQUIRE(route->hops.size() == 2);
    CHECK(route->hops[0].peer == peer("r"));
    CHECK(route->hops[1].peer == peer("b"));
    check_route_consistency(conn, peer("a"), *route);
}

TEST_CASE("three segments in a chain need two relays") {
    ConnectivityMap conn;
    conn.learn(peer("a"), {mem("s1", "a")});
    conn.learn(peer("b"), {mem("s3", "b")});
    conn.learn(peer("r1"), {mem("s1", "r1"), mem("s2", "r1")});
    conn.learn(peer("r2"), {mem("s2", "r2"), mem("s3", "r2")});
    auto route = resolve_route(conn, peer("a"), peer("b"));
    REQUIRE(route.has_value());
    CHECK(route->cost == 2);
    CHECK(route->segment_path == std::vector<std::string>{"s1", "s2", "s3"});
    check_route_consistency(conn, peer("a"), *route);
}

TEST_CASE("no connecting bridge yields no route") {
    ConnectivityMap conn;
    conn.learn(peer("a"), {mem("s1", "a")});
    conn.learn(peer("b"), {mem("s2", "b")});
    CHECK_FALSE(resolve_route(conn, peer("a"), peer("b")).has_value());
    CHECK_FALSE(resolve_route(conn, peer("a"), peer("ghost")).has_value());
}

TEST_CASE("equal-cost ties break on the smallest segment path") {
    ConnectivityMap conn;
    conn.learn(peer("a"), {mem("s1", "a")});
    conn.learn(peer("b"), {mem("s4", "b")});
    // two parallel two-hop paths: s1-s2-s4 and s1-s3-s4
    conn.learn(peer("r1"), {mem("s1", "r1"), mem("s2", "r1")});
    conn.learn(peer("r2"), {mem("s2", "r2"), mem("s4", "r2")});
    conn.learn(peer("r3"), {mem("s1", "r3"), mem("s3", "r3")});
    conn.learn(peer("r4"), {mem("s3", "r4"), mem("s4", "r4")});
    auto route = resolve_route(conn, peer("a"), peer("b"));
    REQUIRE(route.has_value());
    CHECK(route->segment_path == std::vector<std::string>{"s1", "s2", "s4"});
    // stable across calls
    auto again = resolve_route(conn, peer("a"), peer("b"));
    REQUIRE(again.has_value());
    CHECK(again->segment_path == route->segment_path);
    CHECK(again->hops[0].peer == route->hops[0].peer);
}

TEST_CASE("route cost matches the BFS oracle on random connectivity graphs") {
    std::mt19937_64 rng(777);
    for (int trial = 0; trial < 120; ++trial) {
        ConnectivityMap conn;
        std::uniform_int_distribution<int> seg_d(1, 12), peer_d(2, 40);
        int nsegs = seg_d(rng);
        int npeers = peer_d(rng);
        std::vector<std::string> segs;
        for (int s = 0; s < nsegs; ++s) segs.push_back("g" + std::to_string(s));
        std::vector<PeerId> peers;
        for (int p = 0; p < npeers; ++p) {
            std::string label = "t" + std::to_string(trial) + "p" + std::to_string(p);
            PeerId id = peer(label);
            peers.push_back(id);
            int attach_count = 1 + static_cast<int>(rng() % 3);
            std::vector<EndpointAddress> eps;
            for (int a = 0; a < attach_count; ++a)
                eps.push_back(mem(segs[rng() % segs.size()], label + "-" + std::to_string(a)));
            conn.learn(id, eps);
        }
        const PeerId& src = peers[rng() % peers.size()];
        const PeerId& dst = peers[rng() % peers.size()];
        auto route = resolve_route(conn, src, dst);
        auto oracle = bfs_cost(conn, src, dst);
        INFO("trial " << trial);
        REQUIRE(route.has_value() == oracle.has_value());
        if (route) {
            CHECK(route->cost == *oracle);
            check_route_consistency(conn, src, *route);
        }
    }
}
