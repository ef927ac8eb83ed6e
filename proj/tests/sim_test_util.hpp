#pragma once

// Shared scaffolding for simulation-backed tests: ring construction and
// oracle comparison helpers.

#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "embchord/sim/harness.hpp"
#include "embchord/sim/oracle.hpp"

namespace testutil {

using namespace embchord;

inline constexpr unsigned kBits = 16;

/// Creates `n` peers on one Mem segment, forms the root ring through the
/// first node, staggering joins one stabilization round apart, then runs
/// 2*m extra rounds so fingers settle.
struct TestRing {
    GroupId root;
    std::vector<Node*> members;

    static TestRing build(sim::Simulation& sim, int n, const std::string& segment = "lan",
                          unsigned settle_rounds = 2 * kBits) {
        TestRing ring;
        if (!sim.network().has_segment(segment)) sim.add_segment(segment, LinkProfile{});
        for (int i = 0; i < n; ++i) {
            std::string label = sim.fresh_label(segment + "n" + std::to_string(i));
            Node& node = sim.add_node(label);
            node.register_transport({transport_kind::mem, segment + "/" + label}, LinkProfile{});
            ring.members.push_back(&node);
        }
        ring.root = ring.members[0]->create_root_group("net");
        int joined = 1;
        for (int i = 1; i < n; ++i) {
            ring.members[i]->learn_root_group("net");
            ring.members[i]->join_group(
                ring.root, std::nullopt,
                [&joined](result<void> r) {
                    REQUIRE(r.ok());
                    joined++;
                },
                ring.members[0]->self_descriptor());
            sim.run_rounds(1);
        }
        REQUIRE(sim.await([&joined, n]() { return joined == n; }, 60000));
        sim.run_rounds(settle_rounds);
        return ring;
    }

    sim::RingOracle oracle() const {
        std::vector<NodeId> ids;
        for (const auto* n : members)
            if (!n->crashed()) ids.push_back(n->id().id);
        return sim::RingOracle::from_ids(std::move(ids));
    }
};

/// Runs the loop until the callback-set flag flips; REQUIREs success.
inline void await_flag(sim::Simulation& sim, bool& flag, std::uint64_t timeout_ms = 30000) {
    REQUIRE(sim.await([&flag]() { return flag; }, timeout_ms));
}

inline DhtRecord make_record(sim::Simulation& sim, const PeerId& publisher, const NodeId& key,
                             const std::string& body) {
    DhtRecord rec;
    rec.key = key;
    rec.payload = to_bytes(body);
    rec.publisher = publisher;
    rec.expires_at_ms = sim.now() + 3600000;
    return rec;
}

} // namespace testutil
