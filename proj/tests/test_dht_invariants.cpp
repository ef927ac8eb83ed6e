#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sim_test_util.hpp"

using namespace embchord;
using testutil::TestRing;
using testutil::kBits;

TEST_CASE("expired records are rejected on put and never returned by get") {
    sim::Simulation sim(71, kBits);
    auto ring = TestRing::build(sim, 4);

    // a put of an already-expired record is refused outright
    DhtRecord dead = testutil::make_record(sim, ring.members[0]->id(),
                                           NodeId::from_u64(0x42, kBits), "too-late");
    dead.expires_at_ms = sim.now();
    std::optional<errc> err;
    ring.members[0]->dht_put(ring.root, dead, [&](result<void> r) { err = r.err; });
    REQUIRE(sim.await([&]() { return err.has_value(); }, 5000));
    CHECK(*err == errc::rejected);

    // a record that expires later vanishes from reads after its deadline
    DhtRecord shortlived = testutil::make_record(sim, ring.members[0]->id(),
                                                 NodeId::from_u64(0x43, kBits), "brief");
    shortlived.expires_at_ms = sim.now() + 4000;
    bool put_ok = false;
    ring.members[0]->dht_put(ring.root, shortlived, [&](result<void> r) { put_ok = r.ok(); });
    testutil::await_flag(sim, put_ok);

    std::optional<std::size_t> live;
    ring.members[1]->dht_get(ring.root, shortlived.key, [&](result<std::vector<DhtRecord>> r) {
        REQUIRE(r.ok());
        live = r.value.size();
    });
    REQUIRE(sim.await([&]() { return live.has_value(); }, 10000));
    CHECK(*live == 1);

    sim.run_for(5000); // past the expiry
    std::optional<std::size_t> after;
    ring.members[1]->dht_get(ring.root, shortlived.key, [&](result<std::vector<DhtRecord>> r) {
        REQUIRE(r.ok());
        after = r.value.size();
    });
    REQUIRE(sim.await([&]() { return after.has_value(); }, 10000));
    CHECK(*after == 0);
}

TEST_CASE("get of a never-published key returns the empty set, not an error") {
    sim::Simulation sim(72, kBits);
    auto ring = TestRing::build(sim, 4);
    std::optional<result<std::vector<DhtRecord>>> out;
    ring.members[2]->dht_get(ring.root, NodeId::from_u64(0x7777, kBits),
                             [&](result<std::vector<DhtRecord>> r) { out = std::move(r); });
    REQUIRE(sim.await([&]() { return out.has_value(); }, 10000));
    CHECK(out->ok());
    CHECK(out->value.empty());
}

TEST_CASE("responsibility partition: every key has exactly one owner after quiescence") {
    sim::Simulation sim(73, kBits);
    auto ring = TestRing::build(sim, 16);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        NodeId key = NodeId::from_u64(rng() & 0xFFFF, kBits);
        int owners = 0;
        for (Node* n : ring.members) {
            auto view = n->ring_view(ring.root);
            REQUIRE(view.predecessor.has_value());
            if (in_interval(key, view.predecessor->id, n->id().id, interval_kind::open_closed))
                owners++;
        }
        INFO("key " << key.to_hex());
        CHECK(owners == 1); // no gap, no overlap
    }
}

TEST_CASE("after quiescence every stored key sits inside its holder's replica set") {
    sim::Simulation sim(74, kBits);
    auto ring = TestRing::build(sim, 12);
    unsigned r = sim.config().successor_list_length;

    std::mt19937_64 rng(4);
    for (int i = 0; i < 60; ++i) {
        DhtRecord rec = testutil::make_record(
            sim, ring.members[i % ring.members.size()]->id(),
            NodeId::from_u64(rng() & 0xFFFF, kBits), "payload-" + std::to_string(i));
        bool ok = false;
        ring.members[i % ring.members.size()]->dht_put(ring.root, rec, [&](result<void> v) {
            ok = v.ok();
        });
        testutil::await_flag(sim, ok);
    }
    // crash one node so placement has to shift, then let repair quiesce
    ring.members[5]->crash();
    sim.run_rounds(4 * kBits);

    auto oracle = ring.oracle();
    for (Node* n : ring.members) {
        if (n->crashed()) continue;
        for (const auto& key : n->store_of(ring.root).keys()) {
            auto replicas = oracle.replica_set(key, r);
            bool member_of_set = false;
            for (const auto& id : replicas) member_of_set |= (id == n->id().id);
            INFO(n->label() << " holds " << key.to_hex());
            CHECK(member_of_set);
        }
    }
}

TEST_CASE("propagate dedup: a replayed (src, correlation) delivers once") {
    sim::Simulation sim(75, kBits);
    auto ring = TestRing::build(sim, 3);
    Node& origin = *ring.members[0];
    Node& target = *ring.members[1];

    auto pipe = origin.open_propagate_pipe(ring.root, "dup-test");
    int deliveries = 0;
    target.set_pipe_handler(pipe.pipe_id, [&](const PeerId&, byte_view) { deliveries++; });

    // hand-craft the same propagate envelope twice
    rpc::PipeData msg{pipe.pipe_id, to_bytes("once")};
    MessageEnvelope env;
    env.kind = payload_kind::pipe_data;
    env.flags = kFlagPropagate;
    env.src = origin.id();
    env.dst = ring.root.id;
    env.group = ring.root;
    env.correlation_id = 4242;
    env.payload = msg.encode();

    auto route = resolve_route(origin.connectivity(), origin.id(), target.id());
    REQUIRE(route.has_value());
    std::uint64_t dups_before = sim.metrics().counter("propagate_dup");
    origin.send_envelope(*route, env);
    origin.send_envelope(*route, env); // identical replay
    sim.run_for(8000);

    CHECK(deliveries == 1);
    CHECK(sim.metrics().counter("propagate_dup") == dups_before + 1);
}
