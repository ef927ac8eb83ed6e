#include <catch2/catch_amalgamated.hpp>

#include "sim_test_util.hpp"

using namespace embchord;
using testutil::TestRing;
using testutil::kBits;

namespace {

/// Discovers a group advertisement in the parent ring and learns it.
GroupId discover_and_learn(sim::Simulation& sim, Node& node, const GroupId& parent,
                           const GroupId& expected) {
    std::optional<GroupId> learned;
    node.dht_get(parent, expected.id, [&](result<std::vector<DhtRecord>> r) {
        REQUIRE(r.ok());
        REQUIRE_FALSE(r.value.empty());
        Advertisement adv = decode_advertisement(r.value.front().payload, kBits);
        learned = node.learn_group(adv);
    });
    REQUIRE(sim.await([&]() { return learned.has_value(); }, 20000));
    REQUIRE(*learned == expected);
    return *learned;
}

} // namespace

TEST_CASE("create_group publishes a discoverable advertisement in the parent ring") {
    sim::Simulation sim(21, kBits);
    auto ring = TestRing::build(sim, 4);

    bool published = false;
    GroupId sensors = ring.members[0]->create_group(ring.root, "sensors", group_policy::open,
                                                    [&](result<void> r) {
                                                        REQUIRE(r.ok());
                                                        published = true;
                                                    });
    testutil::await_flag(sim, published);
    CHECK(sensors == group_id_from_name(ring.root, "sensors", kBits));

    // discoverable from any root member via the deterministic id key
    discover_and_learn(sim, *ring.members[2], ring.root, sensors);

    // creating the same (parent, name) twice yields the identical id
    bool again = false;
    GroupId dup = ring.members[0]->create_group(ring.root, "sensors", group_policy::open,
                                                [&](result<void> r) {
                                                    REQUIRE(r.ok());
                                                    again = true;
                                                });
    testutil::await_flag(sim, again);
    CHECK(dup == sensors);
}

TEST_CASE("nested groups chain to the root without cycles") {
    sim::Simulation sim(22, kBits);
    auto ring = TestRing::build(sim, 3);
    Node& creator = *ring.members[0];

    bool p1 = false, p2 = false;
    GroupId sensors =
        creator.create_group(ring.root, "sensors", group_policy::open, [&](result<void> r) {
            REQUIRE(r.ok());
            p1 = true;
        });
    testutil::await_flag(sim, p1);
    GroupId floor1 =
        creator.create_group(sensors, "floor1", group_policy::open, [&](result<void> r) {
            REQUIRE(r.ok());
            p2 = true;
        });
    testutil::await_flag(sim, p2);

    auto chain = creator.parent_chain(floor1);
    REQUIRE(chain.size() == 2);
    CHECK(chain[0] == sensors);
    CHECK(chain[1] == ring.root);
    CHECK_FALSE(creator.parent_of(ring.root).has_value());
}

TEST_CASE("joining a group requires parent membership") {
    sim::Simulation sim(23, kBits);
    auto ring = TestRing::build(sim, 3);

    bool published = false;
    GroupId sensors = ring.members[0]->create_group(ring.root, "sensors", group_policy::open,
                                                    [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    // an outsider that never joined the root ring
    Node& outsider = sim.add_node("outsider");
    outsider.register_transport({transport_kind::mem, "lan/outsider"}, LinkProfile{});
    std::optional<errc> err;
    Advertisement adv;
    adv.kind = adv_kind::group;
    adv.subject_id = sensors.id;
    adv.group_scope = ring.root;
    adv.name = "sensors";
    adv.attributes["peer"] = ring.members[0]->id().to_hex();
    adv.endpoints = ring.members[0]->self_descriptor().endpoints;
    adv.expiration_ms = sim.now() + 100000;
    outsider.learn_group(adv);
    outsider.join_group(sensors, std::nullopt, [&](result<void> r) { err = r.err; });
    REQUIRE(sim.await([&]() { return err.has_value(); }, 10000));
    CHECK(*err == errc::rejected);
}

TEST_CASE("open group join needs no credential; secured join demands a valid one") {
    sim::Simulation sim(24, kBits);
    auto ring = TestRing::build(sim, 4);
    Node& authority = *ring.members[0];
    Node& honest = *ring.members[1];
    Node& forger = *ring.members[2];

    bool published = false;
    GroupId vault = authority.create_group(ring.root, "vault", group_policy::secured,
                                           [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    discover_and_learn(sim, honest, ring.root, vault);
    discover_and_learn(sim, forger, ring.root, vault);

    // no credential at all
    std::optional<errc> no_cred;
    honest.join_group(vault, std::nullopt, [&](result<void> r) { no_cred = r.err; });
    REQUIRE(sim.await([&]() { return no_cred.has_value(); }, 10000));
    CHECK(*no_cred == errc::unauthorized);

    // forged credential: random MAC
    Credential forged;
    forged.peer = forger.id();
    forged.group = vault;
    forged.issued_at_ms = sim.now();
    for (auto& b : forged.authenticator) b = 0x5A;
    std::optional<errc> forged_err;
    forger.join_group(vault, forged, [&](result<void> r) { forged_err = r.err; });
    REQUIRE(sim.await([&]() { return forged_err.has_value(); }, 15000));
    CHECK(*forged_err == errc::unauthorized);
    CHECK(forger.keyring_of(vault).empty()); // never received key material

    // valid credential: key arrives, ring joined, decrypt works end to end
    Credential cred = authority.issue_credential(vault, honest.id());
    std::optional<errc> ok_err;
    honest.join_group(vault, cred, [&](result<void> r) { ok_err = r.err; });
    REQUIRE(sim.await([&]() { return ok_err.has_value(); }, 15000));
    CHECK(*ok_err == errc::ok);
    REQUIRE(honest.keyring_of(vault).current() != nullptr);
    CHECK(honest.keyring_of(vault).current_id() == authority.keyring_of(vault).current_id());
}

TEST_CASE("group encryption round-trips and authenticates") {
    sim::Simulation sim(25, kBits);
    auto ring = TestRing::build(sim, 2);
    Node& a = *ring.members[0];

    bool published = false;
    GroupId g = a.create_group(ring.root, "enc", group_policy::secured,
                               [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    std::mt19937_64 rng(1);
    for (std::size_t len : {std::size_t(0), std::size_t(1), std::size_t(1000), std::size_t(65536)}) {
        byte_buffer plain(len);
        for (auto& b : plain) b = static_cast<std::uint8_t>(rng());
        auto sealed = a.group_encrypt_payload(g, plain);
        auto opened = a.group_decrypt_payload(g, sealed);
        REQUIRE(opened.ok());
        CHECK(opened.value == plain);
    }

    // any single flipped ciphertext bit must fail atomically
    byte_buffer plain = to_bytes("attack at dawn");
    auto sealed = a.group_encrypt_payload(g, plain);
    for (std::size_t i = 0; i < sealed.ciphertext.size(); ++i) {
        auto bad = sealed;
        bad.ciphertext[i] ^= 1;
        CHECK(a.group_decrypt_payload(g, bad).err == errc::tampered);
    }
    // tag bits too
    auto bad_tag = sealed;
    bad_tag.tag[0] ^= 0x80;
    CHECK(a.group_decrypt_payload(g, bad_tag).err == errc::tampered);
}

TEST_CASE("encrypted payload wire form round-trips") {
    EncryptedPayload p;
    p.key_id = 7;
    for (std::size_t i = 0; i < p.nonce.size(); ++i) p.nonce[i] = std::uint8_t(i);
    p.ciphertext = to_bytes("ciphertext-bytes");
    for (std::size_t i = 0; i < p.tag.size(); ++i) p.tag[i] = std::uint8_t(0xF0 + i);
    auto bytes = encode_encrypted_payload(p);
    CHECK(decode_encrypted_payload(bytes) == p);
    // layout: key_id u32 + nonce 12 + len u32 + ct + tag 16
    CHECK(bytes.size() == 4 + 12 + 4 + p.ciphertext.size() + 16);
}

TEST_CASE("key rotation: epochs increase, grace window decrypts, evictee locked out") {
    sim::Simulation sim(26, kBits);
    auto ring = TestRing::build(sim, 4);
    Node& authority = *ring.members[0];
    Node& member = *ring.members[1];
    Node& evictee = *ring.members[2];

    bool published = false;
    GroupId g = authority.create_group(ring.root, "rotating", group_policy::secured,
                                       [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    for (Node* n : {&member, &evictee}) {
        discover_and_learn(sim, *n, ring.root, g);
        Credential cred = authority.issue_credential(g, n->id());
        bool joined = false;
        n->join_group(g, cred, [&](result<void> r) {
            REQUIRE(r.ok());
            joined = true;
        });
        testutil::await_flag(sim, joined);
    }
    sim.run_rounds(4);

    // ciphertext under the first epoch
    auto old_sealed = authority.group_encrypt_payload(g, to_bytes("epoch-one"));
    std::uint32_t first_epoch = authority.keyring_of(g).current_id();

    // evict, then rotate
    authority.evict_member(g, evictee.id());
    bool rotated = false;
    authority.rotate_key(g, [&](result<void> r) {
        REQUIRE(r.ok());
        rotated = true;
    });
    testutil::await_flag(sim, rotated);
    sim.run_rounds(4); // deliver key updates

    CHECK(authority.keyring_of(g).current_id() == first_epoch + 1);
    CHECK(member.keyring_of(g).current_id() == first_epoch + 1);
    CHECK(evictee.keyring_of(g).current_id() == first_epoch); // not redistributed

    // strictly increasing over further rotations
    for (int i = 0; i < 2; ++i) {
        bool again = false;
        authority.rotate_key(g, [&](result<void> r) { again = r.ok(); });
        testutil::await_flag(sim, again);
        sim.run_rounds(2);
    }
    CHECK(authority.keyring_of(g).current_id() == first_epoch + 3);

    // member still reads old-epoch traffic within the grace window
    auto opened = member.group_decrypt_payload(g, old_sealed);
    CHECK(opened.ok());

    // new-epoch traffic is closed to the evictee
    auto fresh = authority.group_encrypt_payload(g, to_bytes("epoch-four"));
    CHECK(evictee.group_decrypt_payload(g, fresh).err == errc::stale_key);
    auto member_read = member.group_decrypt_payload(g, fresh);
    REQUIRE(member_read.ok());
    CHECK(member_read.value == to_bytes("epoch-four"));

    // past the grace window the old epoch stops decrypting
    sim.run_for(sim.config().key_grace_ms + 1000);
    CHECK(member.group_decrypt_payload(g, old_sealed).err == errc::stale_key);
}

TEST_CASE("scope isolation: a record published in group A is invisible in group B") {
    sim::Simulation sim(27, kBits);
    auto ring = TestRing::build(sim, 4);
    Node& creator = *ring.members[0];

    bool pa = false, pb = false;
    GroupId ga = creator.create_group(ring.root, "a", group_policy::open,
                                      [&](result<void> r) { pa = r.ok(); });
    GroupId gb = creator.create_group(ring.root, "b", group_policy::open,
                                      [&](result<void> r) { pb = r.ok(); });
    testutil::await_flag(sim, pa);
    testutil::await_flag(sim, pb);

    for (Node* n : {ring.members[1], ring.members[2]}) {
        for (const GroupId& g : {ga, gb}) {
            discover_and_learn(sim, *n, ring.root, g);
            bool joined = false;
            n->join_group(g, std::nullopt, [&](result<void> r) { joined = r.ok(); });
            testutil::await_flag(sim, joined);
        }
        sim.run_rounds(2);
    }
    sim.run_rounds(8);

    // same numeric key value in both rings
    NodeId key = NodeId::from_u64(0x1234, kBits);
    bool put_done = false;
    ring.members[1]->dht_put(ga, testutil::make_record(sim, ring.members[1]->id(), key, "only-in-a"),
                             [&](result<void> r) {
                                 REQUIRE(r.ok());
                                 put_done = true;
                             });
    testutil::await_flag(sim, put_done);
    sim.run_rounds(2);

    bool got_a = false, got_b = false;
    std::size_t count_a = 0, count_b = 99;
    ring.members[2]->dht_get(ga, key, [&](result<std::vector<DhtRecord>> r) {
        got_a = true;
        count_a = r.ok() ? r.value.size() : 0;
    });
    ring.members[2]->dht_get(gb, key, [&](result<std::vector<DhtRecord>> r) {
        got_b = true;
        count_b = r.ok() ? r.value.size() : 0;
    });
    REQUIRE(sim.await([&]() { return got_a && got_b; }, 20000));
    CHECK(count_a == 1);
    CHECK(count_b == 0);
}
