#include <catch2/catch_amalgamated.hpp>

#include "sim_test_util.hpp"

using namespace embchord;
using testutil::TestRing;
using testutil::kBits;

TEST_CASE("coap message wire form round-trips") {
    CoapMessage m;
    m.type = coap_type::con;
    m.code = coap_code::get;
    m.message_id = 0xBEEF;
    m.token = to_bytes("tok");
    m.uri_path = {"sensors", "temp"};
    m.content_format = 42;
    m.payload = to_bytes("hello");
    auto bytes = encode_coap(m);
    CHECK(decode_coap(bytes) == m);

    CoapMessage empty;
    CHECK(decode_coap(encode_coap(empty)) == empty);

    CHECK(coap_code::to_string(coap_code::content) == "2.05");
    CHECK(coap_code::to_string(coap_code::not_found) == "4.04");
    CHECK(coap_code::cls(coap_code::unauthorized) == 4);
    CHECK(coap_code::detail(coap_code::unauthorized) == 1);
}

TEST_CASE("uri path splitting and joining") {
    CHECK(split_uri_path("/a/b/c") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_uri_path("a/b") == std::vector<std::string>{"a", "b"});
    CHECK(split_uri_path("/") == std::vector<std::string>{});
    CHECK(join_uri_path({"a", "b"}) == "/a/b");
    CHECK(join_uri_path({}) == "/");
}

TEST_CASE("GET on a registered handler returns 2.05 with the handler payload") {
    sim::Simulation sim(41, kBits);
    auto ring = TestRing::build(sim, 3);
    Node& server = *ring.members[0];
    Node& client = *ring.members[1];

    bool published = false;
    server.serve_resource(ring.root, "/temp",
                          [](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes("21.5"), 0};
                          },
                          "temperature", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    std::optional<CoapMessage> resp;
    client.coap_request(ring.root, server.id(), coap_code::get, "/temp", {}, true,
                        [&](result<CoapMessage> r) {
                            REQUIRE(r.ok());
                            resp = r.value;
                        });
    REQUIRE(sim.await([&]() { return resp.has_value(); }, 10000));
    CHECK(resp->code == coap_code::content);
    CHECK(to_string(resp->payload) == "21.5");
    CHECK(resp->type == coap_type::ack); // piggybacked on the CON exchange
}

TEST_CASE("GET of an unregistered path returns 4.04") {
    sim::Simulation sim(42, kBits);
    auto ring = TestRing::build(sim, 2);
    std::optional<CoapMessage> resp;
    ring.members[1]->coap_request(ring.root, ring.members[0]->id(), coap_code::get, "/nope", {},
                                  true, [&](result<CoapMessage> r) {
                                      REQUIRE(r.ok());
                                      resp = r.value;
                                  });
    REQUIRE(sim.await([&]() { return resp.has_value(); }, 10000));
    CHECK(resp->code == coap_code::not_found);
}

TEST_CASE("duplicate path registration is rejected") {
    sim::Simulation sim(43, kBits);
    auto ring = TestRing::build(sim, 1);
    ring.members[0]->serve_resource(ring.root, "/x",
                                    [](const CoapMessage&) { return CoapServerResponse{}; },
                                    "x1", nullptr);
    CHECK_THROWS_AS(ring.members[0]->serve_resource(
                        ring.root, "/x",
                        [](const CoapMessage&) { return CoapServerResponse{}; }, "x2", nullptr),
                    config_error);
}

TEST_CASE("serve then discover finds the advertisement; other groups see nothing") {
    sim::Simulation sim(44, kBits);
    auto ring = TestRing::build(sim, 4);
    Node& server = *ring.members[0];
    Node& client = *ring.members[1];

    bool pg = false;
    GroupId other = server.create_group(ring.root, "other", group_policy::open,
                                        [&](result<void> r) { pg = r.ok(); });
    testutil::await_flag(sim, pg);
    bool joined = false;
    bool got = false;
    client.dht_get(ring.root, other.id, [&](result<std::vector<DhtRecord>> r) {
        REQUIRE(r.ok());
        client.learn_group(decode_advertisement(r.value.front().payload, kBits));
        got = true;
    });
    testutil::await_flag(sim, got);
    client.join_group(other, std::nullopt, [&](result<void> r) { joined = r.ok(); });
    testutil::await_flag(sim, joined);
    sim.run_rounds(4);

    bool published = false;
    server.serve_resource(ring.root, "/temp",
                          [](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes("ok"), 0};
                          },
                          "temperature", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);
    sim.run_rounds(2);

    std::optional<std::vector<Advertisement>> found;
    client.discover(ring.root, "temperature", [&](result<std::vector<Advertisement>> r) {
        REQUIRE(r.ok());
        found = r.value;
    });
    REQUIRE(sim.await([&]() { return found.has_value(); }, 10000));
    REQUIRE(found->size() == 1);
    CHECK(found->front().attributes.at("path") == "/temp");
    CHECK(found->front().attributes.at("peer") == server.id().to_hex());

    // same name in the other group: empty, scope isolation holds
    std::optional<std::vector<Advertisement>> cross;
    client.discover(other, "temperature", [&](result<std::vector<Advertisement>> r) {
        REQUIRE(r.ok());
        cross = r.value;
    });
    REQUIRE(sim.await([&]() { return cross.has_value(); }, 10000));
    CHECK(cross->empty());
}

TEST_CASE("two providers of the same name are both discovered") {
    sim::Simulation sim(45, kBits);
    auto ring = TestRing::build(sim, 4);
    for (int i = 0; i < 2; ++i) {
        bool published = false;
        ring.members[i]->serve_resource(ring.root, "/temp",
                                        [](const CoapMessage&) {
                                            return CoapServerResponse{coap_code::content, {}, 0};
                                        },
                                        "temperature",
                                        [&](result<void> r) { published = r.ok(); });
        testutil::await_flag(sim, published);
    }
    sim.run_rounds(2);
    std::optional<std::vector<Advertisement>> found;
    ring.members[3]->discover(ring.root, "temperature",
                              [&](result<std::vector<Advertisement>> r) {
                                  REQUIRE(r.ok());
                                  found = r.value;
                              });
    REQUIRE(sim.await([&]() { return found.has_value(); }, 10000));
    CHECK(found->size() == 2);
}

TEST_CASE("discovery survives the crash of the record owner (replication)") {
    sim::Simulation sim(46, kBits);
    auto ring = TestRing::build(sim, 8);
    Node& server = *ring.members[0];

    bool published = false;
    server.serve_resource(ring.root, "/temp",
                          [](const CoapMessage&) { return CoapServerResponse{}; }, "temperature",
                          [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);
    sim.run_rounds(4); // replicas pushed

    // crash the owner of the discovery key (not the server itself)
    NodeId key = discovery_key(ring.root, "temperature", kBits);
    auto oracle = ring.oracle();
    NodeId owner = oracle.successor_of_key(key);
    for (Node* n : ring.members)
        if (n->id().id == owner && n != &server) n->crash();
    sim.run_rounds(4 * kBits);

    std::optional<std::vector<Advertisement>> found;
    Node* reader = nullptr;
    for (Node* n : ring.members)
        if (!n->crashed() && n != &server) reader = n;
    REQUIRE(reader != nullptr);
    reader->discover(ring.root, "temperature", [&](result<std::vector<Advertisement>> r) {
        REQUIRE(r.ok());
        found = r.value;
    });
    REQUIRE(sim.await([&]() { return found.has_value(); }, 20000));
    CHECK(found->size() == 1);
}

TEST_CASE("CON retransmissions fire at exactly +2000 and +6000 ms under deterministic drops") {
    sim::Simulation sim(47, kBits);
    auto ring = TestRing::build(sim, 2);
    Node& server = *ring.members[0];
    Node& client = *ring.members[1];

    bool published = false;
    server.serve_resource(ring.root, "/t",
                          [](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes("v"), 0};
                          },
                          "t", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    // swallow the first two coap transmissions leaving the client
    int coap_seen = 0;
    std::vector<std::uint64_t> tx_times;
    sim.network().set_interceptor([&](const EndpointAddress& from, const EndpointAddress&,
                                      const sim::TxMeta& meta) {
        if (meta.trace_kind != std::uint8_t(payload_kind::coap)) return false;
        if (!(meta.trace_src == client.id().id)) return false;
        tx_times.push_back(sim.now());
        coap_seen++;
        return coap_seen <= 2;
    });

    std::uint64_t t0 = sim.now();
    std::optional<CoapMessage> resp;
    std::uint64_t resolved_at = 0;
    client.coap_request(ring.root, server.id(), coap_code::get, "/t", {}, true,
                        [&](result<CoapMessage> r) {
                            REQUIRE(r.ok());
                            resp = r.value;
                            resolved_at = sim.now();
                        });
    REQUIRE(sim.await([&]() { return resp.has_value(); }, 30000));

    REQUIRE(tx_times.size() >= 3);
    CHECK(tx_times[0] == t0);
    CHECK(tx_times[1] == t0 + 2000);  // first retransmission: ACK_TIMEOUT
    CHECK(tx_times[2] == t0 + 6000);  // second: +2000*2
    CHECK(sim.metrics().counter("coap_retransmit") == 2);
    CHECK(resp->code == coap_code::content);
}

TEST_CASE("dropping all five transmissions times out after the final backoff window") {
    sim::Simulation sim(48, kBits);
    auto ring = TestRing::build(sim, 2);
    Node& server = *ring.members[0];
    Node& client = *ring.members[1];
    bool published = false;
    server.serve_resource(ring.root, "/t",
                          [](const CoapMessage&) { return CoapServerResponse{}; }, "t",
                          [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    std::vector<std::uint64_t> tx_times;
    sim.network().set_interceptor([&](const EndpointAddress&, const EndpointAddress&,
                                      const sim::TxMeta& meta) {
        if (meta.trace_kind != std::uint8_t(payload_kind::coap)) return false;
        if (!(meta.trace_src == client.id().id)) return false;
        tx_times.push_back(sim.now());
        return true; // all coap frames from the client vanish
    });

    std::uint64_t t0 = sim.now();
    std::optional<errc> err;
    std::uint64_t failed_at = 0;
    client.coap_request(ring.root, server.id(), coap_code::get, "/t", {}, true,
                        [&](result<CoapMessage> r) {
                            err = r.err;
                            failed_at = sim.now();
                        });
    REQUIRE(sim.await([&]() { return err.has_value(); }, 90000));
    CHECK(*err == errc::timeout);

    // transmissions at 0, 2, 6, 14, 30 seconds; final window doubles once moreed
    REQUIRE(tx_times.size() == 5);
    CHECK(tx_times[0] == t0);
    CHECK(tx_times[1] == t0 + 2000);
    CHECK(tx_times[2] == t0 + 6000);
    CHECK(tx_times[3] == t0 + 14000);
    CHECK(tx_times[4] == t0 + 30000);
    CHECK(failed_at == t0 + 62000);
    CHECK(sim.metrics().counter("coap_timeout") == 1);
}

TEST_CASE("duplicate responses are dropped and orphans counted") {
    sim::Simulation sim(49, kBits);
    auto ring = TestRing::build(sim, 2);
    Node& server = *ring.members[0];
    Node& client = *ring.members[1];
    bool published = false;
    server.serve_resource(ring.root, "/t",
                          [](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes("x"), 0};
                          },
                          "t", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);

    // drop the server's FIRST response so the request retransmits and the
    // server answers twice from its dedup cache
    int server_responses = 0;
    sim.network().set_interceptor([&](const EndpointAddress&, const EndpointAddress&,
                                      const sim::TxMeta& meta) {
        if (meta.trace_kind != std::uint8_t(payload_kind::coap)) return false;
        if (!(meta.trace_src == server.id().id)) return false;
        server_responses++;
        return server_responses == 1;
    });

    int resolutions = 0;
    client.coap_request(ring.root, server.id(), coap_code::get, "/t", {}, true,
                        [&](result<CoapMessage> r) {
                            REQUIRE(r.ok());
                            resolutions++;
                        });
    REQUIRE(sim.await([&]() { return resolutions > 0; }, 30000));
    sim.run_for(20000); // allow any duplicate response to arrive
    CHECK(resolutions == 1);
    CHECK(sim.metrics().counter("coap_server_dedup") >= 1);
    CHECK(sim.metrics().counter("coap_dup_response") <= 1); // dedup cache replay may race the ack
}

TEST_CASE("cross-segment CON GET through two bridges end to end") {
    sim::Simulation sim(50, kBits);
    sim.add_segment("m1", LinkProfile{});
    sim.add_segment("narrow", narrowband_lowpan_profile());
    sim.add_segment("m2", LinkProfile{});

    Node& r1 = sim.add_node("r1");
    r1.register_transport({transport_kind::mem, "m1/r1"}, LinkProfile{});
    r1.register_transport({transport_kind::narrow_sim, "narrow/r1"}, narrowband_lowpan_profile());
    Node& r2 = sim.add_node("r2");
    r2.register_transport({transport_kind::narrow_sim, "narrow/r2"}, narrowband_lowpan_profile());
    r2.register_transport({transport_kind::mem, "m2/r2"}, LinkProfile{});
    Node& client = sim.add_node("client");
    client.register_transport({transport_kind::mem, "m1/client"}, LinkProfile{});
    Node& server = sim.add_node("server");
    server.register_transport({transport_kind::mem, "m2/server"}, LinkProfile{});

    GroupId root = r1.create_root_group("net");
    struct JoinPlan { Node* n; Node* boot; };
    for (auto [n, boot] : {JoinPlan{&r2, &r1}, JoinPlan{&server, &r2}, JoinPlan{&client, &r1}}) {
        n->learn_root_group("net");
        bool joined = false;
        n->join_group(root, std::nullopt, [&](result<void> r) {
            REQUIRE(r.ok());
            joined = true;
        }, boot->self_descriptor());
        testutil::await_flag(sim, joined);
        sim.run_rounds(1);
    }
    sim.run_rounds(10);

    bool published = false;
    server.serve_resource(root, "/temp",
                          [](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes("19.75"), 0};
                          },
                          "temperature", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published, 30000);
    sim.run_rounds(4);

    // discover, then request against the discovered advertisement
    std::optional<Advertisement> adv;
    client.discover(root, "temperature", [&](result<std::vector<Advertisement>> r) {
        REQUIRE(r.ok());
        REQUIRE_FALSE(r.value.empty());
        adv = r.value.front();
    });
    REQUIRE(sim.await([&]() { return adv.has_value(); }, 30000));

    PeerId target{NodeId::from_bytes_be(from_hex(adv->attributes.at("peer")), kBits)};
    std::optional<CoapMessage> resp;
    client.coap_request(root, target, coap_code::get, adv->attributes.at("path"), {}, true,
                        [&](result<CoapMessage> r) {
                            REQUIRE(r.ok());
                            resp = r.value;
                        });
    REQUIRE(sim.await([&]() { return resp.has_value(); }, 60000));
    CHECK(resp->code == coap_code::content);
    CHECK(to_string(resp->payload) == "19.75");
}

TEST_CASE("secured group: member request succeeds, cleartext outsider gets 4.01") {
    sim::Simulation sim(51, kBits);
    auto ring = TestRing::build(sim, 4);
    Node& authority = *ring.members[0];
    Node& member = *ring.members[1];
    Node& outsider = *ring.members[2];

    bool pg = false;
    GroupId g = authority.create_group(ring.root, "locked", group_policy::secured,
                                       [&](result<void> r) { pg = r.ok(); });
    testutil::await_flag(sim, pg);

    for (Node* n : {&member, &outsider}) {
        bool got = false;
        n->dht_get(ring.root, g.id, [&](result<std::vector<DhtRecord>> r) {
            REQUIRE(r.ok());
            n->learn_group(decode_advertisement(r.value.front().payload, kBits));
            got = true;
        });
        testutil::await_flag(sim, got);
    }
    bool joined = false;
    member.join_group(g, authority.issue_credential(g, member.id()), [&](result<void> r) {
        REQUIRE(r.ok());
        joined = true;
    });
    testutil::await_flag(sim, joined);
    sim.run_rounds(4);

    bool published = false;
    authority.serve_resource(g, "/secret",
                             [](const CoapMessage&) {
                                 return CoapServerResponse{coap_code::content,
                                                           to_bytes("classified"), 0};
                             },
                             "secret", [&](result<void> r) { published = r.ok(); });
    testutil::await_flag(sim, published);
    sim.run_rounds(2);

    std::optional<CoapMessage> member_resp;
    member.coap_request(g, authority.id(), coap_code::get, "/secret", {}, true,
                        [&](result<CoapMessage> r) {
                            REQUIRE(r.ok());
                            member_resp = r.value;
                        });
    REQUIRE(sim.await([&]() { return member_resp.has_value(); }, 20000));
    CHECK(member_resp->code == coap_code::content);
    CHECK(to_string(member_resp->payload) == "classified");

    // outsider knows the group but holds no key: its cleartext CON gets 4.01
    std::optional<CoapMessage> outsider_resp;
    outsider.coap_request(g, authority.id(), coap_code::get, "/secret", {}, true,
                          [&](result<CoapMessage> r) {
                              REQUIRE(r.ok());
                              outsider_resp = r.value;
                          });
    REQUIRE(sim.await([&]() { return outsider_resp.has_value(); }, 20000));
    CHECK(outsider_resp->code == coap_code::unauthorized);
    CHECK(outsider_resp->payload.empty());
}

TEST_CASE("NON multicast request over a propagate pipe collects member responses") {
    sim::Simulation sim(52, kBits);
    auto ring = TestRing::build(sim, 4);
    for (Node* n : ring.members) {
        bool published = false;
        n->serve_resource(ring.root, "/status",
                          [n](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content,
                                                        to_bytes(n->label()), 0};
                          },
                          "status:" + n->label(), [&](result<void> r) { published = r.ok(); });
        testutil::await_flag(sim, published);
    }
    sim.run_rounds(2);

    std::optional<std::vector<CoapMessage>> responses;
    ring.members[0]->coap_multicast(ring.root, coap_code::get, "/status", {},
                                    [&](result<std::vector<CoapMessage>> r) {
                                        REQUIRE(r.ok());
                                        responses = r.value;
                                    });
    REQUIRE(sim.await([&]() { return responses.has_value(); }, 30000));
    CHECK(responses->size() == 4); // all members answered, including loopback
}
