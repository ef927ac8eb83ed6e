#pragma once

// Canned acceptance suite: the property checks behind `embchord bench
// acceptance`. Each criterion builds its own world from the shared seed,
// measures, and reports pass/fail with a deterministic detail string, so
// two runs with one seed render byte-identical reports.

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "embchord/advertisement.hpp"
#include "embchord/sim/harness.hpp"
#include "embchord/sim/oracle.hpp"
#include "embchord/sim/scenario.hpp"

namespace embchord::sim::bench {

inline constexpr unsigned kBits = 16;

struct CriterionResult {
    int number = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct BenchReport {
    std::vector<CriterionResult> results;

    bool all_passed() const {
        for (const auto& r : results)
            if (!r.passed) return false;
        return true;
    }

    std::string to_lines() const {
        std::ostringstream os;
        for (const auto& r : results)
            os << "criterion=" << r.number << " status=" << (r.passed ? "PASS" : "FAIL")
               << " name=" << r.name << " detail=\"" << r.detail << "\"\n";
        os << "suite=" << (all_passed() ? "PASS" : "FAIL") << "\n";
        return os.str();
    }
};

namespace detail {

struct Ring {
    GroupId root;
    std::vector<Node*> members;

    RingOracle oracle() const {
        std::vector<NodeId> ids;
        for (const auto* n : members)
            if (!n->crashed()) ids.push_back(n->id().id);
        return RingOracle::from_ids(std::move(ids));
    }
};

/// Single-segment ring with staggered joins; throws on any join failure.
inline Ring build_ring(Simulation& sim, int n, const std::string& segment = "lan",
                       unsigned settle_rounds = 2 * kBits,
                       std::vector<int> join_order = {}) {
    Ring ring;
    if (!sim.network().has_segment(segment)) sim.add_segment(segment, LinkProfile{});
    for (int i = 0; i < n; ++i) {
        std::string label = sim.fresh_label(segment + "p" + std::to_string(i));
        Node& node = sim.add_node(label);
        node.register_transport({transport_kind::mem, segment + "/" + label}, LinkProfile{});
        ring.members.push_back(&node);
    }
    if (join_order.empty())
        for (int i = 0; i < n; ++i) join_order.push_back(i);

    ring.root = ring.members[join_order[0]]->create_root_group("net");
    Node* first = ring.members[join_order[0]];
    int joined = 1;
    for (std::size_t i = 1; i < join_order.size(); ++i) {
        Node* peer = ring.members[join_order[i]];
        peer->learn_root_group("net");
        peer->join_group(ring.root, std::nullopt,
                         [&joined](result<void> r) {
                             if (r.ok()) joined++;
                         },
                         first->self_descriptor());
        sim.run_rounds(1);
    }
    if (!sim.await([&joined, n]() { return joined == n; }, 120000))
        throw config_error("ring build: joins did not complete");
    sim.run_rounds(settle_rounds);
    return ring;
}

inline NodeId random_key(std::mt19937_64& rng) {
    return NodeId::from_u64(rng() & 0xFFFF, kBits);
}

inline bool lookup_blocking(Simulation& sim, Node& origin, const GroupId& g, const NodeId& key,
                            LookupResult& out) {
    bool done = false, ok = false;
    origin.find_successor(g, key, [&](result<LookupResult> r) {
        done = true;
        ok = r.ok();
        if (r.ok()) out = r.value;
    });
    sim.await([&done]() { return done; }, 30000);
    return done && ok;
}

inline bool put_blocking(Simulation& sim, Node& origin, const GroupId& g, const DhtRecord& rec) {
    bool done = false, ok = false;
    origin.dht_put(g, rec, [&](result<void> r) {
        done = true;
        ok = r.ok();
    });
    sim.await([&done]() { return done; }, 30000);
    return done && ok;
}

inline bool get_blocking(Simulation& sim, Node& origin, const GroupId& g, const NodeId& key,
                         std::vector<DhtRecord>& out) {
    bool done = false, ok = false;
    origin.dht_get(g, key, [&](result<std::vector<DhtRecord>> r) {
        done = true;
        ok = r.ok();
        if (r.ok()) out = std::move(r.value);
    });
    sim.await([&done]() { return done; }, 40000);
    return done && ok;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace detail

/// 1. Chord oracle equivalence on rings of 8, 32, and 128 nodes, and
/// 2. the hop bound on the 128-node ring.
inline std::pair<CriterionResult, CriterionResult> criterion_lookup_and_hops(std::uint64_t seed) {
    auto wall_start = std::chrono::steady_clock::now();
    std::size_t correct = 0, total = 0;
    double hop_sum_128 = 0;
    std::size_t hop_count_128 = 0;
    unsigned hop_max_128 = 0;

    for (int n : {8, 32, 128}) {
        Simulation sim(seed + n, kBits);
        auto ring = detail::build_ring(sim, n);
        auto oracle = ring.oracle();
        std::mt19937_64 rng(seed * 31 + n);
        for (int i = 0; i < 1000; ++i) {
            NodeId key = detail::random_key(rng);
            Node* origin = ring.members[rng() % ring.members.size()];
            LookupResult res;
            total++;
            if (!detail::lookup_blocking(sim, *origin, ring.root, key, res)) continue;
            if (res.node.id.id == oracle.successor_of_key(key)) correct++;
            if (n == 128) {
                hop_sum_128 += res.hops;
                hop_count_128++;
                hop_max_128 = std::max(hop_max_128, res.hops);
            }
        }
    }
    auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - wall_start)
                       .count();

    CriterionResult c1;
    c1.number = 1;
    c1.name = "chord_oracle_equivalence";
    bool in_budget = wall_ms < 10000;
    c1.passed = (correct == total) && (total == 3000) && in_budget;
    c1.detail = std::to_string(correct) + "/" + std::to_string(total) +
                " lookups match the oracle; runtime within budget: " +
                (in_budget ? "yes" : "no");

    CriterionResult c2;
    c2.number = 2;
    c2.name = "hop_bound";
    double mean = hop_count_128 ? hop_sum_128 / double(hop_count_128) : 1e9;
    c2.passed = hop_count_128 == 1000 && mean <= 7.0;
    c2.detail = "mean hops " + detail::format_double(mean) + " (bound 7), max " +
                std::to_string(hop_max_128) + ", typical bound 4.5 " +
                (mean <= 4.5 ? "met" : "exceeded");
    return {c1, c2};
}

/// 3. Replication survives three consecutive crashes with r=4.
inline CriterionResult criterion_churn_survival(std::uint64_t seed) {
    Simulation sim(seed + 300, kBits);
    auto ring = detail::build_ring(sim, 16);
    std::mt19937_64 rng(seed + 301);

    std::vector<DhtRecord> records;
    std::size_t stored = 0;
    for (int i = 0; i < 200; ++i) {
        DhtRecord rec;
        rec.key = detail::random_key(rng);
        rec.payload = to_bytes("bench-record-" + std::to_string(i));
        rec.publisher = ring.members[i % ring.members.size()]->id();
        rec.expires_at_ms = sim.now() + 36000000;
        if (detail::put_blocking(sim, *ring.members[i % ring.members.size()], ring.root, rec))
            stored++;
        records.push_back(rec);
    }
    sim.run_rounds(4); // replica pushes settle

    auto oracle = ring.oracle();
    NodeId first = oracle.ids()[rng() % oracle.ids().size()];
    NodeId second = oracle.successor_of(first);
    NodeId third = oracle.successor_of(second);
    for (Node* n : ring.members)
        if (n->id().id == first || n->id().id == second || n->id().id == third) n->crash();

    sim.run_rounds(4 * kBits);

    Node* reader = nullptr;
    for (Node* n : ring.members)
        if (!n->crashed()) reader = n;
    std::size_t retrieved = 0;
    for (const auto& rec : records) {
        std::vector<DhtRecord> got;
        if (!detail::get_blocking(sim, *reader, ring.root, rec.key, got)) continue;
        for (const auto& g : got)
            if (g == rec) {
                retrieved++;
                break;
            }
    }
    CriterionResult c;
    c.number = 3;
    c.name = "churn_survival";
    c.passed = stored == 200 && retrieved == 200;
    c.detail = std::to_string(retrieved) + "/200 records retrievable after 3 consecutive crashes";
    return c;
}

/// 4. Convergence to the oracle ring from 20 random join orders.
inline CriterionResult criterion_convergence(std::uint64_t seed) {
    int converged_trials = 0;
    unsigned worst_rounds = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Simulation sim(seed + 400 + trial, kBits);
        std::mt19937_64 rng(seed + 440 + trial);
        std::vector<int> order(32);
        for (int i = 0; i < 32; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        auto ring = detail::build_ring(sim, 32, "lan", 0, order);
        auto oracle = ring.oracle();
        unsigned r = sim.config().successor_list_length;

        auto converged = [&]() {
            for (Node* m : ring.members) {
                auto v = m->ring_view(ring.root);
                if (!v.joined) return false;
                if (!v.predecessor || v.predecessor->id != oracle.predecessor_of(m->id().id))
                    return false;
                auto expect = oracle.successor_list_of(m->id().id, r);
                if (v.successors.size() != expect.size()) return false;
                for (std::size_t i = 0; i < expect.size(); ++i)
                    if (v.successors[i].id != expect[i]) return false;
                for (unsigned f = 1; f <= kBits; ++f)
                    if (!v.fingers[f - 1] || v.fingers[f - 1]->id != oracle.finger_of(m->id().id, f))
                        return false;
            }
            return true;
        };
        unsigned rounds = 0;
        while (rounds < 4 * kBits && !converged()) {
            sim.run_rounds(1);
            rounds++;
        }
        if (converged()) {
            converged_trials++;
            worst_rounds = std::max(worst_rounds, rounds);
        }
    }
    CriterionResult c;
    c.number = 4;
    c.name = "convergence";
    c.passed = converged_trials == 20;
    c.detail = std::to_string(converged_trials) + "/20 join orders converged (worst " +
               std::to_string(worst_rounds) + " of " + std::to_string(4 * kBits) + " rounds)";
    return c;
}

/// 5. Transparent routing: CON GET across Mem-NarrowSim-Mem via two
/// bridges, payload bytes identical on every leg.
inline CriterionResult criterion_transparent_routing(std::uint64_t seed) {
    Simulation sim(seed + 500, kBits);
    sim.add_segment("m1", LinkProfile{});
    sim.add_segment("narrow", narrowband_lowpan_profile());
    sim.add_segment("m2", LinkProfile{});

    // per-segment reassembly taps record coap payload bytes
    std::map<std::string, Reassembler> taps;
    std::map<std::string, std::map<std::uint64_t, byte_buffer>> seen;
    sim.network().add_tap([&](const std::string& seg, const EndpointAddress& from,
                              const EndpointAddress&, const byte_buffer& wire) {
        Fragment f = decode_fragment(wire);
        auto whole = taps[seg].accept({from.to_string(), f.envelope_id}, std::move(f), 0);
        if (!whole) return;
        try {
            MessageEnvelope env = decode_envelope(*whole, kBits);
            if (env.kind == payload_kind::coap) seen[seg][env.correlation_id] = env.payload;
        } catch (const malformed_error&) {
        }
    });

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
    struct JoinPlan {
        Node* node;
        Node* boot;
    };
    for (auto [node, boot] :
         {JoinPlan{&r2, &r1}, JoinPlan{&server, &r2}, JoinPlan{&client, &r1}}) {
        node->learn_root_group("net");
        bool joined = false;
        node->join_group(root, std::nullopt, [&joined](result<void> r) { joined = r.ok(); },
                         boot->self_descriptor());
        if (!sim.await([&joined]() { return joined; }, 60000))
            return CriterionResult{5, "transparent_routing", false, "ring join failed"};
        sim.run_rounds(1);
    }
    sim.run_rounds(10);

    const std::string body = "sensor-value-1234567890-abcdefghij";
    bool published = false;
    server.serve_resource(root, "/temp",
                          [&body](const CoapMessage&) {
                              return CoapServerResponse{coap_code::content, to_bytes(body), 0};
                          },
                          "temperature", [&published](result<void> r) { published = r.ok(); });
    sim.await([&published]() { return published; }, 60000);
    sim.run_rounds(4);

    std::optional<CoapMessage> resp;
    client.coap_request(root, server.id(), coap_code::get, "/temp", {}, true,
                        [&resp](result<CoapMessage> r) {
                            if (r.ok()) resp = r.value;
                        });
    sim.await([&resp]() { return resp.has_value(); }, 120000);

    bool got = resp && resp->code == coap_code::content && to_string(resp->payload) == body;

    // the request and response payloads must appear byte-identical on all
    // three segments
    int legs_ok = 0;
    if (got) {
        for (const auto& [corr, payload] : seen["m1"]) {
            auto n = seen["narrow"].find(corr);
            auto m = seen["m2"].find(corr);
            if (n != seen["narrow"].end() && m != seen["m2"].end() && n->second == payload &&
                m->second == payload)
                legs_ok++;
        }
    }
    CriterionResult c;
    c.number = 5;
    c.name = "transparent_routing";
    c.passed = got && legs_ok >= 2; // request and response both relayed intact
    c.detail = std::string(got ? "2.05 end-to-end with matching payload" : "request failed") +
               "; " + std::to_string(legs_ok) + " envelopes byte-identical across all 3 segments";
    return c;
}

/// 6. Fragmentation arithmetic and permutation-independent reassembly.
inline CriterionResult criterion_fragmentation(std::uint64_t seed) {
    byte_buffer env(300);
    std::mt19937_64 rng(seed + 600);
    for (auto& b : env) b = std::uint8_t(rng());
    auto frags = fragment_envelope(env, 77, 64);
    bool six = frags.size() == 6;
    std::size_t ok_perms = 0;
    std::vector<std::size_t> order(frags.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(order.begin(), order.end(), rng);
        Reassembler reasm;
        std::optional<byte_buffer> out;
        for (std::size_t i : order) out = reasm.accept({"bench", 77}, frags[i], 0);
        if (out && *out == env) ok_perms++;
    }
    CriterionResult c;
    c.number = 6;
    c.name = "fragmentation";
    c.passed = six && ok_perms == 50;
    c.detail = std::to_string(frags.size()) + " fragments for 300 B over MTU 64 (expected 6); " +
               std::to_string(ok_perms) + "/50 permutations reassembled identically";
    return c;
}

/// 7. Exact retransmission schedule under deterministic drops.
inline CriterionResult criterion_backoff(std::uint64_t seed) {
    bool schedule_ok = false;
    std::string sched_detail;
    {
        Simulation sim(seed + 700, kBits);
        auto ring = detail::build_ring(sim, 2);
        Node& server = *ring.members[0];
        Node& client = *ring.members[1];
        bool published = false;
        server.serve_resource(ring.root, "/t",
                              [](const CoapMessage&) {
                                  return CoapServerResponse{coap_code::content, to_bytes("v"), 0};
                              },
                              "t", [&published](result<void> r) { published = r.ok(); });
        sim.await([&published]() { return published; }, 30000);

        int coap_seen = 0;
        std::vector<std::uint64_t> tx;
        sim.network().set_interceptor([&](const EndpointAddress&, const EndpointAddress&,
                                          const TxMeta& meta) {
            if (meta.trace_kind != std::uint8_t(payload_kind::coap)) return false;
            if (!(meta.trace_src == client.id().id)) return false;
            tx.push_back(sim.now());
            return ++coap_seen <= 2;
        });
        std::uint64_t t0 = sim.now();
        std::optional<CoapMessage> resp;
        client.coap_request(ring.root, server.id(), coap_code::get, "/t", {}, true,
                            [&resp](result<CoapMessage> r) {
                                if (r.ok()) resp = r.value;
                            });
        sim.await([&resp]() { return resp.has_value(); }, 60000);
        schedule_ok = resp.has_value() && tx.size() >= 3 && tx[0] == t0 && tx[1] == t0 + 2000 &&
                      tx[2] == t0 + 6000;
        sched_detail = "retransmissions at +" +
                       std::to_string(tx.size() > 1 ? tx[1] - t0 : 0) + "/+" +
                       std::to_string(tx.size() > 2 ? tx[2] - t0 : 0) + " ms";
    }
    bool exhaust_ok = false;
    std::string exhaust_detail;
    {
        Simulation sim(seed + 701, kBits);
        auto ring = detail::build_ring(sim, 2);
        Node& server = *ring.members[0];
        Node& client = *ring.members[1];
        std::vector<std::uint64_t> tx;
        sim.network().set_interceptor([&](const EndpointAddress&, const EndpointAddress&,
                                          const TxMeta& meta) {
            if (meta.trace_kind != std::uint8_t(payload_kind::coap)) return false;
            if (!(meta.trace_src == client.id().id)) return false;
            tx.push_back(sim.now());
            return true;
        });
        std::uint64_t t0 = sim.now();
        std::optional<errc> err;
        std::uint64_t failed_at = 0;
        client.coap_request(ring.root, server.id(), coap_code::get, "/t", {}, true,
                            [&](result<CoapMessage> r) {
                                err = r.err;
                                failed_at = sim.now();
                            });
        sim.await([&err]() { return err.has_value(); }, 120000);
        exhaust_ok = err == errc::timeout && tx.size() == 5 && failed_at == t0 + 62000;
        exhaust_detail = std::to_string(tx.size()) + " transmissions, timeout at +" +
                         std::to_string(failed_at - t0) + " ms";
    }
    CriterionResult c;
    c.number = 7;
    c.name = "backoff_exactness";
    c.passed = schedule_ok && exhaust_ok;
    c.detail = sched_detail + "; " + exhaust_detail;
    return c;
}

/// 8. Secure group: eavesdropper never sees plaintext across 1,000
/// messages; eviction locks out; members decrypt 100%.
inline CriterionResult criterion_secure_group(std::uint64_t seed) {
    Simulation sim(seed + 800, kBits);
    auto ring = detail::build_ring(sim, 5);
    Node& authority = *ring.members[0];
    Node& member1 = *ring.members[1];
    Node& member2 = *ring.members[2];
    Node& evictee = *ring.members[3];
    Node& eavesdropper = *ring.members[4];

    const std::string sentinel = "classified-telemetry:";
    std::vector<byte_buffer> frames;
    sim.network().add_tap([&frames](const std::string&, const EndpointAddress&,
                                    const EndpointAddress&, const byte_buffer& wire) {
        frames.push_back(wire);
    });

    bool published = false;
    GroupId g = authority.create_group(ring.root, "secure", group_policy::secured,
                                       [&published](result<void> r) { published = r.ok(); });
    sim.await([&published]() { return published; }, 30000);

    for (Node* n : {&member1, &member2, &evictee}) {
        bool got = false;
        n->dht_get(ring.root, g.id, [&](result<std::vector<DhtRecord>> r) {
            if (r.ok() && !r.value.empty())
                n->learn_group(decode_advertisement(r.value.front().payload, kBits));
            got = true;
        });
        sim.await([&got]() { return got; }, 30000);
        bool joined = false;
        n->join_group(g, authority.issue_credential(g, n->id()),
                      [&joined](result<void> r) { joined = r.ok(); });
        if (!sim.await([&joined]() { return joined; }, 60000))
            return CriterionResult{8, "secure_group", false, "secured join failed"};
        sim.run_rounds(2);
    }
    sim.run_rounds(8);

    auto pipe = authority.open_propagate_pipe(g, "feed");
    std::size_t member_reads = 0;
    for (Node* n : {&member1, &member2, &evictee})
        n->set_pipe_handler(pipe.pipe_id, [&member_reads, &sentinel](const PeerId&, byte_view d) {
            if (to_string(d).rfind(sentinel, 0) == 0) member_reads++;
        });

    const int messages = 1000;
    for (int i = 0; i < messages; ++i) {
        authority.propagate(pipe, to_bytes(sentinel + std::to_string(i)));
        if (i % 50 == 49) sim.run_for(200);
    }
    sim.run_for(10000);
    std::size_t expected_reads = std::size_t(messages) * 3;
    bool all_read = member_reads == expected_reads;

    bool leaked = false;
    byte_buffer needle = to_bytes(sentinel);
    for (const auto& frame : frames) {
        if (std::search(frame.begin(), frame.end(), needle.begin(), needle.end()) !=
            frame.end()) {
            leaked = true;
            break;
        }
    }
    // the eavesdropper holds no key for g at all
    bool eaves_blind = !eavesdropper.knows_group(g) || eavesdropper.keyring_of(g).empty();

    // evict + rotate: fresh traffic closed to evictee, open to members
    authority.evict_member(g, evictee.id());
    bool rotated = false;
    authority.rotate_key(g, [&rotated](result<void> r) { rotated = r.ok(); });
    sim.await([&rotated]() { return rotated; }, 30000);
    sim.run_rounds(4);

    auto fresh = authority.group_encrypt_payload(g, to_bytes(sentinel + "post-rotation"));
    bool evictee_locked = !evictee.group_decrypt_payload(g, fresh).ok();
    auto m1_read = member1.group_decrypt_payload(g, fresh);
    auto m2_read = member2.group_decrypt_payload(g, fresh);
    bool members_open = m1_read.ok() && m2_read.ok();

    CriterionResult c;
    c.number = 8;
    c.name = "secure_group";
    c.passed = all_read && !leaked && eaves_blind && evictee_locked && members_open;
    c.detail = "member decrypts " + std::to_string(member_reads) + "/" +
               std::to_string(expected_reads) + "; plaintext on wire: " +
               (leaked ? "LEAKED" : "never") + "; evictee locked out: " +
               (evictee_locked ? "yes" : "no");
    return c;
}

/// 9. Exactly-once multicast over 100 random group sizes.
inline CriterionResult criterion_multicast(std::uint64_t seed) {
    std::mt19937_64 rng(seed + 900);
    int ok_trials = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        int n = 2 + int(rng() % 15);
        Simulation sim(seed + 910 + trial, kBits);
        auto ring = detail::build_ring(sim, n, "lan", kBits);
        Node& origin = *ring.members[rng() % n];
        auto pipe = origin.open_propagate_pipe(ring.root, "mc");
        std::map<std::string, int> deliveries;
        for (Node* node : ring.members)
            node->set_pipe_handler(pipe.pipe_id, [&deliveries, node](const PeerId&, byte_view) {
                deliveries[node->label()]++;
            });
        std::uint64_t tx_before = sim.metrics().counter("propagate_tx");
        std::uint64_t dup_before = sim.metrics().counter("propagate_dup");
        origin.propagate(pipe, to_bytes("x"));
        sim.run_for(8000);
        bool every_once = deliveries.size() == std::size_t(n);
        for (const auto& [label, count] : deliveries) every_once &= (count == 1);
        bool tx_ok = sim.metrics().counter("propagate_tx") - tx_before == std::uint64_t(n - 1);
        bool no_dups = sim.metrics().counter("propagate_dup") == dup_before;
        if (every_once && tx_ok && no_dups) ok_trials++;
    }
    CriterionResult c;
    c.number = 9;
    c.name = "exactly_once_multicast";
    c.passed = ok_trials == trials;
    c.detail = std::to_string(ok_trials) + "/" + std::to_string(trials) +
               " random groups delivered member-count copies with N-1 transmissions";
    return c;
}

/// 10. Discovery scope isolation and single-crash fault tolerance.
inline CriterionResult criterion_discovery_scope(std::uint64_t seed) {
    Simulation sim(seed + 1000, kBits);
    auto ring = detail::build_ring(sim, 12);
    Node& creator = *ring.members[0];

    bool pa = false, pb = false;
    GroupId ga = creator.create_group(ring.root, "groupA", group_policy::open,
                                      [&pa](result<void> r) { pa = r.ok(); });
    GroupId gb = creator.create_group(ring.root, "groupB", group_policy::open,
                                      [&pb](result<void> r) { pb = r.ok(); });
    sim.await([&]() { return pa && pb; }, 30000);

    // first 8 members join both groups
    std::vector<Node*> joined;
    for (int i = 0; i < 8; ++i) {
        Node* n = ring.members[i];
        for (GroupId g : {ga, gb}) {
            if (n == &creator) continue;
            bool got = false;
            n->dht_get(ring.root, g.id, [&](result<std::vector<DhtRecord>> r) {
                if (r.ok() && !r.value.empty())
                    n->learn_group(decode_advertisement(r.value.front().payload, kBits));
                got = true;
            });
            sim.await([&got]() { return got; }, 30000);
            bool j = false;
            n->join_group(g, std::nullopt, [&j](result<void> r) { j = r.ok(); });
            if (!sim.await([&j]() { return j; }, 60000))
                return CriterionResult{10, "discovery_scope", false, "group join failed"};
            sim.run_rounds(1);
        }
        joined.push_back(n);
    }
    sim.run_rounds(2 * kBits);

    // publish 10 resources in group A only
    for (int i = 0; i < 10; ++i) {
        Node* host = joined[i % joined.size()];
        bool published = false;
        host->serve_resource(ga, "/res" + std::to_string(i),
                             [](const CoapMessage&) { return CoapServerResponse{}; },
                             "resource-" + std::to_string(i),
                             [&published](result<void> r) { published = r.ok(); });
        sim.await([&published]() { return published; }, 30000);
    }
    sim.run_rounds(4);

    // 500 cross-group queries: all must come back empty
    std::size_t cross_hits = 0, cross_done = 0;
    std::mt19937_64 rng(seed + 1001);
    for (int i = 0; i < 500; ++i) {
        Node* reader = joined[rng() % joined.size()];
        bool done = false;
        reader->discover(gb, "resource-" + std::to_string(i % 10),
                         [&](result<std::vector<Advertisement>> r) {
                             done = true;
                             if (r.ok() && !r.value.empty()) cross_hits++;
                         });
        sim.await([&done]() { return done; }, 30000);
        cross_done++;
    }

    // crash the owner of one resource key in A, stabilize, rediscover all
    NodeId key0 = discovery_key(ga, "resource-0", kBits);
    std::vector<NodeId> ga_ids;
    for (Node* n : joined) ga_ids.push_back(n->id().id);
    // creator is also a member of ga
    ga_ids.push_back(creator.id().id);
    auto ga_oracle = RingOracle::from_ids(ga_ids);
    NodeId owner = ga_oracle.successor_of_key(key0);
    for (Node* n : ring.members)
        if (n->id().id == owner) n->crash();
    sim.run_rounds(4 * kBits);

    std::size_t after_crash_found = 0;
    for (int i = 0; i < 10; ++i) {
        Node* reader = nullptr;
        for (Node* n : joined)
            if (!n->crashed()) reader = n;
        bool done = false;
        reader->discover(ga, "resource-" + std::to_string(i),
                         [&](result<std::vector<Advertisement>> r) {
                             done = true;
                             if (r.ok() && !r.value.empty()) after_crash_found++;
                         });
        sim.await([&done]() { return done; }, 40000);
    }

    CriterionResult c;
    c.number = 10;
    c.name = "discovery_scope_and_fault_tolerance";
    c.passed = cross_done == 500 && cross_hits == 0 && after_crash_found == 10;
    c.detail = std::to_string(cross_hits) + "/500 cross-group queries leaked; " +
               std::to_string(after_crash_found) + "/10 resources discoverable after owner crash";
    return c;
}

/// 11. Codec round trip and compactness over 500 random advertisements.
inline CriterionResult criterion_codec(std::uint64_t seed) {
    std::mt19937_64 rng(seed + 1100);
    const auto& known = TagTable::entries();
    auto rand_string = [&rng](int len) {
        std::string s;
        for (int i = 0; i < len; ++i) s.push_back(char('a' + rng() % 26));
        return s;
    };
    std::size_t roundtrips = 0, compact = 0, compact_total = 0;
    double ratio_sum = 0;
    for (int i = 0; i < 500; ++i) {
        Advertisement a;
        a.kind = static_cast<adv_kind>(rng() % 4);
        a.subject_id = hash_to_id("s" + std::to_string(rng()), kBits);
        a.group_scope = GroupId{hash_to_id("g" + std::to_string(rng()), kBits)};
        a.name = rand_string(1 + int(rng() % 24));
        a.version = std::uint8_t(rng());
        a.expiration_ms = rng();
        bool known_only = (i % 2) == 0;
        int attrs = 1 + int(rng() % 6);
        for (int k = 0; k < attrs; ++k) {
            std::string key = known_only ? std::string(known[rng() % known.size()])
                                         : "x-" + rand_string(5);
            a.attributes[key] = rand_string(1 + int(rng() % 16));
        }
        if (rng() % 2)
            a.endpoints.push_back(
                {transport_kind::mem, "seg" + std::to_string(rng() % 4) + "/" + rand_string(4)});
        auto bytes = encode_advertisement(a);
        if (decode_advertisement(bytes, kBits) == a) roundtrips++;
        if (known_only) {
            compact_total++;
            auto plain = render_plain(a);
            if (bytes.size() < plain.size()) compact++;
            ratio_sum += double(bytes.size()) / double(plain.size());
        }
    }
    CriterionResult c;
    c.number = 11;
    c.name = "codec";
    c.passed = roundtrips == 500 && compact == compact_total;
    c.detail = std::to_string(roundtrips) + "/500 bit-exact; " + std::to_string(compact) + "/" +
               std::to_string(compact_total) + " well-known-key records smaller than text (mean "
               "ratio " +
               detail::format_double(compact_total ? ratio_sum / double(compact_total) : 0) + ")";
    return c;
}

/// Canned lossy scenario used by the determinism criterion.
inline std::string determinism_scenario_text() {
    return R"(idbits 16
segment lan mtu=512 bw=125000 lat=2 loss=0.05
peer a at lan
peer b at lan
peer c at lan
at 0 join a
at 100 join b via=a
at 600 join c via=a
at 9000 publish a sensor path=/s
at 14000 discover b sensor
at 15000 request c a GET /s
at 16000 propagate a net hello
)";
}

/// 12. Seed determinism of the whole pipeline: identical seeds render
/// byte-identical reports; on a lossy scenario, different seeds diverge.
inline CriterionResult criterion_determinism() {
    auto render = [](std::uint64_t seed) {
        Scenario sc = parse_scenario_text(determinism_scenario_text(), "determinism");
        ScenarioRunner runner(std::move(sc), seed);
        MetricsReport report = runner.run();
        return report.to_lines();
    };
    std::string a1 = render(42);
    std::string a2 = render(42);
    std::string b = render(43);
    CriterionResult c;
    c.number = 12;
    c.name = "determinism";
    c.passed = (a1 == a2) && (a1 != b);
    c.detail = std::string("same-seed reports byte-identical: ") + (a1 == a2 ? "yes" : "NO") +
               "; different seeds diverge on lossy links: " + (a1 != b ? "yes" : "NO");
    return c;
}

inline BenchReport run_acceptance(std::uint64_t seed) {
    BenchReport report;
    auto [c1, c2] = criterion_lookup_and_hops(seed);
    report.results.push_back(c1);
    report.results.push_back(c2);
    report.results.push_back(criterion_churn_survival(seed));
    report.results.push_back(criterion_convergence(seed));
    report.results.push_back(criterion_transparent_routing(seed));
    report.results.push_back(criterion_fragmentation(seed));
    report.results.push_back(criterion_backoff(seed));
    report.results.push_back(criterion_secure_group(seed));
    report.results.push_back(criterion_multicast(seed));
    report.results.push_back(criterion_discovery_scope(seed));
    report.results.push_back(criterion_codec(seed));
    report.results.push_back(criterion_determinism());
    return report;
}

} // namespace embchord::sim::bench
