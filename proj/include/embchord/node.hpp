#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "embchord/advertisement.hpp"
#include "embchord/coap.hpp"
#include "embchord/dht.hpp"
#include "embchord/envelope.hpp"
#include "embchord/groupkeys.hpp"
#include "embchord/ids.hpp"
#include "embchord/link.hpp"
#include "embchord/routing.hpp"
#include "embchord/sim/clock.hpp"
#include "embchord/sim/metrics.hpp"
#include "embchord/sim/network.hpp"
#include "embchord/sim/rng.hpp"
#include "embchord/wire.hpp"

namespace embchord {

/// Protocol timing and sizing constants. Defaults are the deployment
/// values; tests occasionally tighten them.
struct SimConfig {
    std::uint64_t stabilize_interval_ms = 500;  // T_stab
    std::uint64_t rpc_timeout_ms = 1000;        // per-probe failure detection
    std::uint64_t lookup_retry_ms = 2000;
    std::uint64_t lookup_timeout_ms = 8000;     // 16 * T_stab
    std::uint64_t reassembly_window_ms = 5000;  // T_reasm
    unsigned successor_list_length = 4;         // r: replication factor
    std::uint64_t key_grace_ms = 10000;         // G: old-key decrypt window
    unsigned replica_lease_rounds = 8;          // prune unrefreshed replicas after this many rounds
    std::uint8_t default_ttl = 16;
    std::uint64_t put_timeout_ms = 4000;
    std::uint64_t get_candidate_timeout_ms = 2000;
    std::uint64_t non_response_window_ms = 2000;
    std::uint64_t advert_lifetime_ms = 3600000;
    std::size_t dedup_window = 1024;
    unsigned dead_after_failures = 2;           // consecutive probe timeouts before a peer counts as dead
    std::size_t transfer_batch = 120;           // records per TRANSFER envelope
};

class Node;

/// Services the harness provides to every node: the shared clock, the
/// simulated network, randomness, metrics, and delivery instrumentation.
struct NodeContext {
    virtual ~NodeContext() = default;
    virtual sim::EventLoop& loop() = 0;
    virtual sim::SimNetwork& network() = 0;
    virtual sim::Rng& rng() = 0;
    virtual sim::MetricsReport& metrics() = 0;
    virtual unsigned ring_bits() const = 0;
    virtual const SimConfig& config() const = 0;
    virtual void notify_delivery(const Node& at, const MessageEnvelope& env) = 0;
    virtual void notify_drop(const NodeId& trace_src, std::uint64_t trace_corr,
                             const std::string& reason) = 0;
};

template <typename T>
using callback = std::function<void(result<T>)>;
using void_callback = std::function<void(result<void>)>;

struct LookupResult {
    PeerDescriptor node;
    unsigned hops = 0;
    std::vector<PeerDescriptor> replica_chain;
};

struct UnicastPipe {
    ResourceId pipe_id;
    PeerId remote;
    GroupId group;
};

struct PropagatePipe {
    ResourceId pipe_id;
    GroupId group;
};

/// Best-effort outcome of a propagate send: what the origin can assert
/// synchronously. Per-member delivery is observable through the harness.
struct PropagateReport {
    std::size_t known_members = 0;
    bool dispatched = false;
    std::vector<PeerId> missed;
};

struct CoapServerResponse {
    std::uint8_t code = coap_code::content;
    byte_buffer payload;
    std::uint16_t content_format = 0;
};

using resource_handler = std::function<CoapServerResponse(const CoapMessage&)>;

struct ResourceEntry {
    std::string path;
    resource_handler handler;
    std::string resource_name;
    GroupId group;
};

using pipe_handler = std::function<void(const PeerId& from, byte_view data)>;

/// A full overlay peer: transport attachments, one Chord ring per joined
/// peergroup, replicated record storage, group keys, pipes, and the CoAP
/// layer. All state is mutated only from this node's event handlers; the
/// harness may run any number of nodes in one thread deterministically.
class Node {
public:
    Node(NodeContext& ctx, std::string label)
        : ctx_(ctx),
          bits_(ctx.ring_bits()),
          id_(peer_id_from_name(label, ctx.ring_bits())),
          label_(std::move(label)) {}

    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    const PeerId& id() const noexcept { return id_; }
    const std::string& label() const noexcept { return label_; }
    bool crashed() const noexcept { return crashed_; }

    PeerDescriptor self_descriptor() const {
        PeerDescriptor d{id_, {}};
        for (const auto& [ep, profile] : attachments_) d.endpoints.push_back(ep);
        return d;
    }

    // ------------------------------------------------------------------
    // transports
    // ------------------------------------------------------------------

    /// Attaches this peer to a segment. A second attachment turns the peer
    /// into a bridge, which re-announces itself in every joined ring.
    void register_transport(const EndpointAddress& ep, const LinkProfile& profile) {
        for (const auto& [existing, p] : attachments_)
            if (existing == ep) throw config_error("endpoint already registered on this peer");
        if (!ctx_.network().has_segment(ep.segment()))
            ctx_.network().add_segment(ep.segment(), profile);
        ctx_.network().attach(id_, ep,
                              [this](const EndpointAddress& rx, const EndpointAddress& from,
                                     Fragment f, sim::TxMeta meta) {
                                  on_fragment(rx, from, std::move(f), std::move(meta));
                              });
        attachments_.emplace_back(ep, profile);
        conn_.learn(id_, {ep});
        if (is_bridge())
            for (auto& [gid, rt] : groups_)
                if (rt.joined) publish_peer_advertisement(gid);
    }

    bool is_bridge() const {
        std::set<std::string> segs;
        for (const auto& [ep, p] : attachments_)
            if (ep.kind != transport_kind::tcp) segs.insert(ep.segment());
        return segs.size() >= 2;
    }

    const std::vector<std::pair<EndpointAddress, LinkProfile>>& attachments() const {
        return attachments_;
    }

    /// Fail-stop crash: the node falls silent and its endpoints go dark.
    void crash() {
        crashed_ = true;
        ctx_.network().detach_all(id_);
    }

    // ------------------------------------------------------------------
    // peergroups
    // ------------------------------------------------------------------

    /// Founds the root ("net") group: a ring of one, no parent.
    GroupId create_root_group(const std::string& name) {
        GroupId root{hash_to_id(name, bits_)};
        auto& rt = groups_[root];
        if (rt.joined) return root;
        rt.id = root;
        rt.name = name;
        rt.policy = group_policy::open;
        rt.authority = self_descriptor();
        become_singleton_ring(rt);
        rt.members.insert(id_);
        ensure_maintenance();
        publish_peer_advertisement(root);
        return root;
    }

    /// Creates a child group. The group id is hash(parent ‖ name), so the
    /// same (parent, name) always yields the same group. Its advertisement
    /// is published into the PARENT ring; the group gets a fresh ring with
    /// this node as first member, plus a key and admission secret when
    /// secured.
    GroupId create_group(const GroupId& parent, const std::string& name, group_policy policy,
                         void_callback published) {
        require_member(parent, "create_group requires parent membership");
        GroupId gid = group_id_from_name(parent, name, bits_);
        auto& rt = groups_[gid];
        if (rt.joined && rt.authority.id == id_) {
            if (published) published(result<void>::success()); // duplicate (parent,name): same id
            return gid;
        }
        rt.id = gid;
        rt.name = name;
        rt.parent = parent;
        rt.policy = policy;
        rt.authority = self_descriptor();
        if (policy == group_policy::secured) {
            rt.admission_secret = random_key();
            GroupKey first{1, random_key()};
            rt.keyring.install(first, now(), cfg().key_grace_ms);
        }
        become_singleton_ring(rt);
        rt.members.insert(id_);
        publish_peer_advertisement(gid);

        Advertisement adv = make_group_advertisement(rt);
        DhtRecord rec{gid.id, encode_advertisement(adv), id_, adv.expiration_ms};
        dht_put(parent, rec, std::move(published));
        return gid;
    }

    /// Makes the root group joinable without an advertisement: its id is
    /// pure convention (hash of the well-known name), it has no parent.
    GroupId learn_root_group(const std::string& name) {
        GroupId root{hash_to_id(name, bits_)};
        auto& rt = groups_[root];
        if (rt.joined) return root;
        rt.id = root;
        rt.name = name;
        rt.parent.reset();
        rt.policy = group_policy::open;
        return root;
    }

    /// Ingests a Group advertisement discovered in the parent ring, making
    /// the group joinable from this node.
    GroupId learn_group(const Advertisement& adv) {
        if (adv.kind != adv_kind::group) throw config_error("not a group advertisement");
        GroupId gid{adv.subject_id};
        auto& rt = groups_[gid];
        if (rt.joined) return gid;
        rt.id = gid;
        rt.name = adv.name;
        // a self-scoped advertisement announces a root group
        if (adv.group_scope.id == adv.subject_id)
            rt.parent.reset();
        else
            rt.parent = adv.group_scope;
        auto pol = adv.attributes.find("policy");
        rt.policy = (pol != adv.attributes.end() && pol->second == "secured")
                        ? group_policy::secured
                        : group_policy::open;
        auto auth = adv.attributes.find("peer");
        if (auth != adv.attributes.end()) {
            rt.authority.id = PeerId{NodeId::from_bytes_be(from_hex(auth->second), bits_)};
            rt.authority.endpoints = adv.endpoints;
            learn(rt.authority);
        }
        return gid;
    }

    bool knows_group(const GroupId& g) const { return groups_.contains(g); }
    bool is_member(const GroupId& g) const {
        auto it = groups_.find(g);
        return it != groups_.end() && it->second.joined;
    }

    group_policy policy_of(const GroupId& g) const { return runtime(g).policy; }
    const std::string& group_name(const GroupId& g) const { return runtime(g).name; }
    std::optional<GroupId> parent_of(const GroupId& g) const { return runtime(g).parent; }
    const std::set<PeerId>& members_of(const GroupId& g) const { return runtime(g).members; }
    const GroupKeyring& keyring_of(const GroupId& g) const { return runtime(g).keyring; }

    /// Walks parent links up to the root; cycles would throw.
    std::vector<GroupId> parent_chain(const GroupId& g) const {
        std::vector<GroupId> chain;
        std::set<GroupId> seen;
        auto cur = runtime(g).parent;
        while (cur) {
            if (!seen.insert(*cur).second) throw config_error("cycle in group parent chain");
            chain.push_back(*cur);
            auto it = groups_.find(*cur);
            if (it == groups_.end()) break;
            cur = it->second.parent;
        }
        return chain;
    }

    /// Admission token for a secured group; only the creator holds the
    /// admission secret. Handed to the member out of band.
    Credential issue_credential(const GroupId& g, const PeerId& member) {
        auto& rt = runtime(g);
        if (!rt.admission_secret)
            throw config_error("only the group authority can issue credentials");
        return embchord::issue_credential(*rt.admission_secret, member, g, now());
    }

    void set_credential(const GroupId& g, Credential cred) {
        runtime(g).credential = std::move(cred);
    }

    /// Joins a group: parent membership is required; secured groups also
    /// need a valid credential, and the current group key arrives sealed
    /// under the credential authenticator before the ring join starts.
    void join_group(const GroupId& g, std::optional<Credential> credential, void_callback cb,
                    std::optional<PeerDescriptor> bootstrap = std::nullopt) {
        auto it = groups_.find(g);
        if (it == groups_.end()) {
            fail(cb, errc::rejected);
            return;
        }
        auto& rt = it->second;
        if (rt.joined) {
            complete(cb);
            return;
        }
        if (rt.parent && !is_member(*rt.parent)) {
            fail(cb, errc::rejected);
            return;
        }
        PeerDescriptor boot = bootstrap.value_or(rt.authority);
        if (rt.policy == group_policy::secured) {
            if (!credential) {
                fail(cb, errc::unauthorized);
                return;
            }
            rt.credential = *credential;
            request_group_key(g, rpc::key_op::join_request,
                              [this, g, boot, cb](result<void> r) {
                                  if (!r.ok()) {
                                      fail(cb, r.err);
                                      return;
                                  }
                                  join_ring(g, boot, cb);
                              });
        } else {
            join_ring(g, boot, cb);
        }
    }

    /// Authority-side: drops a member from the distribution list, so the
    /// next rotation locks it out.
    void evict_member(const GroupId& g, const PeerId& member) {
        auto& rt = runtime(g);
        if (!rt.admission_secret) throw config_error("only the group authority can evict");
        rt.members.erase(member);
        rt.issued.erase(member);
    }

    /// Increments the key epoch and redistributes to current members over
    /// per-member sealed unicast. The old key stays decrypt-only for the
    /// grace window.
    void rotate_key(const GroupId& g, void_callback cb) {
        auto& rt = runtime(g);
        if (!rt.admission_secret) {
            fail(cb, errc::unauthorized);
            return;
        }
        GroupKey next{rt.keyring.current_id() + 1, random_key()};
        rt.keyring.install(next, now(), cfg().key_grace_ms);
        for (const auto& member : rt.members) {
            if (member == id_) continue;
            auto cred = rt.issued.find(member);
            if (cred == rt.issued.end()) continue;
            rpc::KeyMgmt msg;
            msg.op = rpc::key_op::key_update;
            msg.sender = self_descriptor();
            msg.key_id = next.key_id;
            msg.sealed = seal_key(next, cred->second.authenticator);
            MessageEnvelope env = make_envelope(payload_kind::key_mgmt, g, member.id, msg.encode());
            send_to_peer(g, descriptor_of(member), std::move(env));
        }
        complete(cb);
    }

    /// Encrypts under the group's current key; nonce is (sender low 32
    /// bits ‖ per-sender counter).
    EncryptedPayload group_encrypt_payload(const GroupId& g, byte_view plaintext) {
        auto& rt = runtime(g);
        const GroupKey* key = rt.keyring.current();
        if (!key) throw config_error("no group key held for encryption");
        return embchord::group_encrypt(*key, plaintext, make_nonce(id_, nonce_counter_++));
    }

    result<byte_buffer> group_decrypt_payload(const GroupId& g, const EncryptedPayload& p) {
        auto it = groups_.find(g);
        if (it == groups_.end()) return result<byte_buffer>::failure(errc::stale_key);
        auto r = it->second.keyring.decrypt(p, now());
        if (r.err == errc::stale_key) {
            ctx_.metrics().count("decrypt_stale_key");
            maybe_fetch_key(g);
        } else if (r.err == errc::tampered) {
            ctx_.metrics().count("decrypt_tamper");
        }
        return r;
    }

    // ------------------------------------------------------------------
    // chord ring operations
    // ------------------------------------------------------------------

    /// Resolves the live peer owning `key`: first clockwise id >= key.
    /// hops counts remote forwarding steps. Retries internally; gives up
    /// with unreachable_ring after the lookup window.
    void find_successor(const GroupId& g, const NodeId& key, callback<LookupResult> cb) {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.joined) {
            if (cb) cb(result<LookupResult>::failure(errc::rejected));
            return;
        }
        std::uint64_t rid = next_request_id_++;
        pending_lookups_[rid] =
            pending_lookup{g, key, std::move(cb), 1, now() + cfg().lookup_timeout_ms};
        start_lookup_attempt(rid);
        schedule_lookup_retry(rid);
    }

    /// Highest-indexed known live peer strictly inside (self, key); self
    /// when none qualifies.
    PeerId closest_preceding_node(const GroupId& g, const NodeId& key) const {
        const auto& rt = runtime(g);
        for (auto it = rt.fingers.rbegin(); it != rt.fingers.rend(); ++it) {
            if (!it->has_value()) continue;
            const PeerId& f = **it;
            if (f != id_ && alive(f) && conn_.knows(f) &&
                in_interval(f.id, id_.id, key, interval_kind::open_open))
                return f;
        }
        for (auto it = rt.successors.rbegin(); it != rt.successors.rend(); ++it) {
            if (*it != id_ && alive(*it) && conn_.knows(*it) &&
                in_interval(it->id, id_.id, key, interval_kind::open_open))
                return *it;
        }
        return id_;
    }

    /// Routes the record to the key's owner, which stores it and pushes
    /// replicas to its r-1 successors before acknowledging.
    void dht_put(const GroupId& g, const DhtRecord& record, void_callback cb) {
        if (record.expired(now())) {
            fail(cb, errc::rejected);
            return;
        }
        find_successor(g, record.key, [this, g, record, cb](result<LookupResult> r) {
            if (!r.ok()) {
                fail(cb, r.err == errc::unreachable_ring ? errc::unreachable_ring : r.err);
                return;
            }
            if (r.value.node.id == id_) {
                store_and_replicate(g, record);
                complete(cb);
                return;
            }
            std::uint64_t rid = next_request_id_++;
            pending_puts_[rid] = pending_put{cb};
            rpc::Put msg{rid, record, self_descriptor()};
            MessageEnvelope env =
                make_envelope(payload_kind::put, g, r.value.node.id.id, msg.encode());
            send_to_peer(g, r.value.node, std::move(env));
            ctx_.loop().schedule_after(cfg().put_timeout_ms, [this, rid]() {
                auto it = pending_puts_.find(rid);
                if (it == pending_puts_.end()) return;
                auto cb2 = std::move(it->second.cb);
                pending_puts_.erase(it);
                fail(cb2, errc::timeout);
            });
        });
    }

    /// Fetches all live records under `key` from the first reachable
    /// member of the replica set, failing over along the successor chain.
    void dht_get(const GroupId& g, const NodeId& key, callback<std::vector<DhtRecord>> cb) {
        dht_get_ex(g, key, [cb](result<std::vector<DhtRecord>> r, unsigned) {
            if (cb) cb(std::move(r));
        });
    }

    using get_ex_callback = std::function<void(result<std::vector<DhtRecord>>, unsigned hops)>;

    void dht_get_ex(const GroupId& g, const NodeId& key, get_ex_callback cb) {
        find_successor(g, key, [this, g, key, cb](result<LookupResult> r) {
            if (!r.ok()) {
                if (cb) cb(result<std::vector<DhtRecord>>::failure(errc::not_found), 0);
                return;
            }
            std::vector<PeerDescriptor> candidates;
            auto add = [&candidates](const PeerDescriptor& d) {
                for (const auto& c : candidates)
                    if (c.id == d.id) return;
                candidates.push_back(d);
            };
            add(r.value.node);
            for (const auto& d : r.value.replica_chain) add(d);
            std::uint64_t rid = next_request_id_++;
            pending_gets_[rid] =
                pending_get{g, key, std::move(candidates), 0, std::move(cb), r.value.hops};
            send_get_to_candidate(rid);
        });
    }

    // ------------------------------------------------------------------
    // advertisements / discovery
    // ------------------------------------------------------------------

    /// Publishes an advertisement under its canonical discovery name
    /// (group scope ‖ name) with replication.
    void publish_advertisement(const GroupId& g, const Advertisement& adv, void_callback cb) {
        byte_buffer encoded = encode_advertisement(adv);
        ctx_.metrics().sample("codec_ratio",
                              double(encoded.size()) / double(render_plain(adv).size()));
        DhtRecord rec{discovery_key(adv.group_scope, adv.name, bits_), std::move(encoded), id_,
                      adv.expiration_ms};
        dht_put(g, rec, std::move(cb));
    }

    /// DHT-backed lookup of every live advertisement published under
    /// `name` in this group — O(log N) overlay hops, no flooding.
    void discover(const GroupId& g, const std::string& name,
                  callback<std::vector<Advertisement>> cb) {
        std::uint64_t started = now();
        NodeId key = discovery_key(g, name, bits_);
        dht_get_ex(g, key, [this, started, cb](result<std::vector<DhtRecord>> r, unsigned hops) {
            if (!r.ok()) {
                if (cb) cb(result<std::vector<Advertisement>>::failure(r.err));
                return;
            }
            ctx_.metrics().sample("discovery_hops", hops);
            ctx_.metrics().sample("discovery_latency_ms", double(now() - started));
            std::vector<Advertisement> advs;
            for (const auto& rec : r.value) {
                if (rec.expired(now())) continue;
                try {
                    Advertisement a = decode_advertisement(rec.payload, bits_);
                    if (a.expiration_ms > now()) advs.push_back(std::move(a));
                } catch (const malformed_error&) {
                    ctx_.metrics().count("malformed_advertisement");
                }
            }
            if (cb) cb(result<std::vector<Advertisement>>::success(std::move(advs)));
        });
    }

    // ------------------------------------------------------------------
    // pipes
    // ------------------------------------------------------------------

    Advertisement make_pipe_advertisement(const GroupId& g, const std::string& pipe_name,
                                          bool propagate) {
        Advertisement adv;
        adv.kind = adv_kind::pipe;
        adv.subject_id = discovery_key(g, "pipe:" + pipe_name, bits_);
        adv.group_scope = g;
        adv.name = pipe_name;
        adv.attributes["peer"] = id_.to_hex();
        adv.attributes["type"] = propagate ? "propagate" : "unicast";
        adv.endpoints = self_descriptor().endpoints;
        adv.expiration_ms = now() + cfg().advert_lifetime_ms;
        return adv;
    }

    /// Binds a unicast pipe to the peer named in the advertisement.
    void open_unicast_pipe(const GroupId& g, const Advertisement& adv, callback<UnicastPipe> cb) {
        if (adv.kind != adv_kind::pipe || adv.expiration_ms <= now()) {
            if (cb) cb(result<UnicastPipe>::failure(errc::binding_failed));
            return;
        }
        auto host = adv.attributes.find("peer");
        if (host == adv.attributes.end()) {
            if (cb) cb(result<UnicastPipe>::failure(errc::binding_failed));
            return;
        }
        PeerId remote{NodeId::from_bytes_be(from_hex(host->second), bits_)};
        learn(PeerDescriptor{remote, adv.endpoints});
        if (!resolve_route(conn_, id_, remote) && remote != id_) {
            if (cb) cb(result<UnicastPipe>::failure(errc::binding_failed));
            return;
        }
        UnicastPipe pipe{ResourceId{adv.subject_id}, remote, g};
        if (cb) cb(result<UnicastPipe>::success(std::move(pipe)));
    }

    /// Sends one datagram on a bound pipe; encrypted automatically in
    /// secured groups.
    void pipe_send(const UnicastPipe& pipe, byte_view data, void_callback delivered = nullptr) {
        byte_buffer body(data.begin(), data.end());
        std::uint8_t flags = 0;
        if (member_holds_key(pipe.group)) {
            body = encode_encrypted_payload(group_encrypt_payload(pipe.group, data));
            flags |= kFlagEncrypted;
        }
        rpc::PipeData msg{pipe.pipe_id, std::move(body)};
        MessageEnvelope env =
            make_envelope(payload_kind::pipe_data, pipe.group, pipe.remote.id, msg.encode());
        env.flags |= flags;
        send_to_peer(pipe.group, descriptor_of(pipe.remote), std::move(env), std::move(delivered));
    }

    PropagatePipe open_propagate_pipe(const GroupId& g, const std::string& pipe_name) {
        require_member(g, "propagate pipe requires group membership");
        return PropagatePipe{ResourceId{discovery_key(g, "pipe:" + pipe_name, bits_)}, g};
    }

    void set_pipe_handler(const ResourceId& pipe, pipe_handler handler) {
        pipe_handlers_[pipe] = std::move(handler);
    }

    /// Group multicast: walks the ring's successor chain, giving N-1
    /// overlay transmissions for N members, each member delivering once
    /// (dedup on (src, correlation_id)).
    PropagateReport propagate(const PropagatePipe& pipe, byte_view payload) {
        auto& rt = runtime(pipe.group);
        require_member(pipe.group, "propagate requires group membership");
        PropagateReport report;
        report.known_members = rt.members.size();

        std::uint64_t corr = next_correlation_++;
        mark_propagate_seen(rt, id_.id, corr);

        byte_buffer body(payload.begin(), payload.end());
        std::uint8_t flags = kFlagPropagate;
        if (rt.policy == group_policy::secured) {
            body = encode_encrypted_payload(group_encrypt_payload(pipe.group, payload));
            flags |= kFlagEncrypted;
        }
        rpc::PipeData msg{pipe.pipe_id, std::move(body)};

        // loopback delivery first
        deliver_pipe_data(pipe.group, id_, msg, flags & kFlagEncrypted);

        PeerId succ = first_alive_successor(rt);
        if (succ == id_) {
            report.dispatched = true; // group of one: loopback only
            return report;
        }
        MessageEnvelope env =
            make_envelope(payload_kind::pipe_data, pipe.group, pipe.group.id, msg.encode());
        env.flags = flags;
        env.correlation_id = corr;
        ctx_.metrics().count("propagate_tx");
        bool sent = send_to_peer(pipe.group, descriptor_of(succ), std::move(env));
        report.dispatched = sent;
        if (!sent)
            for (const auto& m : rt.members)
                if (m != id_) report.missed.push_back(m);
        return report;
    }

    // ------------------------------------------------------------------
    // jxcoap: RESTful layer
    // ------------------------------------------------------------------

    /// Registers a handler and publishes a Resource advertisement keyed by
    /// hash(group ‖ resource_name) with replication.
    const ResourceEntry& serve_resource(const GroupId& g, const std::string& path,
                                        resource_handler handler, const std::string& resource_name,
                                        void_callback published) {
        require_member(g, "serve_resource requires group membership");
        std::string canonical = join_uri_path(split_uri_path(path));
        if (resources_.contains(canonical))
            throw config_error("duplicate resource path: " + canonical);
        ResourceEntry entry{canonical, std::move(handler), resource_name, g};
        auto [it, fresh] = resources_.emplace(canonical, std::move(entry));

        Advertisement adv;
        adv.kind = adv_kind::resource;
        adv.subject_id = discovery_key(g, resource_name, bits_);
        adv.group_scope = g;
        adv.name = resource_name;
        adv.attributes["path"] = path;
        adv.attributes["peer"] = id_.to_hex();
        adv.endpoints = self_descriptor().endpoints;
        adv.expiration_ms = now() + cfg().advert_lifetime_ms;
        publish_advertisement(g, adv, std::move(published));
        return it->second;
    }

    /// Confirmable or non-confirmable request to one peer. CON requests
    /// retransmit at ACK_TIMEOUT * 2^k until answered or the retransmit
    /// budget is spent.
    void coap_request(const GroupId& g, const PeerId& target, std::uint8_t method,
                      const std::string& path, byte_buffer payload, bool confirmable,
                      callback<CoapMessage> cb) {
        // non-members may still issue requests; secured groups answer
        // their cleartext with 4.01
        if (!groups_.contains(g)) throw config_error("coap_request against unknown group");
        CoapMessage req;
        req.type = confirmable ? coap_type::con : coap_type::non;
        req.code = method;
        req.message_id = next_mid_++;
        req.token = make_token();
        req.uri_path = split_uri_path(path);
        req.payload = std::move(payload);

        byte_buffer body = encode_coap(req);
        std::uint8_t flags = 0;
        if (member_holds_key(g)) {
            body = encode_encrypted_payload(group_encrypt_payload(g, body));
            flags |= kFlagEncrypted;
        }
        std::string tkey = to_hex(req.token);
        pending_coap entry;
        entry.group = g;
        entry.target = target;
        entry.wire_payload = body;
        entry.flags = flags;
        entry.confirmable = confirmable;
        entry.backoff_ms = kCoapAckTimeoutMs;
        entry.cb = std::move(cb);
        pending_coap_[tkey] = std::move(entry);

        transmit_coap(tkey);
        if (confirmable) {
            schedule_coap_timer(tkey);
        } else {
            std::uint64_t epoch = pending_coap_[tkey].epoch;
            ctx_.loop().schedule_after(cfg().non_response_window_ms, [this, tkey, epoch]() {
                finish_coap_timeout(tkey, epoch);
            });
        }
    }

    /// Non-confirmable request multicast over the group's propagate
    /// machinery; responses collected until the window closes.
    void coap_multicast(const GroupId& g, std::uint8_t method, const std::string& path,
                        byte_buffer payload, callback<std::vector<CoapMessage>> cb) {
        auto& rt = runtime(g);
        require_member(g, "coap_multicast requires group membership");
        CoapMessage req;
        req.type = coap_type::non;
        req.code = method;
        req.message_id = next_mid_++;
        req.token = make_token();
        req.uri_path = split_uri_path(path);
        req.payload = std::move(payload);

        byte_buffer body = encode_coap(req);
        std::uint8_t flags = kFlagPropagate;
        if (rt.policy == group_policy::secured) {
            body = encode_encrypted_payload(group_encrypt_payload(g, body));
            flags |= kFlagEncrypted;
        }
        std::string tkey = to_hex(req.token);
        pending_multicast_[tkey].cb = std::move(cb);

        std::uint64_t corr = next_correlation_++;
        mark_propagate_seen(rt, id_.id, corr);
        handle_coap_message(g, id_, req); // loopback: serve locally too

        PeerId succ = first_alive_successor(rt);
        if (succ != id_) {
            MessageEnvelope env = make_envelope(payload_kind::coap, g, g.id, std::move(body));
            env.flags = flags;
            env.correlation_id = corr;
            ctx_.metrics().count("propagate_tx");
            send_to_peer(g, descriptor_of(succ), std::move(env));
        }
        std::string k = tkey;
        ctx_.loop().schedule_after(cfg().non_response_window_ms, [this, k]() {
            auto it = pending_multicast_.find(k);
            if (it == pending_multicast_.end()) return;
            auto cb2 = std::move(it->second.cb);
            auto responses = std::move(it->second.responses);
            pending_multicast_.erase(it);
            if (cb2) cb2(result<std::vector<CoapMessage>>::success(std::move(responses)));
        });
    }

    // ------------------------------------------------------------------
    // raw envelope interface (transports layer operation)
    // ------------------------------------------------------------------

    /// Sends one envelope along a resolved route. The delivery callback is
    /// resolved by simulation instrumentation: destination receipt or an
    /// observed drop.
    void send_envelope(const RouteEntry& route, MessageEnvelope env, void_callback delivered = nullptr) {
        if (route.hops.empty()) throw config_error("route has no hops");
        byte_buffer bytes = encode_envelope(env);
        if (bytes.size() > 0xFFFF) throw config_error("envelope exceeds 2^16 bytes");
        if (env.ttl == 0) throw config_error("ttl must be positive on send");
        if (delivered) register_delivery_watch(env, std::move(delivered));
        ctx_.metrics().count("env_sent");

        const RouteHop& first = route.hops.front();
        auto my_ep = endpoint_on_segment(first.segment);
        if (!my_ep) {
            drop_trace(env, "drop_no_route");
            return;
        }
        sim::TxMeta meta;
        meta.remaining.assign(route.hops.begin() + 1, route.hops.end());
        meta.reverse = {RouteHop{id_, *my_ep, first.segment}};
        meta.trace_src = env.src.id;
        meta.trace_corr = env.correlation_id;
        meta.trace_kind = static_cast<std::uint8_t>(env.kind);
        ctx_.network().transmit(*my_ep, first.endpoint, bytes, next_envelope_id(), std::move(meta));
    }

    void set_delivery_observer(std::function<void(const MessageEnvelope&)> fn) {
        delivery_observer_ = std::move(fn);
    }

    /// Called by the harness when an envelope this node sent with a
    /// delivery callback reaches its destination (anywhere in the network).
    void resolve_delivery_watch(const MessageEnvelope& env) {
        auto it = delivery_watch_.find({env.src.id, env.correlation_id});
        if (it == delivery_watch_.end()) return;
        auto cb = std::move(it->second);
        delivery_watch_.erase(it);
        complete(cb);
    }

    /// Called by the harness when such an envelope was observably dropped.
    void resolve_delivery_drop(std::uint64_t correlation_id, errc reason) {
        auto it = delivery_watch_.find({id_.id, correlation_id});
        if (it == delivery_watch_.end()) return;
        auto cb = std::move(it->second);
        delivery_watch_.erase(it);
        fail(cb, reason);
    }

    // ------------------------------------------------------------------
    // introspection (tests and the harness)
    // ------------------------------------------------------------------

    struct RingView {
        bool joined = false;
        std::optional<PeerId> predecessor;
        std::vector<PeerId> successors;
        std::vector<std::optional<PeerId>> fingers;
        std::uint64_t rounds = 0;
    };

    RingView ring_view(const GroupId& g) const {
        const auto& rt = runtime(g);
        return RingView{rt.joined, rt.predecessor, rt.successors, rt.fingers, rt.rounds};
    }

    const RecordStore& store_of(const GroupId& g) const { return runtime(g).store; }
    const ConnectivityMap& connectivity() const { return conn_; }
    std::vector<GroupId> joined_groups() const {
        std::vector<GroupId> out;
        for (const auto& [gid, rt] : groups_)
            if (rt.joined) out.push_back(gid);
        return out;
    }

private:
    // ------------------------------------------------------------------
    // internal state
    // ------------------------------------------------------------------

    struct GroupRuntime {
        GroupId id;
        std::string name;
        std::optional<GroupId> parent;
        group_policy policy = group_policy::open;
        PeerDescriptor authority;

        bool joined = false;
        std::optional<PeerId> predecessor;
        std::vector<PeerId> successors;
        std::vector<std::optional<PeerId>> fingers;
        unsigned next_finger = 0;
        std::uint64_t rounds = 0;
        RecordStore store;

        GroupKeyring keyring;
        std::optional<crypto::key256> admission_secret; // authority only
        std::optional<Credential> credential;           // own membership token
        std::map<PeerId, Credential> issued;            // authority: per-member tokens
        std::set<PeerId> members;                       // locally known view

        std::deque<std::pair<NodeId, std::uint64_t>> dedup_fifo;
        std::set<std::pair<NodeId, std::uint64_t>> dedup_seen;

        std::optional<std::uint64_t> join_rid; // lookup id while joining
        void_callback join_cb;
        bool awaiting_transfer = false;
        void_callback key_cb; // pending key fetch/join
        bool key_fetch_inflight = false;
    };

    struct pending_lookup {
        GroupId group;
        NodeId key;
        callback<LookupResult> cb;
        unsigned attempt = 1;
        std::uint64_t deadline = 0;
    };

    struct pending_put {
        void_callback cb;
    };

    struct pending_get {
        GroupId group;
        NodeId key;
        std::vector<PeerDescriptor> candidates;
        std::size_t next_candidate = 0;
        get_ex_callback cb;
        unsigned hops = 0;
    };

    struct pending_stab {
        GroupId group;
        PeerId target;
        bool is_pred_probe = false;
    };

    struct pending_coap {
        GroupId group;
        PeerId target;
        byte_buffer wire_payload;
        std::uint8_t flags = 0;
        bool confirmable = true;
        unsigned attempt = 0; // retransmissions performed
        std::uint64_t backoff_ms = kCoapAckTimeoutMs;
        std::uint64_t epoch = 0; // invalidates stale timers
        callback<CoapMessage> cb;
    };

    struct pending_multicast {
        callback<std::vector<CoapMessage>> cb;
        std::vector<CoapMessage> responses;
    };

    struct cached_response {
        byte_buffer wire_payload;
        std::uint8_t flags = 0;
        std::uint64_t cached_at = 0;
    };

    struct queued_send {
        GroupId group;
        PeerId target;
        MessageEnvelope env;
        std::uint64_t deadline = 0;
        void_callback delivered;
    };

    // ------------------------------------------------------------------
    // small helpers
    // ------------------------------------------------------------------

    std::uint64_t now() const { return ctx_.loop().now(); }
    const SimConfig& cfg() const { return ctx_.config(); }

    GroupRuntime& runtime(const GroupId& g) {
        auto it = groups_.find(g);
        if (it == groups_.end()) throw config_error("unknown group");
        return it->second;
    }
    const GroupRuntime& runtime(const GroupId& g) const {
        auto it = groups_.find(g);
        if (it == groups_.end()) throw config_error("unknown group");
        return it->second;
    }

    void require_member(const GroupId& g, const char* what) const {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.joined) throw config_error(what);
    }

    static void complete(const void_callback& cb) {
        if (cb) cb(result<void>::success());
    }
    static void fail(const void_callback& cb, errc e) {
        if (cb) cb(result<void>::failure(e));
    }

    crypto::key256 random_key() {
        crypto::key256 k{};
        for (auto& b : k) b = static_cast<std::uint8_t>(ctx_.rng().next());
        return k;
    }

    byte_buffer make_token() {
        byte_writer w;
        w.u64(next_token_++);
        return w.take();
    }

    std::uint32_t next_envelope_id() {
        return (static_cast<std::uint32_t>(id_.id.low64() & 0xFFFF) << 16) |
               (static_cast<std::uint32_t>(next_envelope_counter_++) & 0xFFFF);
    }

    MessageEnvelope make_envelope(payload_kind kind, const GroupId& g, const NodeId& dst,
                                  byte_buffer payload) {
        MessageEnvelope env;
        env.kind = kind;
        env.ttl = cfg().default_ttl;
        env.src = id_;
        env.dst = dst;
        env.group = g;
        env.correlation_id = next_correlation_++;
        env.payload = std::move(payload);
        return env;
    }

    PeerDescriptor descriptor_of(const PeerId& p) const {
        PeerDescriptor d{p, {}};
        if (const auto* eps = conn_.endpoints_of(p)) d.endpoints = *eps;
        return d;
    }

    void learn(const PeerDescriptor& d) {
        if (!d.valid() || d.id == id_) return;
        if (!d.endpoints.empty()) {
            conn_.learn(d.id, d.endpoints);
            retry_queued_sends();
        }
    }

    bool alive(const PeerId& p) const {
        auto it = suspect_counts_.find(p);
        return it == suspect_counts_.end() || it->second < cfg().dead_after_failures;
    }

    void mark_suspect(const PeerId& p) { suspect_counts_[p]++; }
    void clear_suspect(const PeerId& p) { suspect_counts_.erase(p); }

    std::optional<EndpointAddress> endpoint_on_segment(const std::string& segment) const {
        for (const auto& [ep, profile] : attachments_)
            if (ep.kind != transport_kind::tcp && ep.segment() == segment) return ep;
        return std::nullopt;
    }

    bool member_holds_key(const GroupId& g) const {
        auto it = groups_.find(g);
        return it != groups_.end() && it->second.policy == group_policy::secured &&
               it->second.keyring.current() != nullptr;
    }

    // ------------------------------------------------------------------
    // transmit path
    // ------------------------------------------------------------------

    /// Resolves a route and sends. Unroutable targets are parked briefly
    /// while the bridge directory refreshes; still unroutable at the
    /// deadline counts as a drop.
    bool send_to_peer(const GroupId& g, const PeerDescriptor& target, MessageEnvelope env,
                      void_callback delivered = nullptr) {
        if (crashed_) return false;
        learn(target);
        if (target.id == id_) { // self-delivery loops straight back
            if (delivered) register_delivery_watch(env, std::move(delivered));
            ctx_.loop().schedule_after(0, [this, env = std::move(env)]() mutable {
                DeliveryCtx dctx{env.src, {}};
                dispatch(std::move(env), dctx);
            });
            return true;
        }
        auto route = resolve_route(conn_, id_, target.id);
        if (!route) {
            queue_unroutable(g, target.id, std::move(env), std::move(delivered));
            return false;
        }
        send_envelope(*route, std::move(env), std::move(delivered));
        return true;
    }

    void send_via_hops(std::vector<RouteHop> hops, MessageEnvelope env) {
        if (crashed_ || hops.empty()) return;
        RouteEntry route;
        route.destination = hops.back().peer;
        route.hops = std::move(hops);
        route.next_hop = route.hops.front().endpoint;
        for (const auto& h : route.hops) route.segment_path.push_back(h.segment);
        route.cost = route.hops.size() - 1;
        send_envelope(route, std::move(env));
    }

    void queue_unroutable(const GroupId& g, const PeerId& target, MessageEnvelope env,
                          void_callback delivered) {
        ctx_.metrics().count("route_misses");
        queued_sends_.push_back(queued_send{g, target, std::move(env),
                                            now() + cfg().lookup_retry_ms, std::move(delivered)});
        refresh_bridge_directory(g);
        fetch_peer_endpoints(g, target);
        ctx_.loop().schedule_after(cfg().lookup_retry_ms + 1, [this]() { purge_queued_sends(); });
    }

    /// Pulls the target's own Peer advertisement from the ring so its
    /// endpoints enter the directory; queued sends retry on learn().
    void fetch_peer_endpoints(const GroupId& g, const PeerId& target) {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.joined) return;
        if (!peer_fetch_inflight_.insert(target).second) return;
        dht_get(g, discovery_key(g, "peer:" + target.to_hex(), bits_),
                [this, target](result<std::vector<DhtRecord>> r) {
                    peer_fetch_inflight_.erase(target);
                    if (!r.ok()) return;
                    for (const auto& rec : r.value) {
                        try {
                            Advertisement adv = decode_advertisement(rec.payload, bits_);
                            auto peer = adv.attributes.find("peer");
                            if (peer == adv.attributes.end()) continue;
                            learn(PeerDescriptor{
                                PeerId{NodeId::from_bytes_be(from_hex(peer->second), bits_)},
                                adv.endpoints});
                        } catch (const malformed_error&) {
                        }
                    }
                });
    }

    void retry_queued_sends() {
        if (queued_sends_.empty()) return;
        auto pending = std::move(queued_sends_);
        queued_sends_.clear();
        for (auto& q : pending) {
            auto route = resolve_route(conn_, id_, q.target);
            if (route) {
                send_envelope(*route, std::move(q.env), std::move(q.delivered));
            } else if (q.deadline > now()) {
                queued_sends_.push_back(std::move(q));
            } else {
                drop_trace(q.env, "drop_no_route");
            }
        }
    }

    void purge_queued_sends() {
        for (auto it = queued_sends_.begin(); it != queued_sends_.end();) {
            if (it->deadline <= now()) {
                drop_trace(it->env, "drop_no_route");
                it = queued_sends_.erase(it);
            } else {
                ++it;
            }
        }
    }

    /// Pulls fresh bridge advertisements from the group ring; single
    /// flight per group.
    void refresh_bridge_directory(const GroupId& g) {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.joined || bridge_fetch_inflight_) return;
        bridge_fetch_inflight_ = true;
        dht_get(g, discovery_key(g, "sys:bridges", bits_),
                [this](result<std::vector<DhtRecord>> r) {
                    bridge_fetch_inflight_ = false;
                    if (!r.ok()) return;
                    for (const auto& rec : r.value) {
                        try {
                            Advertisement adv = decode_advertisement(rec.payload, bits_);
                            auto peer = adv.attributes.find("peer");
                            if (peer == adv.attributes.end()) continue;
                            PeerDescriptor d{
                                PeerId{NodeId::from_bytes_be(from_hex(peer->second), bits_)},
                                adv.endpoints};
                            learn(d);
                        } catch (const malformed_error&) {
                        }
                    }
                });
    }

    void register_delivery_watch(const MessageEnvelope& env, void_callback cb) {
        delivery_watch_[{env.src.id, env.correlation_id}] = std::move(cb);
        // unresolved watches decay into drops once nothing can still arrive
        auto key = std::make_pair(env.src.id, env.correlation_id);
        ctx_.loop().schedule_after(cfg().reassembly_window_ms + cfg().lookup_timeout_ms,
                                   [this, key]() {
                                       auto it = delivery_watch_.find(key);
                                       if (it == delivery_watch_.end()) return;
                                       auto cb2 = std::move(it->second);
                                       delivery_watch_.erase(it);
                                       fail(cb2, errc::timeout);
                                   });
    }

    void drop_trace(const MessageEnvelope& env, const std::string& reason) {
        ctx_.metrics().count(reason);
        ctx_.notify_drop(env.src.id, env.correlation_id, reason);
    }

    // ------------------------------------------------------------------
    // receive path
    // ------------------------------------------------------------------

    void on_fragment(const EndpointAddress&, const EndpointAddress& from, Fragment frag,
                     sim::TxMeta meta) {
        if (crashed_) return;
        Reassembler::key key{from.to_string(), frag.envelope_id};
        auto whole = reassembler_.accept(key, std::move(frag), now());
        if (!whole) return;
        on_envelope_bytes(*whole, std::move(meta));
    }

    void on_envelope_bytes(const byte_buffer& bytes, sim::TxMeta meta) {
        MessageEnvelope env;
        try {
            env = decode_envelope(bytes, bits_);
        } catch (const malformed_error&) {
            ctx_.metrics().count("malformed_envelope");
            return;
        }
        if (!meta.remaining.empty()) {
            relay_forward(std::move(env), std::move(meta));
            return;
        }
        DeliveryCtx dctx{env.src, std::move(meta.reverse)};
        if (!env.propagate() && env.dst != id_.id) {
            ctx_.metrics().count("drop_stray");
            return;
        }
        dispatch(std::move(env), dctx);
    }

    /// Bridge duty: reassembled envelope moves to the next segment of its
    /// source route, re-fragmented for that link, TTL down by one, payload
    /// untouched.
    void relay_forward(MessageEnvelope env, sim::TxMeta meta) {
        if (env.ttl <= 1) {
            env.ttl = 0;
            drop_trace(env, "drop_ttl");
            return;
        }
        env.ttl--;
        const RouteHop next = meta.remaining.front();
        meta.remaining.erase(meta.remaining.begin());
        auto my_ep = endpoint_on_segment(next.segment);
        if (!my_ep) {
            drop_trace(env, "drop_relay_unattached");
            // tell the source its route is stale so it re-resolves
            rpc::Ctrl note{rpc::ctrl_op::route_stale, next.peer, next.segment};
            MessageEnvelope ctrl =
                make_envelope(payload_kind::ctrl, env.group, env.src.id, note.encode());
            send_via_hops(meta.reverse, std::move(ctrl));
            return;
        }
        ctx_.metrics().count("relayed");
        meta.reverse.insert(meta.reverse.begin(), RouteHop{id_, *my_ep, next.segment});
        byte_buffer bytes = encode_envelope(env);
        ctx_.network().transmit(*my_ep, next.endpoint, bytes, next_envelope_id(), std::move(meta));
    }

    struct DeliveryCtx {
        PeerId src;
        std::vector<RouteHop> reverse;
    };

    void dispatch(MessageEnvelope env, DeliveryCtx& dctx) {
        if (crashed_) return;
        ctx_.metrics().count("env_delivered");
        ctx_.notify_delivery(*this, env); // resolves the sender's delivery watch
        if (delivery_observer_) delivery_observer_(env);

        if (env.propagate()) {
            handle_propagate(env);
            return;
        }
        try {
            dispatch_by_kind(env, dctx);
        } catch (const malformed_error&) {
            ctx_.metrics().count("malformed_payload");
        }
    }

    void dispatch_by_kind(MessageEnvelope& env, DeliveryCtx& dctx) {
        switch (env.kind) {
            case payload_kind::find_succ:
                handle_find_succ(env);
                break;
            case payload_kind::find_succ_reply:
                handle_find_succ_reply(env);
                break;
            case payload_kind::notify:
                handle_notify(env, dctx);
                break;
            case payload_kind::get_pred:
                handle_get_pred(env, dctx);
                break;
            case payload_kind::get_pred_reply:
                handle_get_pred_reply(env);
                break;
            case payload_kind::put:
                handle_put(env, dctx);
                break;
            case payload_kind::put_ack:
                handle_put_ack(env);
                break;
            case payload_kind::get:
                handle_get(env, dctx);
                break;
            case payload_kind::get_reply:
                handle_get_reply(env);
                break;
            case payload_kind::transfer:
                handle_transfer(env);
                break;
            case payload_kind::pipe_data:
                handle_pipe_data(env);
                break;
            case payload_kind::coap:
                handle_coap_envelope(env);
                break;
            case payload_kind::key_mgmt:
                handle_key_mgmt(env, dctx);
                break;
            case payload_kind::ctrl:
                handle_ctrl(env);
                break;
            default:
                ctx_.metrics().count("unknown_payload_kind");
        }
    }

    // ------------------------------------------------------------------
    // propagate walk (any payload kind with the propagate flag)
    // ------------------------------------------------------------------

    void handle_propagate(MessageEnvelope& env) {
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) {
            ctx_.metrics().count("propagate_non_member_drop");
            return;
        }
        auto& rt = it->second;
        if (propagate_seen(rt, env.src.id, env.correlation_id)) {
            ctx_.metrics().count("propagate_dup");
            return;
        }
        mark_propagate_seen(rt, env.src.id, env.correlation_id);

        // forward along the ring before local processing; the walk ends
        // when the next successor is the originator
        PeerId succ = first_alive_successor(rt);
        if (succ != id_ && succ.id != env.src.id) {
            MessageEnvelope fwd = env;
            fwd.ttl = cfg().default_ttl;
            ctx_.metrics().count("propagate_tx");
            send_to_peer(env.group, descriptor_of(succ), std::move(fwd));
        }

        if (env.kind == payload_kind::pipe_data) {
            rpc::PipeData msg = rpc::PipeData::decode(env.payload, bits_);
            deliver_pipe_data(env.group, env.src, msg, env.encrypted());
        } else if (env.kind == payload_kind::coap) {
            byte_buffer body = env.payload;
            if (env.encrypted()) {
                auto plain = group_decrypt_payload(env.group, decode_encrypted_payload(body));
                if (!plain.ok()) return;
                body = std::move(plain.value);
            }
            try {
                CoapMessage msg = decode_coap(body);
                handle_coap_message(env.group, env.src, msg);
            } catch (const malformed_error&) {
                ctx_.metrics().count("malformed_payload");
            }
        }
    }

    bool propagate_seen(GroupRuntime& rt, const NodeId& src, std::uint64_t corr) const {
        return rt.dedup_seen.contains({src, corr});
    }

    void mark_propagate_seen(GroupRuntime& rt, const NodeId& src, std::uint64_t corr) {
        auto key = std::make_pair(src, corr);
        if (!rt.dedup_seen.insert(key).second) return;
        rt.dedup_fifo.push_back(key);
        while (rt.dedup_fifo.size() > cfg().dedup_window) {
            rt.dedup_seen.erase(rt.dedup_fifo.front());
            rt.dedup_fifo.pop_front();
        }
    }

    void deliver_pipe_data(const GroupId& g, const PeerId& from, const rpc::PipeData& msg,
                           bool encrypted) {
        byte_buffer plain = msg.data;
        if (encrypted) {
            auto r = group_decrypt_payload(g, decode_encrypted_payload(msg.data));
            if (!r.ok()) return; // cannot read: not a holder of this epoch's key
            plain = std::move(r.value);
        }
        ctx_.metrics().count("propagate_delivered");
        auto it = pipe_handlers_.find(msg.pipe);
        if (it != pipe_handlers_.end() && it->second) it->second(from, plain);
    }

    // ------------------------------------------------------------------
    // chord: ring membership
    // ------------------------------------------------------------------

    void become_singleton_ring(GroupRuntime& rt) {
        rt.joined = true;
        rt.predecessor.reset();
        rt.successors = {id_};
        rt.fingers.assign(bits_, std::nullopt);
        ensure_maintenance();
    }

    void join_ring(const GroupId& g, const PeerDescriptor& bootstrap, void_callback cb) {
        auto& rt = runtime(g);
        if (rt.joined) {
            complete(cb);
            return;
        }
        if (!bootstrap.valid() || bootstrap.id == id_) {
            become_singleton_ring(rt);
            rt.members.insert(id_);
            publish_peer_advertisement(g);
            complete(cb);
            return;
        }
        learn(bootstrap);
        rt.fingers.assign(bits_, std::nullopt);
        rt.join_cb = std::move(cb);

        // temporarily treat the ring as joined-through-bootstrap so the
        // lookup machinery can run; successors seed from the reply
        rt.joined = true;
        rt.successors = {bootstrap.id};
        std::uint64_t rid = next_request_id_++;
        pending_lookups_[rid] = pending_lookup{g, id_.id,
            [this, g](result<LookupResult> r) { on_join_lookup(g, std::move(r)); }, 1,
            now() + cfg().lookup_timeout_ms};
        rt.join_rid = rid;
        rpc::FindSucc msg{id_.id, self_descriptor(), rid, 1};
        MessageEnvelope env =
            make_envelope(payload_kind::find_succ, g, bootstrap.id.id, msg.encode());
        send_to_peer(g, bootstrap, std::move(env));
        schedule_lookup_retry(rid);
    }

    void on_join_lookup(const GroupId& g, result<LookupResult> r) {
        auto& rt = runtime(g);
        rt.join_rid.reset();
        if (!r.ok()) {
            rt.joined = false;
            rt.successors.clear();
            auto cb = std::move(rt.join_cb);
            rt.join_cb = nullptr;
            fail(cb, errc::unreachable);
            return;
        }
        if (r.value.node.id == id_) { // id collision with an existing member
            rt.joined = false;
            rt.successors.clear();
            auto cb = std::move(rt.join_cb);
            rt.join_cb = nullptr;
            fail(cb, errc::rejected);
            return;
        }
        learn(r.value.node);
        rt.successors = {r.value.node.id};
        for (const auto& d : r.value.replica_chain) {
            learn(d);
            append_successor(rt, d.id);
        }
        rt.predecessor.reset();
        rt.members.insert(id_);

        // request the records this node now owns; join completes on the
        // handoff TRANSFER
        rt.awaiting_transfer = true;
        rpc::Notify msg{self_descriptor(), 1};
        MessageEnvelope env =
            make_envelope(payload_kind::notify, g, r.value.node.id.id, msg.encode());
        send_to_peer(g, r.value.node, std::move(env));
        ctx_.loop().schedule_after(cfg().rpc_timeout_ms * 3, [this, g]() {
            auto& rt2 = runtime(g);
            if (!rt2.awaiting_transfer) return;
            rt2.awaiting_transfer = false; // proceed anyway; repair recovers records
            finish_join(rt2);
        });
    }

    void finish_join(GroupRuntime& rt) {
        auto cb = std::move(rt.join_cb);
        rt.join_cb = nullptr;
        ensure_maintenance();
        publish_peer_advertisement(rt.id);
        complete(cb);
    }

    void append_successor(GroupRuntime& rt, const PeerId& p) {
        if (p == id_ || !alive(p)) return;
        for (const auto& s : rt.successors)
            if (s == p) return;
        if (rt.successors.size() < cfg().successor_list_length) rt.successors.push_back(p);
    }

    PeerId first_alive_successor(GroupRuntime& rt) {
        while (!rt.successors.empty()) {
            PeerId head = rt.successors.front();
            if (head == id_ || alive(head)) return head;
            rt.successors.erase(rt.successors.begin());
        }
        rt.successors = {id_}; // isolated: fall back to a ring of one
        return id_;
    }

    // ------------------------------------------------------------------
    // chord: lookups
    // ------------------------------------------------------------------

    void start_lookup_attempt(std::uint64_t rid) {
        auto it = pending_lookups_.find(rid);
        if (it == pending_lookups_.end()) return;
        const GroupId g = it->second.group;
        const NodeId key = it->second.key;
        auto& rt = runtime(g);

        PeerId succ = first_alive_successor(rt);
        if (succ == id_) { // ring of one
            finish_lookup(rid, LookupResult{self_descriptor(), 0, {self_descriptor()}});
            return;
        }
        if (in_interval(key, id_.id, succ.id, interval_kind::open_closed)) {
            LookupResult res{descriptor_of(succ), 0, successor_descriptors(rt)};
            finish_lookup(rid, std::move(res));
            return;
        }
        PeerId next = closest_preceding_node(g, key);
        if (next == id_) next = succ;
        rpc::FindSucc msg{key, self_descriptor(), rid, 1};
        MessageEnvelope env = make_envelope(payload_kind::find_succ, g, next.id, msg.encode());
        send_to_peer(g, descriptor_of(next), std::move(env));
    }

    void schedule_lookup_retry(std::uint64_t rid) {
        ctx_.loop().schedule_after(cfg().lookup_retry_ms, [this, rid]() {
            auto it = pending_lookups_.find(rid);
            if (it == pending_lookups_.end()) return;
            if (now() >= it->second.deadline) {
                auto cb = std::move(it->second.cb);
                pending_lookups_.erase(it);
                if (cb) cb(result<LookupResult>::failure(errc::unreachable_ring));
                return;
            }
            it->second.attempt++;
            start_lookup_attempt(rid);
            schedule_lookup_retry(rid);
        });
    }

    void finish_lookup(std::uint64_t rid, LookupResult res) {
        auto it = pending_lookups_.find(rid);
        if (it == pending_lookups_.end()) return;
        auto cb = std::move(it->second.cb);
        pending_lookups_.erase(it);
        if (cb) cb(result<LookupResult>::success(std::move(res)));
    }

    std::vector<PeerDescriptor> successor_descriptors(const GroupRuntime& rt) const {
        std::vector<PeerDescriptor> out;
        for (const auto& s : rt.successors) out.push_back(descriptor_of(s));
        return out;
    }

    void handle_find_succ(MessageEnvelope& env) {
        rpc::FindSucc msg = rpc::FindSucc::decode(env.payload, bits_);
        learn(msg.origin);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        auto& rt = it->second;

        if (msg.hops > bits_ + cfg().successor_list_length) {
            ctx_.metrics().count("lookup_hop_cap");
            return; // broken ring loop; origin retries
        }

        PeerId succ = first_alive_successor(rt);
        bool resolved = (succ == id_) ||
                        in_interval(msg.target, id_.id, succ.id, interval_kind::open_closed);
        if (resolved) {
            rpc::FindSuccReply reply;
            reply.request_id = msg.request_id;
            reply.target = msg.target;
            reply.successor = (succ == id_) ? self_descriptor() : descriptor_of(succ);
            reply.hops = msg.hops;
            reply.replica_chain =
                (succ == id_) ? std::vector<PeerDescriptor>{self_descriptor()}
                              : successor_descriptors(rt);
            MessageEnvelope out = make_envelope(payload_kind::find_succ_reply, env.group,
                                                msg.origin.id.id, reply.encode());
            send_to_peer(env.group, msg.origin, std::move(out));
            return;
        }
        PeerId next = closest_preceding_node(env.group, msg.target);
        if (next == id_) next = succ;
        msg.hops++;
        MessageEnvelope fwd =
            make_envelope(payload_kind::find_succ, env.group, next.id, msg.encode());
        send_to_peer(env.group, descriptor_of(next), std::move(fwd));
    }

    void handle_find_succ_reply(MessageEnvelope& env) {
        rpc::FindSuccReply msg = rpc::FindSuccReply::decode(env.payload, bits_);
        learn(msg.successor);
        for (const auto& d : msg.replica_chain) learn(d);
        clear_suspect(msg.successor.id);
        finish_lookup(msg.request_id,
                      LookupResult{msg.successor, msg.hops, std::move(msg.replica_chain)});
    }

    // ------------------------------------------------------------------
    // chord: stabilization
    // ------------------------------------------------------------------

    void ensure_maintenance() {
        if (maintenance_running_) return;
        maintenance_running_ = true;
        ctx_.loop().schedule_after(cfg().stabilize_interval_ms, [this]() { maintenance_tick(); });
    }

    void maintenance_tick() {
        if (crashed_) return;
        for (auto& [gid, rt] : groups_)
            if (rt.joined) ring_round(gid, rt);
        std::size_t expired = reassembler_.expire_older_than(
            now() > cfg().reassembly_window_ms ? now() - cfg().reassembly_window_ms : 0);
        if (expired) ctx_.metrics().count("reassembly_expired", expired);
        purge_response_cache();
        ctx_.loop().schedule_after(cfg().stabilize_interval_ms, [this]() { maintenance_tick(); });
    }

    /// One stabilization round: probe the predecessor, reconcile with the
    /// successor, refresh one finger, repair replicas.
    void ring_round(const GroupId& g, GroupRuntime& rt) {
        rt.rounds++;
        check_predecessor(g, rt);
        stabilize(g, rt);
        fix_next_finger(g, rt);
        repair_replicas(g, rt);
    }

    void check_predecessor(const GroupId& g, GroupRuntime& rt) {
        if (!rt.predecessor || *rt.predecessor == id_) return;
        if (!alive(*rt.predecessor)) {
            rt.predecessor.reset();
            return;
        }
        probe(g, *rt.predecessor, true);
    }

    void stabilize(const GroupId& g, GroupRuntime& rt) {
        PeerId succ = first_alive_successor(rt);
        if (succ == id_) {
            // ring of one: adopt a notifying predecessor as successor
            if (rt.predecessor && *rt.predecessor != id_ && alive(*rt.predecessor)) {
                rt.successors = {*rt.predecessor};
                send_notify(g, *rt.predecessor);
            }
            return;
        }
        probe(g, succ, false);
    }

    void probe(const GroupId& g, const PeerId& target, bool is_pred) {
        std::uint64_t rid = next_request_id_++;
        pending_stab_[rid] = pending_stab{g, target, is_pred};
        rpc::GetPred msg{rid, self_descriptor()};
        MessageEnvelope env = make_envelope(payload_kind::get_pred, g, target.id, msg.encode());
        send_to_peer(g, descriptor_of(target), std::move(env));
        ctx_.loop().schedule_after(cfg().rpc_timeout_ms, [this, rid]() {
            auto it = pending_stab_.find(rid);
            if (it == pending_stab_.end()) return;
            pending_stab entry = it->second;
            pending_stab_.erase(it);
            mark_suspect(entry.target);
            auto git = groups_.find(entry.group);
            if (git == groups_.end()) return;
            auto& rt = git->second;
            if (entry.is_pred_probe) {
                if (rt.predecessor == entry.target && !alive(entry.target))
                    rt.predecessor.reset();
            } else if (!alive(entry.target)) {
                // dead successor: fail over to the next list entry
                first_alive_successor(rt);
                ctx_.metrics().count("successor_failover");
            }
        });
    }

    void send_notify(const GroupId& g, const PeerId& target) {
        rpc::Notify msg{self_descriptor(), 0};
        MessageEnvelope env = make_envelope(payload_kind::notify, g, target.id, msg.encode());
        send_to_peer(g, descriptor_of(target), std::move(env));
    }

    void handle_get_pred(MessageEnvelope& env, DeliveryCtx& dctx) {
        rpc::GetPred msg = rpc::GetPred::decode(env.payload, bits_);
        learn(msg.sender);
        clear_suspect(msg.sender.id);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        auto& rt = it->second;
        rpc::GetPredReply reply;
        reply.request_id = msg.request_id;
        if (rt.predecessor) reply.predecessor = descriptor_of(*rt.predecessor);
        reply.successors = successor_descriptors(rt);
        reply.sender = self_descriptor();
        MessageEnvelope out =
            make_envelope(payload_kind::get_pred_reply, env.group, env.src.id, reply.encode());
        if (!dctx.reverse.empty())
            send_via_hops(dctx.reverse, std::move(out));
        else
            send_to_peer(env.group, descriptor_of(env.src), std::move(out));
    }

    void handle_get_pred_reply(MessageEnvelope& env) {
        rpc::GetPredReply msg = rpc::GetPredReply::decode(env.payload, bits_);
        learn(msg.sender);
        if (msg.predecessor) learn(*msg.predecessor);
        for (const auto& d : msg.successors) learn(d);
        clear_suspect(msg.sender.id);

        auto pit = pending_stab_.find(msg.request_id);
        if (pit == pending_stab_.end()) return;
        pending_stab entry = pit->second;
        pending_stab_.erase(pit);
        auto git = groups_.find(entry.group);
        if (git == groups_.end() || !git->second.joined) return;
        auto& rt = git->second;
        if (entry.is_pred_probe) return; // liveness confirmed is all we needed

        // adopt the successor's predecessor when it sits between us
        PeerId succ = entry.target;
        std::vector<PeerId> next_list;
        if (msg.predecessor && msg.predecessor->id != id_ && alive(msg.predecessor->id) &&
            !msg.predecessor->endpoints.empty() &&
            in_interval(msg.predecessor->id.id, id_.id, succ.id, interval_kind::open_open)) {
            next_list.push_back(msg.predecessor->id);
        }
        next_list.push_back(succ);
        for (const auto& d : msg.successors) next_list.push_back(d.id);

        rt.successors.clear();
        for (const auto& p : next_list) append_successor(rt, p);
        if (rt.successors.empty()) rt.successors = {id_};

        send_notify(entry.group, first_alive_successor(rt));
    }

    void handle_notify(MessageEnvelope& env, DeliveryCtx& dctx) {
        rpc::Notify msg = rpc::Notify::decode(env.payload, bits_);
        learn(msg.sender);
        clear_suspect(msg.sender.id);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        auto& rt = it->second;
        rt.members.insert(msg.sender.id);

        std::optional<PeerId> old_pred = rt.predecessor;
        bool accept = !old_pred || *old_pred == id_ || !alive(*old_pred) ||
                      in_interval(msg.sender.id.id, old_pred->id, id_.id,
                                  interval_kind::open_open);
        if (accept) rt.predecessor = msg.sender.id;

        if (msg.want_transfer) {
            // hand the joiner every record in (previous predecessor, joiner]
            NodeId from = (old_pred && alive(*old_pred)) ? old_pred->id : id_.id;
            rpc::Transfer transfer;
            transfer.reason = rpc::transfer_reason::handoff;
            transfer.sender = self_descriptor();
            for (const auto& key : rt.store.keys()) {
                if (!in_interval(key, from, msg.sender.id.id, interval_kind::open_closed))
                    continue;
                for (auto& rec : rt.store.records_under(key)) transfer.records.push_back(rec);
            }
            MessageEnvelope out = make_envelope(payload_kind::transfer, env.group,
                                                msg.sender.id.id, transfer.encode());
            if (!dctx.reverse.empty())
                send_via_hops(dctx.reverse, std::move(out));
            else
                send_to_peer(env.group, msg.sender, std::move(out));
        }
    }

    void handle_transfer(MessageEnvelope& env) {
        rpc::Transfer msg = rpc::Transfer::decode(env.payload, bits_);
        learn(msg.sender);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        auto& rt = it->second;
        for (const auto& rec : msg.records) rt.store.put(rec, now());
        if (msg.reason == rpc::transfer_reason::handoff && rt.awaiting_transfer) {
            rt.awaiting_transfer = false;
            finish_join(rt);
        }
    }

    void fix_next_finger(const GroupId& g, GroupRuntime& rt) {
        if (rt.fingers.empty()) rt.fingers.assign(bits_, std::nullopt);
        unsigned i = rt.next_finger;
        rt.next_finger = (rt.next_finger + 1) % bits_;
        NodeId start = id_.id.plus_pow2(i);
        find_successor(g, start, [this, g, i](result<LookupResult> r) {
            if (!r.ok()) return;
            auto it = groups_.find(g);
            if (it == groups_.end() || !it->second.joined) return;
            if (i < it->second.fingers.size()) it->second.fingers[i] = r.value.node.id;
        });
    }

    // ------------------------------------------------------------------
    // chord: storage repair
    // ------------------------------------------------------------------

    void store_and_replicate(const GroupId& g, const DhtRecord& record) {
        auto& rt = runtime(g);
        rt.store.put(record, now());
        push_replicas(g, rt, {record});
    }

    void push_replicas(const GroupId& g, GroupRuntime& rt, std::vector<DhtRecord> records) {
        if (records.empty()) return;
        std::size_t copies = cfg().successor_list_length - 1;
        std::size_t pushed = 0;
        for (const auto& s : rt.successors) {
            if (pushed >= copies) break;
            if (s == id_ || !alive(s)) continue;
            for (std::size_t at = 0; at < records.size(); at += cfg().transfer_batch) {
                rpc::Transfer msg;
                msg.reason = rpc::transfer_reason::replica;
                msg.sender = self_descriptor();
                std::size_t end = std::min(records.size(), at + cfg().transfer_batch);
                msg.records.assign(records.begin() + at, records.begin() + end);
                MessageEnvelope env =
                    make_envelope(payload_kind::transfer, g, s.id, msg.encode());
                send_to_peer(g, descriptor_of(s), std::move(env));
            }
            pushed++;
        }
    }

    /// Owners re-push their records every round; copies whose lease went
    /// stale (we fell out of the replica set) are pruned.
    void repair_replicas(const GroupId& g, GroupRuntime& rt) {
        rt.store.purge_expired(now());
        bool singleton = rt.successors.size() == 1 && rt.successors.front() == id_;
        std::vector<DhtRecord> owned;
        std::uint64_t lease_window =
            std::uint64_t(cfg().replica_lease_rounds) * cfg().stabilize_interval_ms;
        for (const auto& key : rt.store.keys()) {
            bool is_owner =
                singleton ||
                (rt.predecessor && *rt.predecessor != id_ &&
                 in_interval(key, rt.predecessor->id, id_.id, interval_kind::open_closed));
            if (is_owner) {
                rt.store.refresh_lease(key, now());
                for (auto& rec : rt.store.records_under(key)) owned.push_back(rec);
            } else if (rt.predecessor &&
                       rt.store.lease_of(key) + lease_window < now()) {
                rt.store.drop_key(key);
                ctx_.metrics().count("replica_pruned");
            }
        }
        if (!singleton) push_replicas(g, rt, std::move(owned));
    }

    void handle_put(MessageEnvelope& env, DeliveryCtx& dctx) {
        rpc::Put msg = rpc::Put::decode(env.payload, bits_);
        learn(msg.origin);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        if (!msg.record.expired(now())) store_and_replicate(env.group, msg.record);
        rpc::PutAck ack{msg.request_id};
        MessageEnvelope out =
            make_envelope(payload_kind::put_ack, env.group, env.src.id, ack.encode());
        if (!dctx.reverse.empty())
            send_via_hops(dctx.reverse, std::move(out));
        else
            send_to_peer(env.group, msg.origin, std::move(out));
    }

    void handle_put_ack(MessageEnvelope& env) {
        rpc::PutAck msg = rpc::PutAck::decode(env.payload, bits_);
        auto it = pending_puts_.find(msg.request_id);
        if (it == pending_puts_.end()) return;
        auto cb = std::move(it->second.cb);
        pending_puts_.erase(it);
        complete(cb);
    }

    void send_get_to_candidate(std::uint64_t rid) {
        auto it = pending_gets_.find(rid);
        if (it == pending_gets_.end()) return;
        auto& entry = it->second;
        if (entry.next_candidate >= entry.candidates.size()) {
            auto cb = std::move(entry.cb);
            unsigned hops = entry.hops;
            pending_gets_.erase(it);
            if (cb) cb(result<std::vector<DhtRecord>>::failure(errc::not_found), hops);
            return;
        }
        PeerDescriptor target = entry.candidates[entry.next_candidate++];
        if (target.id == id_) { // local replica answers immediately
            auto records = runtime(entry.group).store.live_records(entry.key, now());
            auto cb = std::move(entry.cb);
            unsigned hops = entry.hops;
            pending_gets_.erase(it);
            if (cb) cb(result<std::vector<DhtRecord>>::success(std::move(records)), hops);
            return;
        }
        rpc::Get msg{rid, entry.key, self_descriptor()};
        MessageEnvelope env =
            make_envelope(payload_kind::get, entry.group, target.id.id, msg.encode());
        send_to_peer(entry.group, target, std::move(env));
        ctx_.loop().schedule_after(cfg().get_candidate_timeout_ms, [this, rid, target]() {
            auto it2 = pending_gets_.find(rid);
            if (it2 == pending_gets_.end()) return;
            mark_suspect(target.id); // unresponsive replica
            send_get_to_candidate(rid);
        });
    }

    void handle_get(MessageEnvelope& env, DeliveryCtx& dctx) {
        rpc::Get msg = rpc::Get::decode(env.payload, bits_);
        learn(msg.origin);
        auto it = groups_.find(env.group);
        if (it == groups_.end() || !it->second.joined) return;
        rpc::GetReply reply;
        reply.request_id = msg.request_id;
        reply.records = it->second.store.live_records(msg.key, now());
        MessageEnvelope out =
            make_envelope(payload_kind::get_reply, env.group, env.src.id, reply.encode());
        if (!dctx.reverse.empty())
            send_via_hops(dctx.reverse, std::move(out));
        else
            send_to_peer(env.group, msg.origin, std::move(out));
    }

    void handle_get_reply(MessageEnvelope& env) {
        rpc::GetReply msg = rpc::GetReply::decode(env.payload, bits_);
        auto it = pending_gets_.find(msg.request_id);
        if (it == pending_gets_.end()) return;
        auto cb = std::move(it->second.cb);
        unsigned hops = it->second.hops;
        pending_gets_.erase(it);
        if (cb) cb(result<std::vector<DhtRecord>>::success(std::move(msg.records)), hops);
    }

    // ------------------------------------------------------------------
    // key management
    // ------------------------------------------------------------------

    byte_buffer seal_key(const GroupKey& key, const crypto::mac256& authenticator) {
        crypto::key256 wrap;
        std::copy(authenticator.begin(), authenticator.end(), wrap.begin());
        EncryptedPayload sealed;
        sealed.key_id = key.key_id;
        sealed.nonce = make_nonce(id_, nonce_counter_++);
        byte_writer aad;
        aad.u32(key.key_id);
        sealed.ciphertext =
            crypto::aead_seal(wrap, sealed.nonce, aad.data(), key.material, sealed.tag);
        return encode_encrypted_payload(sealed);
    }

    std::optional<GroupKey> try_unseal(byte_view blob, const crypto::mac256& authenticator) {
        crypto::key256 wrap;
        std::copy(authenticator.begin(), authenticator.end(), wrap.begin());
        EncryptedPayload sealed = decode_encrypted_payload(blob);
        byte_writer aad;
        aad.u32(sealed.key_id);
        auto plain =
            crypto::aead_open(wrap, sealed.nonce, aad.data(), sealed.ciphertext, sealed.tag);
        if (!plain || plain->size() != 32) return std::nullopt;
        GroupKey key;
        key.key_id = sealed.key_id;
        std::copy(plain->begin(), plain->end(), key.material.begin());
        return key;
    }

    void request_group_key(const GroupId& g, rpc::key_op op, void_callback cb) {
        auto& rt = runtime(g);
        if (!rt.credential) {
            fail(cb, errc::unauthorized);
            return;
        }
        rt.key_cb = std::move(cb);
        rpc::KeyMgmt msg;
        msg.op = op;
        msg.sender = self_descriptor();
        msg.issued_at_ms = rt.credential->issued_at_ms;
        msg.proof = credential_proof(*rt.credential);
        MessageEnvelope env =
            make_envelope(payload_kind::key_mgmt, g, rt.authority.id.id, msg.encode());
        // key exchange rides the parent ring topology: authority reachable
        // via its advertised endpoints
        learn(rt.authority);
        send_to_peer(g, rt.authority, std::move(env));
        ctx_.loop().schedule_after(cfg().lookup_timeout_ms, [this, g]() {
            auto it = groups_.find(g);
            if (it == groups_.end() || !it->second.key_cb) return;
            auto cb2 = std::move(it->second.key_cb);
            it->second.key_cb = nullptr;
            fail(cb2, errc::timeout);
        });
    }

    void maybe_fetch_key(const GroupId& g) {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.credential || it->second.key_fetch_inflight)
            return;
        it->second.key_fetch_inflight = true;
        request_group_key(g, rpc::key_op::key_fetch, [this, g](result<void>) {
            auto it2 = groups_.find(g);
            if (it2 != groups_.end()) it2->second.key_fetch_inflight = false;
        });
    }

    void handle_key_mgmt(MessageEnvelope& env, DeliveryCtx& dctx) {
        rpc::KeyMgmt msg = rpc::KeyMgmt::decode(env.payload, bits_);
        learn(msg.sender);
        auto it = groups_.find(env.group);
        if (it == groups_.end()) return;
        auto& rt = it->second;

        switch (msg.op) {
            case rpc::key_op::join_request:
            case rpc::key_op::key_fetch: {
                if (!rt.admission_secret) return; // not the authority
                Credential expected = embchord::issue_credential(*rt.admission_secret,
                                                                 msg.sender.id, env.group,
                                                                 msg.issued_at_ms);
                bool authorized = credential_proof(expected) == msg.proof;
                // a fetch from an evicted member fails even with an old credential
                if (msg.op == rpc::key_op::key_fetch && !rt.members.contains(msg.sender.id))
                    authorized = false;
                rpc::KeyMgmt reply;
                reply.sender = self_descriptor();
                if (!authorized) {
                    ctx_.metrics().count("key_request_rejected");
                    reply.op = rpc::key_op::join_nak;
                    reply.reason = static_cast<std::uint8_t>(errc::unauthorized);
                } else {
                    rt.members.insert(msg.sender.id);
                    rt.issued[msg.sender.id] = expected;
                    const GroupKey* current = rt.keyring.current();
                    if (!current) return;
                    reply.op = rpc::key_op::join_ack;
                    reply.key_id = current->key_id;
                    reply.sealed = seal_key(*current, expected.authenticator);
                }
                MessageEnvelope out = make_envelope(payload_kind::key_mgmt, env.group,
                                                    env.src.id, reply.encode());
                if (!dctx.reverse.empty())
                    send_via_hops(dctx.reverse, std::move(out));
                else
                    send_to_peer(env.group, msg.sender, std::move(out));
                break;
            }
            case rpc::key_op::join_ack: {
                if (!rt.credential) return;
                auto key = try_unseal(msg.sealed, rt.credential->authenticator);
                if (!key) return;
                rt.keyring.install(*key, now(), cfg().key_grace_ms);
                auto cb = std::move(rt.key_cb);
                rt.key_cb = nullptr;
                complete(cb);
                break;
            }
            case rpc::key_op::join_nak: {
                auto cb = std::move(rt.key_cb);
                rt.key_cb = nullptr;
                fail(cb, static_cast<errc>(msg.reason));
                break;
            }
            case rpc::key_op::key_update: {
                if (!rt.credential) return;
                auto key = try_unseal(msg.sealed, rt.credential->authenticator);
                if (!key) return;
                rt.keyring.install(*key, now(), cfg().key_grace_ms);
                break;
            }
        }
    }

    void handle_ctrl(MessageEnvelope& env) {
        rpc::Ctrl msg = rpc::Ctrl::decode(env.payload, bits_);
        if (msg.op == rpc::ctrl_op::route_stale) {
            ctx_.metrics().count("route_stale_notices");
            conn_.forget(msg.about); // stale bridge info; re-learn via discovery
        }
    }

    // ------------------------------------------------------------------
    // pipes receive
    // ------------------------------------------------------------------

    void handle_pipe_data(MessageEnvelope& env) {
        rpc::PipeData msg = rpc::PipeData::decode(env.payload, bits_);
        deliver_pipe_data(env.group, env.src, msg, env.encrypted());
    }

    // ------------------------------------------------------------------
    // coap receive
    // ------------------------------------------------------------------

    void handle_coap_envelope(MessageEnvelope& env) {
        byte_buffer body = env.payload;
        if (env.encrypted()) {
            auto plain = group_decrypt_payload(env.group, decode_encrypted_payload(body));
            if (!plain.ok()) return; // unreadable without the group key
            body = std::move(plain.value);
        }
        CoapMessage msg = decode_coap(body);
        if (coap_code::is_request(msg.code)) {
            auto it = groups_.find(env.group);
            bool secured = it != groups_.end() && it->second.policy == group_policy::secured;
            if (secured && !env.encrypted()) {
                // cleartext request against a secured group: 4.01
                ctx_.metrics().count("coap_unauthorized");
                CoapMessage resp;
                resp.type = msg.type == coap_type::con ? coap_type::ack : coap_type::non;
                resp.code = coap_code::unauthorized;
                resp.message_id = msg.message_id;
                resp.token = msg.token;
                send_coap_response(env.group, env.src, resp, false);
                return;
            }
            handle_coap_request(env, msg);
        } else {
            handle_coap_response(env.group, msg);
        }
    }

    void handle_coap_request(MessageEnvelope& env, const CoapMessage& msg) {
        // retransmission dedup: replay the cached response unchanged
        auto cache_key = std::make_pair(env.src.id, msg.message_id);
        if (msg.type == coap_type::con) {
            auto cached = response_cache_.find(cache_key);
            if (cached != response_cache_.end()) {
                ctx_.metrics().count("coap_server_dedup");
                MessageEnvelope out = make_envelope(payload_kind::coap, env.group, env.src.id,
                                                    cached->second.wire_payload);
                out.flags |= cached->second.flags;
                send_to_peer(env.group, descriptor_of(env.src), std::move(out));
                return;
            }
        }
        CoapMessage resp = serve_request(env.group, msg);
        byte_buffer body = encode_coap(resp);
        std::uint8_t flags = 0;
        if (member_holds_key(env.group) && env.encrypted()) {
            body = encode_encrypted_payload(group_encrypt_payload(env.group, body));
            flags |= kFlagEncrypted;
        }
        if (msg.type == coap_type::con)
            response_cache_[cache_key] = cached_response{body, flags, now()};
        MessageEnvelope out = make_envelope(payload_kind::coap, env.group, env.src.id, body);
        out.flags |= flags;
        send_to_peer(env.group, descriptor_of(env.src), std::move(out));
    }

    /// Propagated (multicast) requests dispatch here from the walk.
    void handle_coap_message(const GroupId& g, const PeerId& from, const CoapMessage& msg) {
        if (!coap_code::is_request(msg.code)) return;
        CoapMessage resp = serve_request(g, msg);
        if (from == id_) { // loopback of a multicast from this node
            handle_coap_response(g, resp);
            return;
        }
        send_coap_response(g, from, resp, member_holds_key(g));
    }

    CoapMessage serve_request(const GroupId& g, const CoapMessage& msg) {
        CoapMessage resp;
        resp.type = msg.type == coap_type::con ? coap_type::ack : coap_type::non;
        resp.message_id = msg.message_id;
        resp.token = msg.token;
        auto it = resources_.find(join_uri_path(msg.uri_path));
        if (it == resources_.end() || it->second.group != g) {
            ctx_.metrics().count("coap_not_found");
            resp.code = coap_code::not_found;
            return resp;
        }
        try {
            CoapServerResponse out = it->second.handler(msg);
            resp.code = out.code;
            resp.payload = std::move(out.payload);
            resp.content_format = out.content_format;
        } catch (const std::exception&) {
            ctx_.metrics().count("coap_handler_error");
            resp.code = coap_code::internal_error;
        }
        return resp;
    }

    void send_coap_response(const GroupId& g, const PeerId& to, const CoapMessage& resp,
                            bool encrypt) {
        byte_buffer body = encode_coap(resp);
        std::uint8_t flags = 0;
        if (encrypt && member_holds_key(g)) {
            body = encode_encrypted_payload(group_encrypt_payload(g, body));
            flags |= kFlagEncrypted;
        }
        MessageEnvelope out = make_envelope(payload_kind::coap, g, to.id, std::move(body));
        out.flags |= flags;
        send_to_peer(g, descriptor_of(to), std::move(out));
    }

    /// Token matching: resolves the pending request, drops duplicate
    /// responses, counts orphans.
    void handle_coap_response(const GroupId&, const CoapMessage& msg) {
        std::string tkey = to_hex(msg.token);
        auto mit = pending_multicast_.find(tkey);
        if (mit != pending_multicast_.end()) {
            mit->second.responses.push_back(msg);
            return;
        }
        auto it = pending_coap_.find(tkey);
        if (it == pending_coap_.end()) {
            if (resolved_tokens_.contains(tkey)) {
                ctx_.metrics().count("coap_dup_response");
            } else {
                ctx_.metrics().count("coap_orphan");
            }
            return;
        }
        auto cb = std::move(it->second.cb);
        pending_coap_.erase(it);
        remember_resolved(tkey);
        if (cb) cb(result<CoapMessage>::success(msg));
    }

    void remember_resolved(const std::string& tkey) {
        if (!resolved_tokens_.insert(tkey).second) return;
        resolved_fifo_.push_back(tkey);
        while (resolved_fifo_.size() > cfg().dedup_window) {
            resolved_tokens_.erase(resolved_fifo_.front());
            resolved_fifo_.pop_front();
        }
    }

    void transmit_coap(const std::string& tkey) {
        auto it = pending_coap_.find(tkey);
        if (it == pending_coap_.end()) return;
        auto& entry = it->second;
        MessageEnvelope env = make_envelope(payload_kind::coap, entry.group, entry.target.id,
                                            entry.wire_payload);
        env.flags |= entry.flags;
        send_to_peer(entry.group, descriptor_of(entry.target), std::move(env));
    }

    void schedule_coap_timer(const std::string& tkey) {
        auto it = pending_coap_.find(tkey);
        if (it == pending_coap_.end()) return;
        std::uint64_t epoch = ++it->second.epoch;
        ctx_.loop().schedule_after(it->second.backoff_ms, [this, tkey, epoch]() {
            auto it2 = pending_coap_.find(tkey);
            if (it2 == pending_coap_.end() || it2->second.epoch != epoch) return;
            auto& entry = it2->second;
            if (entry.attempt >= kCoapMaxRetransmit) {
                finish_coap_timeout(tkey, epoch);
                return;
            }
            entry.attempt++;
            entry.backoff_ms *= 2;
            ctx_.metrics().count("coap_retransmit");
            transmit_coap(tkey);
            schedule_coap_timer(tkey);
        });
    }

    void finish_coap_timeout(const std::string& tkey, std::uint64_t epoch) {
        auto it = pending_coap_.find(tkey);
        if (it == pending_coap_.end() || it->second.epoch != epoch) return;
        auto cb = std::move(it->second.cb);
        pending_coap_.erase(it);
        ctx_.metrics().count("coap_timeout");
        if (cb) cb(result<CoapMessage>::failure(errc::timeout));
    }

    void purge_response_cache() {
        for (auto it = response_cache_.begin(); it != response_cache_.end();) {
            if (it->second.cached_at + 60000 < now())
                it = response_cache_.erase(it);
            else
                ++it;
        }
    }

    // ------------------------------------------------------------------
    // advertisements
    // ------------------------------------------------------------------

    Advertisement make_group_advertisement(const GroupRuntime& rt) {
        Advertisement adv;
        adv.kind = adv_kind::group;
        adv.subject_id = rt.id.id;
        adv.group_scope = rt.parent.value_or(rt.id);
        adv.name = rt.name;
        adv.attributes["policy"] = rt.policy == group_policy::secured ? "secured" : "open";
        adv.attributes["peer"] = id_.to_hex();
        if (rt.parent) adv.attributes["parent"] = rt.parent->to_hex();
        adv.endpoints = self_descriptor().endpoints;
        adv.expiration_ms = now() + cfg().advert_lifetime_ms;
        return adv;
    }

    /// Peer advertisement under "peer:<hex>"; bridges also land under the
    /// shared "sys:bridges" name so any member can enumerate relays.
    void publish_peer_advertisement(const GroupId& g) {
        auto it = groups_.find(g);
        if (it == groups_.end() || !it->second.joined || attachments_.empty()) return;
        Advertisement adv;
        adv.kind = adv_kind::peer;
        adv.subject_id = id_.id;
        adv.group_scope = g;
        adv.name = "peer:" + id_.to_hex();
        adv.attributes["peer"] = id_.to_hex();
        adv.attributes["role"] = is_bridge() ? "bridge" : "edge";
        adv.endpoints = self_descriptor().endpoints;
        adv.expiration_ms = now() + cfg().advert_lifetime_ms;
        publish_advertisement(g, adv, nullptr);
        if (is_bridge()) {
            Advertisement badv = adv;
            badv.name = "sys:bridges";
            publish_advertisement(g, badv, nullptr);
        }
    }

    // ------------------------------------------------------------------
    // data members
    // ------------------------------------------------------------------

    NodeContext& ctx_;
    unsigned bits_;
    PeerId id_;
    std::string label_;
    bool crashed_ = false;
    bool maintenance_running_ = false;
    bool bridge_fetch_inflight_ = false;

    std::vector<std::pair<EndpointAddress, LinkProfile>> attachments_;
    ConnectivityMap conn_;
    std::map<PeerId, unsigned> suspect_counts_;
    Reassembler reassembler_;

    std::map<GroupId, GroupRuntime> groups_;

    std::uint64_t next_request_id_ = 1;
    std::uint64_t next_correlation_ = 1;
    std::uint32_t next_envelope_counter_ = 1;
    std::uint64_t nonce_counter_ = 1;
    std::uint16_t next_mid_ = 1;
    std::uint64_t next_token_ = 1;

    std::map<std::uint64_t, pending_lookup> pending_lookups_;
    std::map<std::uint64_t, pending_put> pending_puts_;
    std::map<std::uint64_t, pending_get> pending_gets_;
    std::map<std::uint64_t, pending_stab> pending_stab_;
    std::map<std::string, pending_coap> pending_coap_;
    std::map<std::string, pending_multicast> pending_multicast_;
    std::set<std::string> resolved_tokens_;
    std::deque<std::string> resolved_fifo_;
    std::map<std::pair<NodeId, std::uint16_t>, cached_response> response_cache_;
    std::map<std::string, ResourceEntry> resources_;
    std::map<ResourceId, pipe_handler> pipe_handlers_;
    std::vector<queued_send> queued_sends_;
    std::set<PeerId> peer_fetch_inflight_;
    std::map<std::pair<NodeId, std::uint64_t>, void_callback> delivery_watch_;
    std::function<void(const MessageEnvelope&)> delivery_observer_;
};

} // namespace embchord
