#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "embchord/coap.hpp"
#include "embchord/sim/harness.hpp"

namespace embchord::sim {

/// Raised for grammar violations; carries the 1-based line number.
class scenario_parse_error : public config_error {
public:
    scenario_parse_error(const std::string& what, std::size_t line)
        : config_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Raised when the timeline asks something impossible of the current
/// state (e.g. a request from a peer that never joined).
class scenario_error : public config_error {
public:
    using config_error::config_error;
};

/// Parsed form of a line-oriented scenario file:
///   seed <n>            (optional; CLI/env can override)
///   idbits <m>          (optional, default 16)
///   segment <name> mtu=<n> bw=<bytes/s> lat=<ms> loss=<p>
///   group <name> [parent=<g>] [policy=open|secured] [creator=<peer>]
///   peer <label> at <segment>[,<segment>...] [groups=<g1,g2>]
///   at <ms> <action> <args>
/// Actions: join, crash, publish, discover, request, propagate, rotate_key.
struct Scenario {
    struct SegmentDecl {
        std::string name;
        LinkProfile profile;
    };
    struct GroupDecl {
        std::string name;
        std::string parent = "net";
        group_policy policy = group_policy::open;
        std::string creator; // defaults to the first declared peer
    };
    struct PeerDecl {
        std::string label;
        std::vector<std::string> segments;
        std::vector<std::string> groups; // beyond the root group
    };
    struct Action {
        std::uint64_t at_ms = 0;
        std::string verb;
        std::vector<std::string> args;
        std::map<std::string, std::string> options; // key=value args
        std::size_t line = 0;
    };

    std::uint64_t seed = 0;
    unsigned id_bits = 16;
    std::string name = "scenario";
    std::vector<SegmentDecl> segments;
    std::vector<GroupDecl> groups;
    std::vector<PeerDecl> peers;
    std::vector<Action> timeline;

    const PeerDecl* find_peer(const std::string& label) const {
        for (const auto& p : peers)
            if (p.label == label) return &p;
        return nullptr;
    }
    const GroupDecl* find_group(const std::string& name_) const {
        for (const auto& g : groups)
            if (g.name == name_) return &g;
        return nullptr;
    }
    bool has_segment(const std::string& name_) const {
        for (const auto& s : segments)
            if (s.name == name_) return true;
        return false;
    }
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::uint64_t parse_u64(const std::string& s, std::size_t line, const char* what) {
    try {
        std::size_t used = 0;
        std::uint64_t v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw scenario_parse_error(std::string("bad ") + what + ": " + s, line);
    }
}

inline double parse_double(const std::string& s, std::size_t line, const char* what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw scenario_parse_error(std::string("bad ") + what + ": " + s, line);
    }
}

} // namespace detail

inline Scenario parse_scenario(std::istream& in, const std::string& name = "scenario") {
    Scenario sc;
    sc.name = name;
    std::string line;
    std::size_t lineno = 0;
    std::uint64_t last_time = 0;
    while (std::getline(in, line)) {
        lineno++;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        const std::string& head = toks[0];

        auto kv = [&](const std::string& tok) -> std::pair<std::string, std::string> {
            auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw scenario_parse_error("expected key=value, got: " + tok, lineno);
            return {tok.substr(0, eq), tok.substr(eq + 1)};
        };

        if (head == "seed") {
            if (toks.size() != 2) throw scenario_parse_error("seed takes one value", lineno);
            sc.seed = detail::parse_u64(toks[1], lineno, "seed");
        } else if (head == "idbits") {
            if (toks.size() != 2) throw scenario_parse_error("idbits takes one value", lineno);
            sc.id_bits = unsigned(detail::parse_u64(toks[1], lineno, "idbits"));
            if (sc.id_bits < kMinRingBits || sc.id_bits > kMaxRingBits)
                throw scenario_parse_error("idbits must be in [8,160]", lineno);
        } else if (head == "segment") {
            if (toks.size() < 2) throw scenario_parse_error("segment needs a name", lineno);
            Scenario::SegmentDecl seg;
            seg.name = toks[1];
            if (sc.has_segment(seg.name))
                throw scenario_parse_error("segment redeclared: " + seg.name, lineno);
            for (std::size_t i = 2; i < toks.size(); ++i) {
                auto [k, v] = kv(toks[i]);
                if (k == "mtu")
                    seg.profile.mtu = std::uint32_t(detail::parse_u64(v, lineno, "mtu"));
                else if (k == "bw")
                    seg.profile.bandwidth_bps = detail::parse_u64(v, lineno, "bw");
                else if (k == "lat")
                    seg.profile.latency_ms = detail::parse_u64(v, lineno, "lat");
                else if (k == "loss")
                    seg.profile.loss_rate = detail::parse_double(v, lineno, "loss");
                else
                    throw scenario_parse_error("unknown segment option: " + k, lineno);
            }
            try {
                seg.profile.validate();
            } catch (const config_error& e) {
                throw scenario_parse_error(e.what(), lineno);
            }
            sc.segments.push_back(std::move(seg));
        } else if (head == "group") {
            if (toks.size() < 2) throw scenario_parse_error("group needs a name", lineno);
            Scenario::GroupDecl g;
            g.name = toks[1];
            if (g.name == "net")
                throw scenario_parse_error("the root group 'net' is implicit", lineno);
            if (sc.find_group(g.name))
                throw scenario_parse_error("group redeclared: " + g.name, lineno);
            for (std::size_t i = 2; i < toks.size(); ++i) {
                auto [k, v] = kv(toks[i]);
                if (k == "parent") {
                    g.parent = v;
                } else if (k == "policy") {
                    if (v == "open")
                        g.policy = group_policy::open;
                    else if (v == "secured")
                        g.policy = group_policy::secured;
                    else
                        throw scenario_parse_error("policy must be open|secured", lineno);
                } else if (k == "creator") {
                    g.creator = v;
                } else {
                    throw scenario_parse_error("unknown group option: " + k, lineno);
                }
            }
            if (g.parent != "net" && !sc.find_group(g.parent))
                throw scenario_parse_error("group parent not declared: " + g.parent, lineno);
            sc.groups.push_back(std::move(g));
        } else if (head == "peer") {
            if (toks.size() < 4 || toks[2] != "at")
                throw scenario_parse_error("expected: peer <label> at <segments> ...", lineno);
            Scenario::PeerDecl p;
            p.label = toks[1];
            if (sc.find_peer(p.label))
                throw scenario_parse_error("peer redeclared: " + p.label, lineno);
            p.segments = detail::split_on(toks[3], ',');
            if (p.segments.empty()) throw scenario_parse_error("peer needs a segment", lineno);
            for (const auto& s : p.segments)
                if (!sc.has_segment(s))
                    throw scenario_parse_error("segment not declared: " + s, lineno);
            for (std::size_t i = 4; i < toks.size(); ++i) {
                auto [k, v] = kv(toks[i]);
                if (k == "groups") {
                    for (auto& g : detail::split_on(v, ',')) {
                        if (g == "net") continue; // root membership is implicit
                        if (!sc.find_group(g))
                            throw scenario_parse_error("group not declared: " + g, lineno);
                        p.groups.push_back(g);
                    }
                } else {
                    throw scenario_parse_error("unknown peer option: " + k, lineno);
                }
            }
            sc.peers.push_back(std::move(p));
        } else if (head == "at") {
            if (toks.size() < 3)
                throw scenario_parse_error("expected: at <ms> <action> ...", lineno);
            Scenario::Action act;
            act.at_ms = detail::parse_u64(toks[1], lineno, "time");
            if (act.at_ms < last_time)
                throw scenario_parse_error("timeline times must be non-decreasing", lineno);
            last_time = act.at_ms;
            act.verb = toks[2];
            act.line = lineno;
            for (std::size_t i = 3; i < toks.size(); ++i) {
                if (toks[i].find('=') != std::string::npos) {
                    auto [k, v] = kv(toks[i]);
                    act.options[k] = v;
                } else {
                    act.args.push_back(toks[i]);
                }
            }
            static const std::vector<std::string> verbs = {
                "join", "crash", "publish", "discover", "request", "propagate", "rotate_key"};
            if (std::find(verbs.begin(), verbs.end(), act.verb) == verbs.end())
                throw scenario_parse_error("unknown action: " + act.verb, lineno);
            if (act.args.empty())
                throw scenario_parse_error(act.verb + " needs a peer label", lineno);
            if (!sc.find_peer(act.args[0]))
                throw scenario_parse_error("peer not declared: " + act.args[0], lineno);
            sc.timeline.push_back(std::move(act));
        } else {
            throw scenario_parse_error("unknown directive: " + head, lineno);
        }
    }
    if (sc.peers.empty()) throw scenario_parse_error("scenario declares no peers", lineno + 1);
    return sc;
}

inline Scenario parse_scenario_text(const std::string& text, const std::string& name = "scenario") {
    std::istringstream ss(text);
    return parse_scenario(ss, name);
}

/// Executes a scenario on a fresh Simulation. All randomness flows from
/// the seeded generator; identical (scenario, seed) pairs produce
/// byte-identical reports.
class ScenarioRunner {
public:
    explicit ScenarioRunner(Scenario sc, std::optional<std::uint64_t> seed_override = std::nullopt)
        : scenario_(std::move(sc)),
          sim_(seed_override.value_or(scenario_.seed), scenario_.id_bits) {
        sim_.metrics().set_scenario(scenario_.name);
    }

    Simulation& simulation() { return sim_; }

    MetricsReport run() {
        build_world();
        schedule_timeline();
        std::uint64_t horizon =
            (scenario_.timeline.empty() ? 0 : scenario_.timeline.back().at_ms) + tail_ms_;
        sim_.loop().run_until_time(horizon);
        if (!error_.empty()) throw scenario_error(error_);
        finalize_metrics();
        return sim_.metrics();
    }

    void set_tail_ms(std::uint64_t ms) { tail_ms_ = ms; }

private:
    void build_world() {
        for (const auto& seg : scenario_.segments) sim_.add_segment(seg.name, seg.profile);
        for (const auto& p : scenario_.peers) {
            Node& node = sim_.add_node(p.label);
            for (const auto& seg : p.segments) {
                transport_kind kind = transport_kind::mem;
                for (const auto& sd : scenario_.segments)
                    if (sd.name == seg && sd.profile.mtu <= 256) kind = transport_kind::narrow_sim;
                node.register_transport({kind, seg + "/" + p.label},
                                        sim_.network().segment_profile(seg));
            }
        }
        root_ = sim_.node(scenario_.peers[0].label).create_root_group("net");
        root_joined_.insert(scenario_.peers[0].label);
        // the first peer also creates every group it is creator of
        create_groups_for(scenario_.peers[0].label);
    }

    void create_groups_for(const std::string& label) {
        for (const auto& g : scenario_.groups) {
            std::string creator = g.creator.empty() ? scenario_.peers[0].label : g.creator;
            if (creator != label || group_ids_.contains(g.name)) continue;
            Node& node = sim_.node(label);
            GroupId parent = g.parent == "net" ? root_ : group_ids_.at(g.parent);
            GroupId gid = node.create_group(parent, g.name,
                                            g.policy, nullptr);
            group_ids_[g.name] = gid;
        }
    }

    void schedule_timeline() {
        for (const auto& act : scenario_.timeline) {
            sim_.loop().schedule_at(act.at_ms, [this, act]() {
                try {
                    execute(act);
                } catch (const std::exception& e) {
                    if (error_.empty())
                        error_ = "at " + std::to_string(act.at_ms) + " " + act.verb + ": " +
                                 e.what();
                }
            });
        }
    }

    void execute(const Scenario::Action& act) {
        if (!error_.empty()) return;
        Node& peer = sim_.node(act.args[0]);
        if (act.verb == "join") {
            do_join(act, peer);
        } else if (act.verb == "crash") {
            peer.crash();
        } else if (act.verb == "publish") {
            require_joined(act, "publish");
            if (act.args.size() < 2) throw scenario_error("publish needs a resource name");
            std::string resource = act.args[1];
            std::string path = option_or(act, "path", "/" + resource);
            GroupId g = group_for(act);
            std::string body = option_or(act, "value", peer.label());
            peer.serve_resource(g, path,
                                [body](const CoapMessage&) {
                                    return CoapServerResponse{coap_code::content, to_bytes(body),
                                                              0};
                                },
                                resource, nullptr);
        } else if (act.verb == "discover") {
            require_joined(act, "discover");
            if (act.args.size() < 2) throw scenario_error("discover needs a resource name");
            GroupId g = group_for(act);
            peer.discover(g, act.args[1], [this](result<std::vector<Advertisement>> r) {
                sim_.metrics().count(r.ok() ? "scenario_discover_ok" : "scenario_discover_fail");
                if (r.ok()) sim_.metrics().count("scenario_discover_hits", r.value.size());
            });
        } else if (act.verb == "request") {
            require_joined(act, "request");
            if (act.args.size() < 4)
                throw scenario_error("request needs: <peer> <server> <METHOD> <path>");
            Node& server = sim_.node(act.args[1]);
            std::uint8_t method = parse_method(act.args[2]);
            std::string path = act.args[3];
            byte_buffer payload =
                act.args.size() > 4 ? to_bytes(act.args[4]) : byte_buffer{};
            bool con = option_or(act, "mode", "con") != "non";
            GroupId g = group_for(act);
            std::uint64_t started = sim_.now();
            peer.coap_request(g, server.id(), method, path, payload, con,
                              [this, started](result<CoapMessage> r) {
                                  if (r.ok()) {
                                      sim_.metrics().count("scenario_request_ok");
                                      sim_.metrics().sample("request_latency_ms",
                                                            double(sim_.now() - started));
                                  } else {
                                      sim_.metrics().count("scenario_request_fail");
                                  }
                              });
        } else if (act.verb == "propagate") {
            require_joined(act, "propagate");
            if (act.args.size() < 3) throw scenario_error("propagate needs: <peer> <group> <text>");
            GroupId g = named_group(act.args[1]);
            auto pipe = peer.open_propagate_pipe(g, "scenario");
            peer.propagate(pipe, to_bytes(act.args[2]));
        } else if (act.verb == "rotate_key") {
            if (act.args.size() < 2) throw scenario_error("rotate_key needs: <peer> <group>");
            GroupId g = named_group(act.args[1]);
            peer.rotate_key(g, [this](result<void> r) {
                sim_.metrics().count(r.ok() ? "scenario_rotate_ok" : "scenario_rotate_fail");
            });
        }
    }

    void do_join(const Scenario::Action& act, Node& peer) {
        const auto* decl = scenario_.find_peer(peer.label());
        std::string via = option_or(act, "via", scenario_.peers[0].label);
        Node& boot = sim_.node(via);
        peer.learn_root_group("net");
        std::string label = peer.label();
        peer.join_group(root_, std::nullopt,
                        [this, label, decl](result<void> r) {
                            if (!r.ok()) {
                                if (error_.empty()) error_ = "join failed for " + label;
                                return;
                            }
                            root_joined_.insert(label);
                            create_groups_for(label);
                            join_declared_groups(label, decl);
                        },
                        boot.self_descriptor());
    }

    void join_declared_groups(const std::string& label, const Scenario::PeerDecl* decl) {
        if (!decl) return;
        Node& node = sim_.node(label);
        for (const auto& gname : decl->groups) {
            const auto* gd = scenario_.find_group(gname);
            if (!gd) continue;
            std::string creator = gd->creator.empty() ? scenario_.peers[0].label : gd->creator;
            if (creator == label) continue; // creators are members already
            // discover the group advertisement in its parent ring, then join
            GroupId parent = gd->parent == "net" ? root_ : group_ids_.at(gd->parent);
            GroupId expected = group_id_from_name(parent, gname, scenario_.id_bits);
            node.dht_get(parent, expected.id, [this, label, gname, creator,
                                               expected](result<std::vector<DhtRecord>> r) {
                if (!r.ok() || r.value.empty()) {
                    sim_.metrics().count("scenario_group_discover_fail");
                    return;
                }
                Node& node2 = sim_.node(label);
                Advertisement adv =
                    decode_advertisement(r.value.front().payload, scenario_.id_bits);
                GroupId gid = node2.learn_group(adv);
                std::optional<Credential> cred;
                if (node2.policy_of(gid) == group_policy::secured) {
                    // out-of-band admission: the creator issues the token
                    cred = sim_.node(creator).issue_credential(gid, node2.id());
                }
                node2.join_group(gid, cred, [this, gname](result<void> r2) {
                    sim_.metrics().count(r2.ok() ? "scenario_group_join_ok"
                                                 : "scenario_group_join_fail");
                });
            });
        }
    }

    void require_joined(const Scenario::Action& act, const char* verb) {
        if (!root_joined_.contains(act.args[0]))
            throw scenario_error(std::string(verb) + " before join: " + act.args[0]);
    }

    GroupId group_for(const Scenario::Action& act) {
        auto it = act.options.find("group");
        if (it == act.options.end()) return root_;
        return named_group(it->second);
    }

    GroupId named_group(const std::string& name) {
        if (name == "net") return root_;
        auto it = group_ids_.find(name);
        if (it == group_ids_.end()) throw scenario_error("group not created yet: " + name);
        return it->second;
    }

    static std::string option_or(const Scenario::Action& act, const std::string& key,
                                 const std::string& fallback) {
        auto it = act.options.find(key);
        return it == act.options.end() ? fallback : it->second;
    }

    static std::uint8_t parse_method(const std::string& m) {
        if (m == "GET") return coap_code::get;
        if (m == "POST") return coap_code::post;
        if (m == "PUT") return coap_code::put;
        if (m == "DELETE") return coap_code::del;
        throw scenario_error("unknown method: " + m);
    }

    void finalize_metrics() {
        auto& metrics = sim_.metrics();
        metrics.count("sim_end_ms", sim_.now());
        for (Node* n : sim_.all_nodes())
            if (!n->crashed()) metrics.count("peers_alive");
    }

    Scenario scenario_;
    Simulation sim_;
    GroupId root_;
    std::map<std::string, GroupId> group_ids_;
    std::set<std::string> root_joined_;
    std::string error_;
    std::uint64_t tail_ms_ = 10000;
};

} // namespace embchord::sim
