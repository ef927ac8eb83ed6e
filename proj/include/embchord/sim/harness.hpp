#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "embchord/node.hpp"
#include "embchord/sim/clock.hpp"
#include "embchord/sim/metrics.hpp"
#include "embchord/sim/network.hpp"
#include "embchord/sim/rng.hpp"

namespace embchord::sim {

/// Owns the clock, the network, and every node of one simulated run, and
/// wires delivery/drop instrumentation back to the sending nodes. One
/// Simulation is one deterministic world: same seed, same history.
class Simulation : public NodeContext {
public:
    explicit Simulation(std::uint64_t seed, unsigned ring_bits = kDefaultRingBits,
                        SimConfig config = {})
        : rng_(seed), network_(loop_, rng_, metrics_), bits_(ring_bits), cfg_(config) {
        network_.set_drop_hook([this](const std::string& reason, const TxMeta& meta) {
            notify_drop(meta.trace_src, meta.trace_corr, reason);
        });
    }

    // --- NodeContext ---------------------------------------------------
    EventLoop& loop() override { return loop_; }
    SimNetwork& network() override { return network_; }
    Rng& rng() override { return rng_; }
    MetricsReport& metrics() override { return metrics_; }
    unsigned ring_bits() const override { return bits_; }
    const SimConfig& config() const override { return cfg_; }

    void notify_delivery(const Node& at, const MessageEnvelope& env) override {
        auto it = by_id_.find(PeerId{env.src.id});
        if (it != by_id_.end()) it->second->resolve_delivery_watch(env);
        for (auto& obs : delivery_observers_) obs(at, env);
    }

    void notify_drop(const NodeId& trace_src, std::uint64_t trace_corr,
                     const std::string& reason) override {
        auto it = by_id_.find(PeerId{trace_src});
        if (it != by_id_.end())
            it->second->resolve_delivery_drop(trace_corr, errc::unreachable);
        for (auto& obs : drop_observers_) obs(trace_src, trace_corr, reason);
    }

    // --- world building --------------------------------------------------
    void add_segment(const std::string& name, const LinkProfile& profile) {
        network_.add_segment(name, profile);
    }

    Node& add_node(const std::string& label) {
        if (nodes_.contains(label)) throw config_error("duplicate node label: " + label);
        auto node = std::make_unique<Node>(*this, label);
        if (by_id_.contains(node->id()))
            throw config_error("peer id collision for label: " + label);
        Node& ref = *node;
        by_id_[node->id()] = node.get();
        nodes_.emplace(label, std::move(node));
        return ref;
    }

    /// Label variant whose hashed id is collision-free in this world;
    /// deterministic given creation order.
    std::string fresh_label(const std::string& base) {
        std::string candidate = base;
        unsigned n = 0;
        while (true) {
            if (!nodes_.contains(candidate)) {
                PeerId id = peer_id_from_name(candidate, bits_);
                if (!by_id_.contains(id)) return candidate;
            }
            candidate = base + "_" + std::to_string(n++);
        }
    }

    Node& node(const std::string& label) {
        auto it = nodes_.find(label);
        if (it == nodes_.end()) throw config_error("unknown node: " + label);
        return *it->second;
    }

    Node* find_node(const std::string& label) {
        auto it = nodes_.find(label);
        return it == nodes_.end() ? nullptr : it->second.get();
    }

    Node* node_by_id(const PeerId& id) {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : it->second;
    }

    std::vector<Node*> all_nodes() {
        std::vector<Node*> out;
        for (auto& [label, node] : nodes_) out.push_back(node.get());
        return out;
    }

    std::vector<Node*> live_members(const GroupId& g) {
        std::vector<Node*> out;
        for (auto& [label, node] : nodes_)
            if (!node->crashed() && node->is_member(g)) out.push_back(node.get());
        return out;
    }

    void crash(const std::string& label) { node(label).crash(); }

    // --- time -----------------------------------------------------------
    std::uint64_t now() const { return loop_.now(); }
    void run_for(std::uint64_t ms) { loop_.run_until_time(loop_.now() + ms); }
    void run_rounds(unsigned rounds) { run_for(rounds * cfg_.stabilize_interval_ms); }

    /// Pumps events until `done` holds; false if the deadline passed first.
    bool await(const std::function<bool()>& done, std::uint64_t timeout_ms) {
        return loop_.run_until(done, loop_.now() + timeout_ms);
    }

    // --- instrumentation --------------------------------------------------
    void on_delivery(std::function<void(const Node&, const MessageEnvelope&)> fn) {
        delivery_observers_.push_back(std::move(fn));
    }

    void on_drop(std::function<void(const NodeId&, std::uint64_t, const std::string&)> fn) {
        drop_observers_.push_back(std::move(fn));
    }

private:
    EventLoop loop_;
    Rng rng_;
    MetricsReport metrics_;
    SimNetwork network_;
    unsigned bits_;
    SimConfig cfg_;
    std::map<std::string, std::unique_ptr<Node>> nodes_;
    std::map<PeerId, Node*> by_id_;
    std::vector<std::function<void(const Node&, const MessageEnvelope&)>> delivery_observers_;
    std::vector<std::function<void(const NodeId&, std::uint64_t, const std::string&)>>
        drop_observers_;
};

} // namespace embchord::sim
