#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "embchord/ids.hpp"

namespace embchord::sim {

/// Brute-force ground truth for ring structure: a sorted id list and
/// first-clockwise scans. Shares no code with the routed lookup path, so
/// it can sit in judgment over it.
class RingOracle {
public:
    static RingOracle from_ids(std::vector<NodeId> ids) {
        RingOracle o;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        o.ids_ = std::move(ids);
        return o;
    }

    const std::vector<NodeId>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }

    /// Owner of `key`: the first id clockwise >= key, wrapping to the
    /// smallest id past the top of the ring.
    NodeId successor_of_key(const NodeId& key) const {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), key);
        return it == ids_.end() ? ids_.front() : *it;
    }

    NodeId successor_of(const NodeId& node) const {
        auto it = std::upper_bound(ids_.begin(), ids_.end(), node);
        return it == ids_.end() ? ids_.front() : *it;
    }

    NodeId predecessor_of(const NodeId& node) const {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), node);
        return it == ids_.begin() ? ids_.back() : *(it - 1);
    }

    /// The next `r` distinct ids clockwise, self excluded; shorter on
    /// rings smaller than r+1 nodes.
    std::vector<NodeId> successor_list_of(const NodeId& node, std::size_t r) const {
        std::vector<NodeId> out;
        NodeId cur = node;
        while (out.size() < r) {
            cur = successor_of(cur);
            if (cur == node) break; // wrapped all the way around
            out.push_back(cur);
        }
        return out;
    }

    /// Stabilized finger i (1-based): successor of (node + 2^(i-1)).
    NodeId finger_of(const NodeId& node, unsigned i) const {
        return successor_of_key(node.plus_pow2(i - 1));
    }

    /// Replica set of `key`: the owner plus its r-1 followers.
    std::vector<NodeId> replica_set(const NodeId& key, std::size_t r) const {
        std::vector<NodeId> out;
        NodeId owner = successor_of_key(key);
        out.push_back(owner);
        NodeId cur = owner;
        while (out.size() < r) {
            cur = successor_of(cur);
            if (cur == owner) break;
            out.push_back(cur);
        }
        return out;
    }

    bool contains(const NodeId& id) const {
        return std::binary_search(ids_.begin(), ids_.end(), id);
    }

private:
    std::vector<NodeId> ids_;
};

} // namespace embchord::sim
