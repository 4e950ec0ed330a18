#pragma once

// Flat dynamic dictionary: every element owns a run of 2*w' consecutive
// leaves of a k-neighbor tree, and one node inside that run (its epsilon
// node) acts as the element's leaf in the logical search tree. The phase
// is rebuilt from scratch when W or n doubles or halves.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dyntree/kneighbor_tree.hpp"
#include "dyntree/quantizer.hpp"

namespace dyntree {

using Key = std::uint64_t;
using ElementId = std::uint32_t;

struct AccessStats {
    std::uint32_t comparisons = 0;
    std::uint32_t epsilon_depth = 0;
    std::uint64_t structural_ops = 0;
    std::uint64_t rebuilds = 0;  // cumulative
    friend bool operator==(const AccessStats&, const AccessStats&) = default;
};

struct ElementRecord {
    Key key = 0;
    WeightPair weights;
    std::vector<LeafHandle> run;
    NodeId epsilon = kNoNode;
    bool alive = false;
};

struct ElementView {
    Key key;
    std::uint64_t w;
    std::uint64_t w_quant;
};

struct Found {
    ElementView element;
    AccessStats stats;
};

inline constexpr double kDefaultAuditC = 8.0;

class DynTree {
public:
    DynTree() = default;

    /// Keys strictly increasing, weights >= 1.
    static DynTree build(std::span<const std::pair<Key, std::uint64_t>> elements);
    /// Same, but quantizes with the given phase start instead of (W, n).
    static DynTree build_in_phase(std::span<const std::pair<Key, std::uint64_t>> elements,
                                  std::uint64_t W0, std::uint64_t n0);

    /// Exact-match lookup through the epsilon summaries; nullopt when absent.
    std::optional<Found> search(Key key) const;

    AccessStats access(Key key);
    AccessStats insert_element(Key key);
    AccessStats decrement(Key key);
    AccessStats delete_element(Key key);

    std::optional<std::string> audit(double c_audit = kDefaultAuditC) const;
    /// Max over elements of depth(eps) - min(log2(W/w), log2 n); the
    /// smallest audit constant that would pass right now.
    double max_depth_excess() const;

    NodeId find_epsilon(const ElementRecord& e) const;
    std::uint32_t epsilon_height(const ElementRecord& e) const;

    /// `key w w' run_start run_len eps_height eps_depth` per element.
    std::string snapshot() const;

    /// Preorder listing: `N <kids> <mark|->` for inner nodes, `L <owner|-> <mark|->`
    /// for leaves, `-` standing for padding or no mark.
    std::string tree_dump() const;

    /// Root-to-epsilon path, 0 = left child. A 1-child node contributes 0.
    std::vector<bool> path_bits(Key key) const;

    bool empty() const { return index_.empty(); }
    std::uint64_t size() const { return index_.size(); }
    std::uint64_t total_weight() const { return index_.empty() ? 0 : phase_.W; }
    const PhaseState& phase() const { return phase_; }
    std::uint64_t rebuilds() const { return rebuilds_; }
    const KNeighborTree& tree() const { return tree_; }
    const ElementRecord* element(Key key) const;
    const ElementRecord& record(ElementId id) const { return elems_[id]; }
    std::vector<ElementView> elements() const;

private:
    struct Descent {
        NodeId node = kNoNode;
        std::uint32_t depth = 0;
    };
    Descent descend(Key key) const;

    ElementId new_record(Key key);
    void collect_owners(const MovedReport& rep, std::vector<ElementId>& out) const;
    std::uint64_t refresh(std::vector<ElementId>& ids);
    void rebuild_now(std::uint64_t& ops);
    void remove_leaves(ElementRecord& e, std::size_t count, std::vector<ElementId>& touched,
                       std::uint64_t& ops);
    AccessStats finish(AccessStats st, std::uint64_t ops, bool rebuild, std::optional<Key> probe);

    KNeighborTree tree_;
    std::vector<ElementRecord> elems_;
    std::vector<ElementId> free_ids_;
    std::map<Key, ElementId> index_;
    PhaseState phase_{};
    std::uint64_t rebuilds_ = 0;
};

}  // namespace dyntree
