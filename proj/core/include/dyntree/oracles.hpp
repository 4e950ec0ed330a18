#pragma once

// Brute-force checks that work from the text dumps of a structure rather
// than its internals.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyntree/error.hpp"
#include "dyntree/hierarchy.hpp"
#include "dyntree/optimal_tree.hpp"
#include "dyntree/reference_dictionary.hpp"
#include "dyntree/trace.hpp"

namespace dyntree {

struct DumpNode {
    bool leaf = false;
    std::optional<Key> owner;
    std::optional<Key> mark;
    std::vector<std::size_t> kids;
    std::uint32_t height = 0;  // longest path down to a leaf
    std::uint32_t depth = 0;
    std::uint64_t first_leaf = 0;
    std::uint64_t end_leaf = 0;  // one past the last leaf below
};

/// Nodes in preorder; index 0 is the root. Throws ParseError.
std::vector<DumpNode> parse_tree_dump(const std::string& dump);

struct SnapshotRow {
    Key key = 0;
    std::uint64_t w = 0, w_quant = 0, run_start = 0, run_len = 0, eps_height = 0, eps_depth = 0;
};

/// Accepts the flat columns with an optional trailing group column.
std::vector<SnapshotRow> parse_snapshot(const std::string& snapshot);

/// A node of an equal-depth tree, named by its height and leftmost leaf.
struct NodeCoord {
    std::uint32_t height = 0;
    std::uint64_t first_leaf = 0;
    friend bool operator==(const NodeCoord&, const NodeCoord&) = default;
    friend auto operator<=>(const NodeCoord&, const NodeCoord&) = default;
};

/// Every node of height floor(log2 w') whose leaves all belong to the run.
std::vector<NodeCoord> exhaustive_epsilon_search(const std::vector<DumpNode>& tree, const SnapshotRow& row);
std::vector<NodeCoord> exhaustive_epsilon_search(const std::string& dump, const std::string& snapshot, Key key);

NodeCoord coordinate_of(const DynTree& t, NodeId node);

/// Applies one operation and reports what a caller can observe; domain
/// errors are captured in the observation instead of thrown.
template <class Dict>
Observation observe(Dict& d, const TraceOp& op) {
    Observation o;
    try {
        switch (op.kind) {
            case OpKind::Search: d.search(op.key); break;
            case OpKind::Access: d.access(op.key); break;
            case OpKind::Insert: d.insert_element(op.key); break;
            case OpKind::Decrement: d.decrement(op.key); break;
            case OpKind::Delete: d.delete_element(op.key); break;
        }
    } catch (const Error& e) {
        o.error = e.code();
    }
    auto found = d.search(op.key);
    o.present = found.has_value();
    o.weight = found ? found->element.w : 0;
    o.n = d.size();
    o.W = d.total_weight();
    return o;
}

struct DepthViolation {
    std::uint64_t step = 0;
    Key key = 0;
    double excess = 0;  // depth - min(log2(W/w), log2 n)
};

/// Replays `trace` on a structure with f levels (0 = flat), running the
/// structural audit after every step and checking every element's epsilon
/// depth against min(log2(W/w), log2 n) + c from the snapshot. Domain errors
/// in the trace and structural faults throw.
std::optional<DepthViolation> depth_trace_audit(std::span<const TraceOp> trace, double c,
                                                std::uint32_t f = 0);

}  // namespace dyntree
