#pragma once

// Level-linked k-neighbor tree over an ordered sequence of leaves.
//
// All leaves sit at the same depth. An internal node has one or two
// children; a node with one child (a "1-node") always has a right neighbor
// on its level, and its min(k, l) nearest right neighbors have two children.
// Leaves are identified by stable handles: restructuring relinks nodes, it
// never copies them.
//
// Besides the shape, every node carries two key summaries that the
// dictionaries built on top of this tree use for routing and containment
// tests: `owned` (range of element keys owning the leaves below) and `eps`
// (range of keys of epsilon marks placed in the subtree).

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dyntree {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();
inline constexpr std::uint32_t kNoOwner = std::numeric_limits<std::uint32_t>::max();
inline constexpr std::uint64_t kDummyPayload = std::numeric_limits<std::uint64_t>::max();

/// Closed key interval; `lo > hi` encodes the empty range.
struct KeyRange {
    std::uint64_t lo = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t hi = 0;

    static KeyRange point(std::uint64_t key) { return {key, key}; }
    static KeyRange everything() { return {0, std::numeric_limits<std::uint64_t>::max()}; }

    bool empty() const { return lo > hi; }
    bool is_point(std::uint64_t key) const { return lo == key && hi == key; }
    void absorb(const KeyRange& o) {
        if (o.lo < lo) lo = o.lo;
        if (o.hi > hi) hi = o.hi;
    }
    friend bool operator==(const KeyRange&, const KeyRange&) = default;
};

struct LeafHandle {
    NodeId id = kNoNode;
    std::uint32_t gen = 0;
    friend bool operator==(const LeafHandle&, const LeafHandle&) = default;
};

struct Relink {
    NodeId node;
    NodeId old_parent;  // kNoNode when the node was just created
    NodeId new_parent;  // kNoNode when the node was removed or became root
};

/// What a single insertion or deletion did to the shape. Every node whose
/// parent changed appears in `relinks`; the leaves whose ancestor at some
/// height changed are exactly the leaves below those nodes.
struct MovedReport {
    std::vector<Relink> relinks;
    std::vector<NodeId> created;
    std::vector<NodeId> removed;
    std::uint32_t moves = 0;   // Move invocations (at most one per insertion)
    std::uint64_t ops = 0;     // relinks, allocations, removals, epsilon-summary changes
};

struct KNode {
    NodeId parent = kNoNode;
    NodeId left = kNoNode;   // same-level neighbors
    NodeId right = kNoNode;
    std::array<NodeId, 3> kids{kNoNode, kNoNode, kNoNode};
    std::uint8_t nkids = 0;
    std::uint32_t height = 0;
    std::uint64_t leaf_count = 0;
    std::uint64_t payload = 0;
    KeyRange owned;
    KeyRange base_eps;  // leaves only: epsilon summary supplied by the owner
    KeyRange eps;
    std::uint64_t base_weight = 1;  // leaves only
    std::uint64_t weight = 1;       // sum of leaf base weights below
    std::uint32_t eps_owner = kNoOwner;
    std::uint64_t eps_key = 0;
    std::uint32_t gen = 0;
    std::uint32_t stamp = 0;
    bool alive = false;

    NodeId first_kid() const { return kids[0]; }
    NodeId last_kid() const { return kids[nkids - 1]; }
};

struct LeafInit {
    std::uint64_t payload;
    KeyRange owned;
    KeyRange eps{};
    std::uint64_t weight = 1;
};

enum class Padding { PowerOfTwo, None };

class KNeighborTree {
public:
    struct Inserted {
        LeafHandle leaf;
        MovedReport report;
    };

    KNeighborTree() = default;

    /// Builds a tree over `leaves` in order. With PowerOfTwo padding the
    /// sequence is extended with dummy leaves (payload kDummyPayload, owned
    /// range = everything) to the next power of two and the tree is perfect.
    static KNeighborTree bulk_build(std::span<const LeafInit> leaves, std::uint32_t k,
                                    Padding padding = Padding::PowerOfTwo);

    /// Inserts a leaf immediately right of `anchor`, or leftmost when the
    /// anchor is empty.
    Inserted insert_leaf_after(std::optional<LeafHandle> anchor, std::uint64_t payload,
                               KeyRange owned);
    MovedReport delete_leaf(LeafHandle leaf);

    NodeId ancestor_at_height(LeafHandle leaf, std::uint32_t h) const;
    NodeId ancestor_at_height(NodeId node, std::uint32_t h) const;

    /// Empty on success, otherwise the first violation found. Also fails when
    /// a live node is unreachable from the root.
    std::optional<std::string> check_invariants() const;

    static std::uint32_t height_bound(std::uint64_t n_leaves, std::uint32_t k);

    // Summaries. Each call repairs the ancestors of the touched node and
    // returns the work done; only epsilon-summary changes count, the other
    // summaries are bookkeeping.
    std::uint64_t set_leaf_owned(NodeId leaf, KeyRange owned);
    std::uint64_t set_leaf_eps(NodeId leaf, KeyRange eps);
    /// Replaces all three leaf summaries at once.
    std::uint64_t set_leaf_summary(NodeId leaf, KeyRange owned, KeyRange eps, std::uint64_t weight);
    void set_payload(NodeId leaf, std::uint64_t payload) { nodes_[leaf].payload = payload; }
    std::uint64_t set_mark(NodeId node, std::uint32_t owner, std::uint64_t key);
    std::uint64_t clear_mark(NodeId node);

    struct Mark {
        NodeId node;
        std::uint32_t owner;
        std::uint64_t key;
    };
    /// Places many marks with a single bottom-up repair.
    std::uint64_t set_marks(std::span<const Mark> marks);
    std::size_t node_count() const { return nodes_.size() - free_.size(); }
    /// Size of the node pool, live and free; ids are below it.
    std::size_t node_slots() const { return nodes_.size(); }
    std::uint64_t mark_count() const;

    bool empty() const { return root_ == kNoNode; }
    NodeId root() const { return root_; }
    std::uint32_t height() const { return root_ == kNoNode ? 0 : nodes_[root_].height; }
    std::uint64_t leaf_count() const { return root_ == kNoNode ? 0 : nodes_[root_].leaf_count; }
    std::uint32_t k() const { return k_; }
    std::uint64_t total_moves() const { return total_moves_; }

    const KNode& node(NodeId id) const { return nodes_[id]; }
    bool alive(NodeId id) const { return id < nodes_.size() && nodes_[id].alive; }
    bool live(LeafHandle h) const {
        return alive(h.id) && nodes_[h.id].gen == h.gen && nodes_[h.id].height == 0;
    }
    LeafHandle handle(NodeId leaf) const { return {leaf, nodes_[leaf].gen}; }

    NodeId first_leaf(NodeId node) const;
    NodeId last_leaf(NodeId node) const;
    NodeId leftmost_leaf() const { return first_leaf(root_); }
    std::uint32_t depth(NodeId node) const;
    /// (height, index within its level); linear in the level width.
    std::pair<std::uint32_t, std::uint64_t> coordinates(NodeId node) const;

    std::vector<NodeId> leaves() const;
    std::vector<std::uint64_t> leaf_payloads() const;

    /// One line per level, root first: `(leaf_count,children)` tuples.
    std::string dump_levels() const;

private:
    friend struct KNeighborTreeTestAccess;

    NodeId alloc(std::uint32_t height);
    void release(NodeId id);
    void attach(NodeId parent, std::size_t pos, NodeId child);
    void detach(NodeId parent, NodeId child);
    std::size_t child_index(NodeId parent, NodeId child) const;
    void link_after(NodeId a, NodeId x);
    void link_before(NodeId b, NodeId x);
    void unlink(NodeId x);
    void shift(NodeId child, NodeId from, NodeId to, bool to_front, MovedReport& rep);

    struct Found {
        NodeId node = kNoNode;
        bool right = false;
        std::uint32_t dist = 0;
    };
    Found nearest_one_node(NodeId p, std::uint32_t radius) const;

    void move_children(NodeId p, const Found& q, MovedReport& rep);
    void repair(std::vector<NodeId>& seeds, std::uint64_t& ops);
    bool recompute(NodeId id);

    std::vector<KNode> nodes_;
    std::vector<NodeId> free_;
    NodeId root_ = kNoNode;
    std::uint32_t k_ = 1;
    std::uint32_t epoch_ = 0;
    std::uint64_t total_moves_ = 0;
};

}  // namespace dyntree
