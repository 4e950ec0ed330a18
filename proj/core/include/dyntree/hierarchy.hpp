#pragma once

// Grouped variant of the dynamic dictionary. Pseudo-leaves are cut into
// contiguous groups, each kept in its own small k-neighbor tree; a macro
// k-neighbor tree sits on top whose leaves stand for the groups. With f
// levels the construction nests: a group at level L is itself a macro tree
// over level L-1 groups, and level 0 holds pseudo-leaves. A macro leaf and
// the root of its group are the same node of the combined search tree.
//
// f = 0 is the flat structure unchanged.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dyntree/kneighbor_tree.hpp"
#include "dyntree/optimal_tree.hpp"
#include "dyntree/quantizer.hpp"

namespace dyntree {

using SegId = std::uint32_t;
using LeafId = std::uint32_t;
inline constexpr SegId kNoSeg = std::numeric_limits<SegId>::max();

struct NodeRef {
    SegId seg = kNoSeg;
    NodeId node = kNoNode;
    friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

/// Extra audit slack allowed per level of nesting.
inline constexpr double kDefaultLevelC = 4.0;
inline constexpr std::uint32_t kMaxLevels = 3;

class HierTree {
public:
    explicit HierTree(std::uint32_t f = 1);

    static HierTree build(std::span<const std::pair<Key, std::uint64_t>> elements,
                          std::uint32_t f = 1);

    std::optional<Found> search(Key key) const;
    AccessStats access(Key key);
    AccessStats insert_element(Key key);
    AccessStats decrement(Key key);
    AccessStats delete_element(Key key);

    std::optional<std::string> audit(double c_audit = kDefaultAuditC,
                                     double c_level = kDefaultLevelC) const;
    double max_depth_excess() const;

    /// Flat snapshot columns plus the ordinal of the group holding run[0].
    std::string snapshot() const;
    /// Preorder listing of the combined tree: `N <kids> <mark|->` for inner
    /// nodes, `L <owner|-> <mark|->` for pseudo-leaves.
    std::string tree_dump() const;
    std::vector<bool> path_bits(Key key) const;

    std::uint32_t f() const { return f_; }
    bool empty() const { return f_ == 0 ? flat_.empty() : index_.empty(); }
    std::uint64_t size() const { return f_ == 0 ? flat_.size() : index_.size(); }
    std::uint64_t total_weight() const {
        return f_ == 0 ? flat_.total_weight() : index_.empty() ? 0 : phase_.W;
    }
    const PhaseState& phase() const { return f_ == 0 ? flat_.phase() : phase_; }
    std::uint64_t rebuilds() const { return f_ == 0 ? flat_.rebuilds() : rebuilds_; }
    std::vector<ElementView> elements() const;
    std::optional<ElementView> element(Key key) const;

    /// Number of pseudo-leaf groups (level-0 trees).
    std::size_t group_count() const;
    /// Group size threshold g for the children of a level-L segment.
    std::uint64_t capacity(std::uint32_t level) const { return caps_.at(level); }
    /// Depth of the node currently acting as the element's epsilon.
    std::uint32_t epsilon_depth(Key key) const;
    /// Nesting level of the tree holding the element's epsilon; a group root
    /// counts as the macro leaf it stands for.
    std::uint32_t epsilon_level(Key key) const;
    const DynTree& flat() const { return flat_; }

private:
    struct Segment {
        std::uint32_t level = 0;
        KNeighborTree tree;
        SegId parent = kNoSeg;
        NodeId parent_leaf = kNoNode;
        bool alive = false;
    };
    struct Slot {
        ElementId owner = 0;
        SegId seg = kNoSeg;
        NodeId node = kNoNode;
    };
    struct Record {
        Key key = 0;
        WeightPair weights;
        std::vector<LeafId> run;
        NodeRef eps;
        bool alive = false;
    };
    struct Descent {
        NodeRef node;
        std::uint32_t depth = 0;
        bool found = false;
    };

    const KNode& at(NodeRef r) const { return segs_[r.seg].tree.node(r.node); }
    Descent descend(Key key) const;
    NodeRef canon(NodeRef r) const;
    NodeRef cparent(NodeRef r) const;
    std::uint32_t cdepth(NodeRef r) const;
    LeafId first_pseudo(NodeRef r) const;
    LeafId last_pseudo(NodeRef r) const;
    std::optional<LeafId> next_pseudo(LeafId id) const;
    std::optional<LeafId> prev_pseudo(LeafId id) const;
    SegId leftmost_group() const;
    void collect_pseudo(SegId s, std::vector<LeafId>& out) const;
    std::uint64_t seg_size(SegId s) const { return segs_[s].tree.node(segs_[s].tree.root()).weight; }

    std::uint64_t span_bound(NodeRef r) const;
    NodeRef locate_epsilon(const Record& e) const;

    SegId new_seg(std::uint32_t level);
    void free_seg(SegId s);
    SegId build_seg(std::uint32_t level, std::span<const LeafId> ids, std::uint64_t& ops);
    void attach_seg(SegId child, SegId parent, NodeId leaf);
    void sync_up(SegId s, std::uint64_t& ops);
    void collect_owners(SegId s, const MovedReport& rep, std::vector<ElementId>& out) const;

    LeafId new_leaf(ElementId owner);
    LeafId insert_pseudo(std::optional<LeafId> after, ElementId owner,
                         std::vector<ElementId>& touched, std::uint64_t& ops);
    void delete_pseudo(LeafId id, std::vector<ElementId>& touched, std::uint64_t& ops);
    void remove_seg(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops);
    void split(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops);
    void merge(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops);
    void replace_seg(SegId old_seg, std::span<const LeafId> ids, std::vector<ElementId>& touched,
                     std::uint64_t& ops);
    void grow_checks(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops);
    void shrink_checks(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops);

    std::uint64_t set_mark(NodeRef r, ElementId id, Key key);
    std::uint64_t clear_mark(NodeRef r);
    std::uint64_t refresh(std::vector<ElementId>& ids);
    void rebuild_now(std::uint64_t& ops);
    AccessStats finish(AccessStats st, std::uint64_t ops, bool rebuild, std::optional<Key> probe);
    void init_caps(std::uint64_t n);

    std::uint32_t f_;
    DynTree flat_;

    std::vector<Segment> segs_;
    std::vector<SegId> free_segs_;
    SegId top_ = kNoSeg;
    std::vector<Slot> slots_;
    std::vector<LeafId> free_leaves_;
    std::vector<Record> elems_;
    std::vector<ElementId> free_ids_;
    std::map<Key, ElementId> index_;
    std::vector<std::uint64_t> caps_;
    PhaseState phase_{};
    std::uint64_t rebuilds_ = 0;
};

}  // namespace dyntree
