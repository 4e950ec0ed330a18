#include "dyntree/hierarchy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "dyntree/error.hpp"

namespace dyntree {

namespace {

std::uint32_t ceil_log2(std::uint64_t n) {
    return n <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(n - 1));
}

std::uint32_t tree_k(std::uint64_t leaves) { return std::max<std::uint32_t>(2, ceil_log2(leaves)); }

// g = 2 ceil(log n)^2, with a floor so tiny inputs still form real groups.
std::uint64_t group_cap(std::uint64_t n) {
    std::uint64_t l = std::max<std::uint32_t>(1, ceil_log2(n));
    return std::max<std::uint64_t>(8, 2 * l * l);
}

// Part sizes in [cap/4, cap) aiming at cap/2; a single part when m < cap/4.
std::vector<std::size_t> partition(std::size_t m, std::uint64_t cap) {
    std::size_t quarter = cap / 4;
    std::size_t q = std::max<std::size_t>(1, (m * 2 + cap / 2) / cap);
    std::size_t lo = (m + cap - 2) / (cap - 1);
    std::size_t hi = std::max<std::size_t>(1, m / quarter);
    q = std::clamp(q, lo, std::max(lo, hi));
    std::vector<std::size_t> sizes(q, m / q);
    for (std::size_t i = 0; i < m % q; ++i) ++sizes[i];
    return sizes;
}

}  // namespace

HierTree::HierTree(std::uint32_t f) : f_(f) {
    if (f > kMaxLevels) throw Error(ErrorCode::OutOfRange, "f must be at most 3");
}

void HierTree::init_caps(std::uint64_t n) {
    caps_.assign(f_ + 1, 0);
    if (f_ == 0) return;
    caps_[f_] = group_cap(n);
    for (std::uint32_t L = f_ - 1; L >= 1; --L) caps_[L] = group_cap(caps_[L + 1]);
}

HierTree HierTree::build(std::span<const std::pair<Key, std::uint64_t>> elements, std::uint32_t f) {
    HierTree t(f);
    if (f == 0) {
        t.flat_ = DynTree::build(elements);
        return t;
    }
    if (elements.empty()) throw Error(ErrorCode::EmptyBuild, "no elements");
    std::uint64_t W = 0;
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (i > 0 && elements[i - 1].first >= elements[i].first)
            throw Error(ErrorCode::KeyOrder, "keys must be strictly increasing");
        if (elements[i].second == 0) throw Error(ErrorCode::OutOfRange, "weight must be >= 1");
        W += elements[i].second;
    }
    t.phase_ = PhaseState::start(W, elements.size());
    t.init_caps(elements.size());

    std::vector<LeafId> ids;
    t.elems_.reserve(elements.size());
    for (std::size_t i = 0; i < elements.size(); ++i) {
        Record r;
        r.key = elements[i].first;
        r.weights = {elements[i].second, quantize(elements[i].second, t.phase_)};
        r.alive = true;
        for (std::uint64_t j = 0; j < 2 * r.weights.w_quant; ++j) {
            LeafId id = t.new_leaf(static_cast<ElementId>(i));
            r.run.push_back(id);
            ids.push_back(id);
        }
        t.elems_.push_back(std::move(r));
        t.index_.emplace_hint(t.index_.end(), elements[i].first, static_cast<ElementId>(i));
    }
    std::uint64_t ops = 0;
    t.top_ = t.build_seg(f, ids, ops);

    std::unordered_map<SegId, std::vector<KNeighborTree::Mark>> marks;
    for (std::size_t i = 0; i < t.elems_.size(); ++i) {
        Record& e = t.elems_[i];
        e.eps = t.locate_epsilon(e);
        marks[e.eps.seg].push_back({e.eps.node, static_cast<std::uint32_t>(i), e.key});
    }
    for (auto& [s, m] : marks) t.segs_[s].tree.set_marks(m);
    for (std::uint32_t L = 0; L < f; ++L)
        for (SegId s = 0; s < t.segs_.size(); ++s)
            if (t.segs_[s].alive && t.segs_[s].level == L) {
                const KNode& r = t.segs_[s].tree.node(t.segs_[s].tree.root());
                t.segs_[t.segs_[s].parent].tree.set_leaf_summary(t.segs_[s].parent_leaf, r.owned,
                                                                 r.eps, r.weight);
            }
    return t;
}

// ---- segments ----

SegId HierTree::new_seg(std::uint32_t level) {
    SegId s;
    if (!free_segs_.empty()) {
        s = free_segs_.back();
        free_segs_.pop_back();
    } else {
        s = static_cast<SegId>(segs_.size());
        segs_.emplace_back();
    }
    segs_[s] = Segment{};
    segs_[s].level = level;
    segs_[s].alive = true;
    return s;
}

void HierTree::free_seg(SegId s) {
    if (segs_[s].level > 0)
        for (std::uint64_t c : segs_[s].tree.leaf_payloads()) free_seg(static_cast<SegId>(c));
    segs_[s] = Segment{};
    free_segs_.push_back(s);
}

SegId HierTree::build_seg(std::uint32_t level, std::span<const LeafId> ids, std::uint64_t& ops) {
    SegId s = new_seg(level);
    std::vector<LeafInit> inits;
    inits.reserve(ids.size());
    if (level == 0) {
        for (LeafId id : ids) inits.push_back({id, KeyRange::point(elems_[slots_[id].owner].key)});
        KNeighborTree t = KNeighborTree::bulk_build(inits, tree_k(inits.size()), Padding::None);
        std::vector<NodeId> leaves = t.leaves();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            slots_[ids[i]].seg = s;
            slots_[ids[i]].node = leaves[i];
        }
        ops += t.node_count();
        segs_[s].tree = std::move(t);
        return s;
    }
    std::vector<SegId> kids;
    std::size_t off = 0;
    for (std::size_t sz : partition(ids.size(), caps_[level])) {
        SegId c = build_seg(level - 1, ids.subspan(off, sz), ops);
        off += sz;
        kids.push_back(c);
        const KNode& r = segs_[c].tree.node(segs_[c].tree.root());
        inits.push_back({c, r.owned, r.eps, r.weight});
    }
    KNeighborTree t = KNeighborTree::bulk_build(inits, tree_k(inits.size()), Padding::None);
    std::vector<NodeId> leaves = t.leaves();
    for (std::size_t i = 0; i < kids.size(); ++i) {
        segs_[kids[i]].parent = s;
        segs_[kids[i]].parent_leaf = leaves[i];
    }
    ops += t.node_count();
    segs_[s].tree = std::move(t);
    return s;
}

void HierTree::attach_seg(SegId child, SegId parent, NodeId leaf) {
    segs_[child].parent = parent;
    segs_[child].parent_leaf = leaf;
    segs_[parent].tree.set_payload(leaf, child);
}

// Pushes a changed root summary into the macro leaf above, level by level.
// Group sizes matter only below the top, so the top tree keeps the weights
// it was built with.
void HierTree::sync_up(SegId s, std::uint64_t& ops) {
    while (segs_[s].parent != kNoSeg) {
        SegId p = segs_[s].parent;
        NodeId leaf = segs_[s].parent_leaf;
        KNode r = segs_[s].tree.node(segs_[s].tree.root());
        const KNode& l = segs_[p].tree.node(leaf);
        std::uint64_t weight = p == top_ ? l.base_weight : r.weight;
        if (l.owned == r.owned && l.base_eps == r.eps && l.base_weight == weight) return;
        ops += segs_[p].tree.set_leaf_summary(leaf, r.owned, r.eps, weight);
        s = p;
    }
}

// ---- combined-tree navigation ----

NodeRef HierTree::canon(NodeRef r) const {
    while (segs_[r.seg].level > 0 && at(r).height == 0) {
        SegId c = static_cast<SegId>(at(r).payload);
        r = {c, segs_[c].tree.root()};
    }
    return r;
}

NodeRef HierTree::cparent(NodeRef r) const {
    const KNode& n = at(r);
    if (n.parent != kNoNode) return {r.seg, n.parent};
    SegId s = r.seg;
    while (segs_[s].parent != kNoSeg) {
        SegId p = segs_[s].parent;
        NodeId up = segs_[p].tree.node(segs_[s].parent_leaf).parent;
        if (up != kNoNode) return {p, up};
        s = p;
    }
    return {};
}

std::uint32_t HierTree::cdepth(NodeRef r) const {
    std::uint32_t d = segs_[r.seg].tree.depth(r.node);
    for (SegId s = r.seg; segs_[s].parent != kNoSeg; s = segs_[s].parent)
        d += segs_[segs_[s].parent].tree.depth(segs_[s].parent_leaf);
    return d;
}

LeafId HierTree::first_pseudo(NodeRef r) const {
    r = canon(r);
    while (at(r).height > 0) r = canon({r.seg, at(r).first_kid()});
    return static_cast<LeafId>(at(r).payload);
}

LeafId HierTree::last_pseudo(NodeRef r) const {
    r = canon(r);
    while (at(r).height > 0) r = canon({r.seg, at(r).last_kid()});
    return static_cast<LeafId>(at(r).payload);
}

std::optional<LeafId> HierTree::next_pseudo(LeafId id) const {
    const Slot& sl = slots_[id];
    NodeId nb = segs_[sl.seg].tree.node(sl.node).right;
    if (nb != kNoNode) return static_cast<LeafId>(segs_[sl.seg].tree.node(nb).payload);
    for (SegId s = sl.seg; segs_[s].parent != kNoSeg; s = segs_[s].parent) {
        SegId p = segs_[s].parent;
        nb = segs_[p].tree.node(segs_[s].parent_leaf).right;
        if (nb != kNoNode) return first_pseudo({p, nb});
    }
    return std::nullopt;
}

std::optional<LeafId> HierTree::prev_pseudo(LeafId id) const {
    const Slot& sl = slots_[id];
    NodeId nb = segs_[sl.seg].tree.node(sl.node).left;
    if (nb != kNoNode) return static_cast<LeafId>(segs_[sl.seg].tree.node(nb).payload);
    for (SegId s = sl.seg; segs_[s].parent != kNoSeg; s = segs_[s].parent) {
        SegId p = segs_[s].parent;
        nb = segs_[p].tree.node(segs_[s].parent_leaf).left;
        if (nb != kNoNode) return last_pseudo({p, nb});
    }
    return std::nullopt;
}

SegId HierTree::leftmost_group() const {
    SegId s = top_;
    while (segs_[s].level > 0)
        s = static_cast<SegId>(segs_[s].tree.node(segs_[s].tree.leftmost_leaf()).payload);
    return s;
}

void HierTree::collect_pseudo(SegId s, std::vector<LeafId>& out) const {
    for (std::uint64_t p : segs_[s].tree.leaf_payloads()) {
        if (segs_[s].level == 0)
            out.push_back(static_cast<LeafId>(p));
        else
            collect_pseudo(static_cast<SegId>(p), out);
    }
}

std::size_t HierTree::group_count() const {
    if (f_ == 0) return 1;
    std::size_t count = 0;
    for (const Segment& s : segs_)
        if (s.alive && s.level == 0) ++count;
    return count;
}

// ---- epsilon ----

// Upper bound on the pseudo-leaves below a node, from its height alone: a
// level-0 node of height h has at most 2^h, a macro node of height h at most
// 2^h groups of fewer than g leaves each.
std::uint64_t HierTree::span_bound(NodeRef r) const {
    std::uint64_t h = std::uint64_t{1} << at(r).height;
    std::uint32_t level = segs_[r.seg].level;
    return level == 0 ? h : h * caps_[level];
}

// The highest ancestor of the run's w'-th leaf whose span bound is at most
// w'. It covers a contiguous stretch of at most w' leaves around a leaf with
// w'-1 run leaves to its left and w' to its right, so it stays inside the run.
NodeRef HierTree::locate_epsilon(const Record& e) const {
    if (index_.size() == 1) return canon({top_, segs_[top_].tree.root()});
    std::uint64_t wq = e.weights.w_quant;
    if (e.run.size() != 2 * wq) throw Error(ErrorCode::StructureCorrupt, "run length differs from 2w'");
    const Slot& sl = slots_[e.run[wq - 1]];
    NodeRef r{sl.seg, sl.node};
    for (NodeRef p = cparent(r); p.seg != kNoSeg; p = cparent(p))
        if (span_bound(p) <= wq) r = p;
    if (!at(r).owned.is_point(e.key))
        throw Error(ErrorCode::StructureCorrupt,
                    "epsilon candidate of key " + std::to_string(e.key) + " leaves its run");
    return r;
}

std::uint64_t HierTree::set_mark(NodeRef r, ElementId id, Key key) {
    std::uint64_t ops = segs_[r.seg].tree.set_mark(r.node, id, key);
    sync_up(r.seg, ops);
    return ops;
}

std::uint64_t HierTree::clear_mark(NodeRef r) {
    std::uint64_t ops = segs_[r.seg].tree.clear_mark(r.node);
    sync_up(r.seg, ops);
    return ops;
}

std::uint64_t HierTree::refresh(std::vector<ElementId>& ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::uint64_t ops = 0;
    for (ElementId id : ids) {
        Record& e = elems_[id];
        if (!e.alive) continue;
        NodeRef v = locate_epsilon(e);
        NodeRef old = e.eps;
        if (old != v && old.seg < segs_.size() && segs_[old.seg].alive &&
            segs_[old.seg].tree.alive(old.node) && at(old).eps_owner == id)
            ops += clear_mark(old);
        if (at(v).eps_owner != id || at(v).eps_key != e.key) ops += set_mark(v, id, e.key);
        e.eps = v;
    }
    return ops;
}

// ---- pseudo-leaf maintenance ----

void HierTree::collect_owners(SegId s, const MovedReport& rep, std::vector<ElementId>& out) const {
    const KNeighborTree& t = segs_[s].tree;
    for (const Relink& r : rep.relinks) {
        for (NodeId x : {r.node, r.new_parent}) {
            if (x == kNoNode || !t.alive(x)) continue;
            out.push_back(slots_[first_pseudo({s, x})].owner);
            out.push_back(slots_[last_pseudo({s, x})].owner);
        }
    }
}

LeafId HierTree::new_leaf(ElementId owner) {
    LeafId id;
    if (!free_leaves_.empty()) {
        id = free_leaves_.back();
        free_leaves_.pop_back();
    } else {
        id = static_cast<LeafId>(slots_.size());
        slots_.emplace_back();
    }
    slots_[id] = Slot{owner, kNoSeg, kNoNode};
    return id;
}

LeafId HierTree::insert_pseudo(std::optional<LeafId> after, ElementId owner,
                               std::vector<ElementId>& touched, std::uint64_t& ops) {
    LeafId id = new_leaf(owner);
    SegId s;
    std::optional<LeafHandle> anchor;
    if (after) {
        s = slots_[*after].seg;
        anchor = segs_[s].tree.handle(slots_[*after].node);
    } else {
        s = leftmost_group();
    }
    auto ins = segs_[s].tree.insert_leaf_after(anchor, id, KeyRange::point(elems_[owner].key));
    slots_[id].seg = s;
    slots_[id].node = ins.leaf.id;
    ops += ins.report.ops;
    collect_owners(s, ins.report, touched);
    sync_up(s, ops);
    grow_checks(s, touched, ops);
    return id;
}

void HierTree::delete_pseudo(LeafId id, std::vector<ElementId>& touched, std::uint64_t& ops) {
    Slot sl = slots_[id];
    SegId s = sl.seg;
    if (segs_[s].tree.leaf_count() == 1) {
        remove_seg(s, touched, ops);
        s = kNoSeg;
    } else {
        MovedReport rep = segs_[s].tree.delete_leaf(segs_[s].tree.handle(sl.node));
        ops += rep.ops;
        collect_owners(s, rep, touched);
        sync_up(s, ops);
    }
    slots_[id] = Slot{};
    free_leaves_.push_back(id);
    if (s != kNoSeg) shrink_checks(s, touched, ops);
}

// Drops an emptied segment; a parent left without children goes with it.
void HierTree::remove_seg(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops) {
    SegId p = segs_[s].parent;
    if (p == kNoSeg) throw Error(ErrorCode::StructureCorrupt, "emptying the top segment");
    if (segs_[p].tree.leaf_count() == 1) {
        remove_seg(p, touched, ops);
        return;
    }
    MovedReport rep = segs_[p].tree.delete_leaf(segs_[p].tree.handle(segs_[s].parent_leaf));
    ops += rep.ops;
    free_seg(s);
    collect_owners(p, rep, touched);
    sync_up(p, ops);
    shrink_checks(p, touched, ops);
}

void HierTree::replace_seg(SegId old_seg, std::span<const LeafId> ids,
                           std::vector<ElementId>& touched, std::uint64_t& ops) {
    SegId p = segs_[old_seg].parent;
    NodeId leaf = segs_[old_seg].parent_leaf;
    std::uint32_t level = segs_[old_seg].level;
    free_seg(old_seg);

    std::vector<std::span<const LeafId>> parts;
    if (ids.size() >= caps_[segs_[p].level]) {
        parts.push_back(ids.first(ids.size() / 2));
        parts.push_back(ids.subspan(ids.size() / 2));
    } else {
        parts.push_back(ids);
    }
    NodeId cur = leaf;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        SegId c = build_seg(level, parts[i], ops);
        const KNode r = segs_[c].tree.node(segs_[c].tree.root());
        if (i == 0) {
            attach_seg(c, p, leaf);
        } else {
            auto ins = segs_[p].tree.insert_leaf_after(segs_[p].tree.handle(cur), c, r.owned);
            ops += ins.report.ops;
            attach_seg(c, p, ins.leaf.id);
            collect_owners(p, ins.report, touched);
            cur = ins.leaf.id;
        }
        ops += segs_[p].tree.set_leaf_summary(segs_[c].parent_leaf, r.owned, r.eps, r.weight);
    }
    for (LeafId id : ids)
        if (touched.empty() || touched.back() != slots_[id].owner) touched.push_back(slots_[id].owner);
    sync_up(p, ops);
}

void HierTree::split(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops) {
    std::vector<LeafId> ids;
    collect_pseudo(s, ids);
    replace_seg(s, ids, touched, ops);
}

void HierTree::merge(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops) {
    SegId p = segs_[s].parent;
    const KNode& ln = segs_[p].tree.node(segs_[s].parent_leaf);
    bool s_left = ln.right != kNoNode;
    SegId o = static_cast<SegId>(segs_[p].tree.node(s_left ? ln.right : ln.left).payload);
    SegId L = s_left ? s : o;
    SegId R = s_left ? o : s;
    std::vector<LeafId> ids;
    collect_pseudo(L, ids);
    collect_pseudo(R, ids);
    MovedReport rep = segs_[p].tree.delete_leaf(segs_[p].tree.handle(segs_[R].parent_leaf));
    ops += rep.ops;
    free_seg(R);
    collect_owners(p, rep, touched);
    replace_seg(L, ids, touched, ops);
}

void HierTree::grow_checks(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops) {
    while (s != top_) {
        SegId p = segs_[s].parent;
        if (seg_size(s) >= caps_[segs_[p].level]) split(s, touched, ops);
        s = p;
    }
}

// Undersized groups merge with a neighbor, re-splitting when the union is
// too large.
void HierTree::shrink_checks(SegId s, std::vector<ElementId>& touched, std::uint64_t& ops) {
    while (s != top_) {
        SegId p = segs_[s].parent;
        if (seg_size(s) < caps_[segs_[p].level] / 4 && segs_[p].tree.leaf_count() >= 2)
            merge(s, touched, ops);
        s = p;
    }
}

// ---- dictionary operations ----

HierTree::Descent HierTree::descend(Key key) const {
    if (top_ == kNoSeg) return {};
    NodeRef v = canon({top_, segs_[top_].tree.root()});
    std::uint32_t d = 0;
    for (;;) {
        const KNode& n = at(v);
        if (n.eps_owner != kNoOwner) return {v, d, n.eps_key == key};
        if (n.nkids == 0 || n.eps.empty()) return {v, d, false};
        NodeId next;
        if (n.nkids == 2) {
            const KNode& l = segs_[v.seg].tree.node(n.kids[0]);
            next = (!l.eps.empty() && key <= l.eps.hi) ? n.kids[0] : n.kids[1];
        } else {
            next = n.kids[0];
        }
        v = canon({v.seg, next});
        ++d;
    }
}

std::optional<Found> HierTree::search(Key key) const {
    if (f_ == 0) return flat_.search(key);
    Descent d = descend(key);
    if (!d.found) return std::nullopt;
    const Record& e = elems_[at(d.node).eps_owner];
    return Found{{e.key, e.weights.w, e.weights.w_quant}, {d.depth, d.depth, 0, rebuilds_}};
}

std::vector<bool> HierTree::path_bits(Key key) const {
    if (f_ == 0) return flat_.path_bits(key);
    if (!descend(key).found) throw Error(ErrorCode::NotFound, "key absent");
    std::vector<bool> bits;
    NodeRef v = canon({top_, segs_[top_].tree.root()});
    while (at(v).eps_owner == kNoOwner) {
        const KNode& n = at(v);
        NodeId next = n.kids[0];
        if (n.nkids == 2) {
            const KNode& l = segs_[v.seg].tree.node(n.kids[0]);
            bool left = !l.eps.empty() && key <= l.eps.hi;
            bits.push_back(!left);
            next = n.kids[left ? 0 : 1];
        } else {
            bits.push_back(false);
        }
        v = canon({v.seg, next});
    }
    return bits;
}

std::vector<ElementView> HierTree::elements() const {
    if (f_ == 0) return flat_.elements();
    std::vector<ElementView> out;
    for (auto [key, id] : index_) out.push_back({key, elems_[id].weights.w, elems_[id].weights.w_quant});
    return out;
}

std::optional<ElementView> HierTree::element(Key key) const {
    if (f_ == 0) {
        const ElementRecord* e = flat_.element(key);
        if (!e) return std::nullopt;
        return ElementView{e->key, e->weights.w, e->weights.w_quant};
    }
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    const Record& e = elems_[it->second];
    return ElementView{e.key, e.weights.w, e.weights.w_quant};
}

std::uint32_t HierTree::epsilon_depth(Key key) const {
    if (f_ == 0) {
        const ElementRecord* e = flat_.element(key);
        if (!e) throw Error(ErrorCode::NotFound, "key absent");
        return flat_.tree().depth(e->epsilon);
    }
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(ErrorCode::NotFound, "key absent");
    return cdepth(elems_[it->second].eps);
}

std::uint32_t HierTree::epsilon_level(Key key) const {
    if (f_ == 0) return 0;
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(ErrorCode::NotFound, "key absent");
    NodeRef v = elems_[it->second].eps;
    std::uint32_t level = segs_[v.seg].level;
    if (at(v).parent == kNoNode && v.seg != top_) ++level;
    return level;
}

void HierTree::rebuild_now(std::uint64_t& ops) {
    std::uint64_t count = rebuilds_ + 1;
    std::vector<std::pair<Key, std::uint64_t>> items;
    items.reserve(index_.size());
    for (auto [key, id] : index_) items.emplace_back(key, elems_[id].weights.w);
    *this = build(items, f_);
    rebuilds_ = count;
    for (const Segment& s : segs_)
        if (s.alive) ops += s.tree.node_count();
    ops += index_.size();
}

AccessStats HierTree::finish(AccessStats st, std::uint64_t ops, bool rebuild,
                             std::optional<Key> probe) {
    if (rebuild) rebuild_now(ops);
    st.structural_ops = ops;
    st.rebuilds = rebuilds_;
    if (probe) {
        Descent d = descend(*probe);
        st.comparisons = st.epsilon_depth = d.depth;
    }
    return st;
}

AccessStats HierTree::access(Key key) {
    if (f_ == 0) return flat_.access(key);
    Descent d = descend(key);
    if (!d.found) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = at(d.node).eps_owner;
    AccessStats st{d.depth, d.depth, 0, 0};
    std::uint64_t ops = 1;

    ++elems_[id].weights.w;
    ++phase_.W;
    bool rebuild = phase_should_end(phase_);
    std::uint64_t nq = quantize(elems_[id].weights.w, phase_);
    if (nq > elems_[id].weights.w_quant) {
        std::vector<ElementId> touched{id};
        LeafId l1 = insert_pseudo(elems_[id].run.back(), id, touched, ops);
        elems_[id].run.push_back(l1);
        LeafId l2 = insert_pseudo(l1, id, touched, ops);
        elems_[id].run.push_back(l2);
        elems_[id].weights.w_quant = nq;
        if (!rebuild) ops += refresh(touched);
    }
    return finish(st, ops, rebuild, std::nullopt);
}

AccessStats HierTree::insert_element(Key key) {
    if (f_ == 0) return flat_.insert_element(key);
    if (index_.contains(key)) throw Error(ErrorCode::DuplicateKey, "key already present");
    if (index_.empty()) {
        std::pair<Key, std::uint64_t> one{key, 1};
        std::uint64_t count = rebuilds_;
        *this = build(std::span(&one, 1), f_);
        rebuilds_ = count;
        std::uint64_t ops = 1;
        for (const Segment& s : segs_)
            if (s.alive) ops += s.tree.node_count();
        return finish({}, ops, false, key);
    }

    std::optional<LeafId> after;
    auto it = index_.lower_bound(key);
    if (it != index_.begin()) after = elems_[std::prev(it)->second].run.back();

    std::vector<ElementId> touched;
    if (index_.size() == 1) touched.push_back(index_.begin()->second);
    ElementId id;
    if (!free_ids_.empty()) {
        id = free_ids_.back();
        free_ids_.pop_back();
    } else {
        id = static_cast<ElementId>(elems_.size());
        elems_.emplace_back();
    }
    elems_[id] = Record{};
    elems_[id].key = key;
    elems_[id].alive = true;
    touched.push_back(id);

    std::uint64_t ops = 1;
    LeafId l1 = insert_pseudo(after, id, touched, ops);
    elems_[id].run.push_back(l1);
    LeafId l2 = insert_pseudo(l1, id, touched, ops);
    elems_[id].run.push_back(l2);
    ++phase_.n;
    ++phase_.W;
    elems_[id].weights = {1, quantize(1, phase_)};
    index_.emplace(key, id);
    bool rebuild = phase_should_end(phase_);
    if (!rebuild) ops += refresh(touched);
    return finish({}, ops, rebuild, key);
}

AccessStats HierTree::decrement(Key key) {
    if (f_ == 0) return flat_.decrement(key);
    Descent d = descend(key);
    if (!d.found) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = at(d.node).eps_owner;
    if (elems_[id].weights.w < 2) throw Error(ErrorCode::UseDelete, "weight 1; delete instead");
    AccessStats st{d.depth, d.depth, 0, 0};
    std::uint64_t ops = 1;

    --elems_[id].weights.w;
    --phase_.W;
    bool rebuild = phase_underflow(phase_);
    std::uint64_t nq = quantize(elems_[id].weights.w, phase_);
    if (nq < elems_[id].weights.w_quant) {
        std::vector<ElementId> touched{id};
        for (int i = 0; i < 2; ++i) {
            LeafId l = elems_[id].run.back();
            elems_[id].run.pop_back();
            delete_pseudo(l, touched, ops);
        }
        elems_[id].weights.w_quant = nq;
        if (!rebuild) ops += refresh(touched);
    }
    return finish(st, ops, rebuild, std::nullopt);
}

AccessStats HierTree::delete_element(Key key) {
    if (f_ == 0) return flat_.delete_element(key);
    Descent d = descend(key);
    if (!d.found) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = at(d.node).eps_owner;
    if (elems_[id].weights.w != 1)
        throw Error(ErrorCode::UseDecrement, "weight above 1; decrement first");
    AccessStats st{d.depth, d.depth, 0, 0};

    if (index_.size() == 1) {
        std::uint64_t ops = 1;
        for (const Segment& s : segs_)
            if (s.alive) ops += s.tree.node_count();
        std::uint64_t count = rebuilds_;
        *this = HierTree(f_);
        rebuilds_ = count;
        return finish(st, ops, false, std::nullopt);
    }

    std::uint64_t ops = 1;
    std::vector<ElementId> touched;
    ops += clear_mark(elems_[id].eps);
    while (!elems_[id].run.empty()) {
        LeafId l = elems_[id].run.back();
        elems_[id].run.pop_back();
        delete_pseudo(l, touched, ops);
    }
    elems_[id].alive = false;
    elems_[id].eps = {};
    index_.erase(key);
    free_ids_.push_back(id);
    --phase_.n;
    --phase_.W;
    bool rebuild = phase_underflow(phase_);
    if (!rebuild) ops += refresh(touched);
    return finish(st, ops, rebuild, std::nullopt);
}

// ---- audit and dumps ----

double HierTree::max_depth_excess() const {
    if (f_ == 0) return flat_.max_depth_excess();
    double worst = -INFINITY;
    double W = static_cast<double>(phase_.W);
    double logn = std::log2(static_cast<double>(index_.size()));
    for (auto [key, id] : index_) {
        const Record& e = elems_[id];
        double bound = std::min(std::log2(W / static_cast<double>(e.weights.w)), logn);
        worst = std::max(worst, cdepth(e.eps) - bound);
    }
    return worst;
}

std::optional<std::string> HierTree::audit(double c_audit, double c_level) const {
    if (f_ == 0) return flat_.audit(c_audit);
    auto fail = [](Key key, const std::string& what) -> std::optional<std::string> {
        return "key " + std::to_string(key) + ": " + what;
    };
    if (index_.empty()) {
        if (top_ != kNoSeg) return "empty dictionary with live segments";
        return std::nullopt;
    }
    if (top_ == kNoSeg || !segs_[top_].alive || segs_[top_].level != f_ ||
        segs_[top_].parent != kNoSeg)
        return "top segment malformed";

    std::uint64_t marks = 0;
    for (SegId s = 0; s < segs_.size(); ++s) {
        const Segment& sg = segs_[s];
        if (!sg.alive) continue;
        auto where = [s](const std::string& what) { return "segment " + std::to_string(s) + ": " + what; };
        if (auto bad = sg.tree.check_invariants()) return where(*bad);
        const KNode& root = sg.tree.node(sg.tree.root());
        if (s != top_) {
            SegId p = sg.parent;
            if (p >= segs_.size() || !segs_[p].alive || segs_[p].level != sg.level + 1)
                return where("bad parent");
            const KNeighborTree& pt = segs_[p].tree;
            if (!pt.alive(sg.parent_leaf) || pt.node(sg.parent_leaf).height != 0 ||
                pt.node(sg.parent_leaf).payload != s)
                return where("parent leaf does not point back");
            const KNode& l = pt.node(sg.parent_leaf);
            if (!(l.owned == root.owned) || !(l.base_eps == root.eps) ||
                (p != top_ && l.base_weight != root.weight))
                return where("macro leaf summary out of date");
            std::uint64_t cap = caps_[segs_[p].level];
            if (root.weight >= cap) return where("group at or above its split size");
            if (root.weight < cap / 4 && pt.leaf_count() > 1) return where("group below a quarter of capacity");
        }
        marks += sg.tree.mark_count();
        if (sg.level == 0) continue;
        for (NodeId v = 0; v < sg.tree.node_slots(); ++v) {
            if (!sg.tree.alive(v) || sg.tree.node(v).height != 0) continue;
            if (sg.tree.node(v).eps_owner != kNoOwner) return where("mark on a macro leaf");
            SegId c = static_cast<SegId>(sg.tree.node(v).payload);
            if (c >= segs_.size() || !segs_[c].alive || segs_[c].parent != s || segs_[c].parent_leaf != v)
                return where("macro leaf points at a foreign segment");
        }
    }

    std::uint64_t W = 0;
    for (auto [key, id] : index_) W += elems_[id].weights.w;
    if (W != phase_.W || index_.size() != phase_.n) return "phase totals out of sync";
    if (marks != index_.size()) return "stray epsilon marks";

    std::vector<LeafId> order;
    collect_pseudo(top_, order);
    std::size_t pos = 0;
    double logn = std::log2(static_cast<double>(index_.size()));
    double slack = c_audit + c_level * f_;
    for (auto [key, id] : index_) {
        const Record& e = elems_[id];
        if (!e.alive || e.key != key) return fail(key, "index points at a stale record");
        std::uint64_t wq = e.weights.w_quant;
        if (wq != quantize(e.weights.w, phase_)) return fail(key, "w' differs from quantize(w)");
        if (e.run.size() != 2 * wq) return fail(key, "run length differs from 2w'");
        for (LeafId l : e.run) {
            if (pos >= order.size() || order[pos] != l) return fail(key, "run not contiguous or out of order");
            const Slot& sl = slots_[l];
            if (sl.owner != id || sl.seg >= segs_.size() || !segs_[sl.seg].alive ||
                segs_[sl.seg].level != 0 || !segs_[sl.seg].tree.alive(sl.node) ||
                segs_[sl.seg].tree.node(sl.node).payload != l)
                return fail(key, "pseudo-leaf table out of date");
            ++pos;
        }
        NodeRef v;
        try {
            v = locate_epsilon(e);
        } catch (const Error& err) {
            return fail(key, err.what());
        }
        if (v != e.eps) return fail(key, "stored epsilon is stale");
        if (at(v).eps_owner != id || at(v).eps_key != key) return fail(key, "epsilon mark missing");
        // the search stops at the first mark, so reaching v also rules out a
        // marked ancestor
        Descent d = descend(key);
        if (!d.found || d.node != v) return fail(key, "search does not end at its epsilon");
        std::uint32_t depth = d.depth;
        double bound = std::min(std::log2(static_cast<double>(W) / e.weights.w), logn) + slack;
        if (depth > bound + 1e-9)
            return fail(key, "epsilon depth " + std::to_string(depth) + " exceeds bound " +
                                 std::to_string(bound));
    }
    if (pos != order.size()) return "pseudo-leaves outside every run";
    return std::nullopt;
}

std::string HierTree::snapshot() const {
    if (f_ == 0) {
        std::string flat = flat_.snapshot();
        std::string out;
        std::istringstream in(flat);
        for (std::string line; std::getline(in, line);) out += line + " 0\n";
        return out;
    }
    std::unordered_map<LeafId, std::pair<std::uint64_t, std::uint64_t>> where;  // pos, group
    std::uint64_t pos = 0, group = 0;
    auto walk = [&](auto&& self, SegId s) -> void {
        for (std::uint64_t p : segs_[s].tree.leaf_payloads()) {
            if (segs_[s].level == 0)
                where[static_cast<LeafId>(p)] = {pos++, group};
            else
                self(self, static_cast<SegId>(p));
        }
        if (segs_[s].level == 0) ++group;
    };
    if (top_ != kNoSeg) walk(walk, top_);
    std::ostringstream os;
    for (auto [key, id] : index_) {
        const Record& e = elems_[id];
        auto [start, g] = where.at(e.run.front());
        os << key << ' ' << e.weights.w << ' ' << e.weights.w_quant << ' ' << start << ' '
           << e.run.size() << ' ' << at(e.eps).height << ' ' << cdepth(e.eps) << ' ' << g << '\n';
    }
    return os.str();
}

std::string HierTree::tree_dump() const {
    if (f_ == 0) return flat_.tree_dump();
    std::ostringstream os;
    if (top_ == kNoSeg) return {};
    auto mark = [&](const KNode& n) {
        if (n.eps_owner == kNoOwner)
            os << '-';
        else
            os << n.eps_key;
    };
    auto rec = [&](auto&& self, NodeRef v) -> void {
        v = canon(v);
        const KNode& n = at(v);
        if (n.height == 0) {
            os << "L " << elems_[slots_[static_cast<LeafId>(n.payload)].owner].key << ' ';
            mark(n);
            os << '\n';
            return;
        }
        os << "N " << int(n.nkids) << ' ';
        mark(n);
        os << '\n';
        for (std::size_t i = 0; i < n.nkids; ++i) self(self, NodeRef{v.seg, n.kids[i]});
    };
    rec(rec, NodeRef{top_, segs_[top_].tree.root()});
    return os.str();
}

}  // namespace dyntree
