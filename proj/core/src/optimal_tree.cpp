#include "dyntree/optimal_tree.hpp"

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

std::uint32_t floor_log2(std::uint64_t n) {
    return static_cast<std::uint32_t>(std::bit_width(n)) - 1;
}

}  // namespace

DynTree DynTree::build(std::span<const std::pair<Key, std::uint64_t>> elements) {
    return build_in_phase(elements, 0, 0);
}

DynTree DynTree::build_in_phase(std::span<const std::pair<Key, std::uint64_t>> elements,
                                std::uint64_t W0, std::uint64_t n0) {
    if (elements.empty()) throw Error(ErrorCode::EmptyBuild, "no elements");
    std::uint64_t W = 0;
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (i > 0 && elements[i - 1].first >= elements[i].first)
            throw Error(ErrorCode::KeyOrder, "keys must be strictly increasing");
        if (elements[i].second == 0) throw Error(ErrorCode::OutOfRange, "weight must be >= 1");
        W += elements[i].second;
    }

    DynTree t;
    t.phase_ = PhaseState::start(W, elements.size());
    if (W0 != 0 && n0 != 0) {
        t.phase_.W0 = W0;
        t.phase_.n0 = n0;
    }
    t.elems_.reserve(elements.size());
    std::vector<LeafInit> leaves;
    for (std::size_t i = 0; i < elements.size(); ++i) {
        auto [key, w] = elements[i];
        ElementRecord rec;
        rec.key = key;
        rec.weights = {w, quantize(w, t.phase_)};
        rec.alive = true;
        for (std::uint64_t j = 0; j < 2 * rec.weights.w_quant; ++j)
            leaves.push_back({i, KeyRange::point(key)});
        t.elems_.push_back(std::move(rec));
        t.index_.emplace_hint(t.index_.end(), key, static_cast<ElementId>(i));
    }

    std::uint32_t k = std::max<std::uint32_t>(2, ceil_log2(elements.size()));
    t.tree_ = KNeighborTree::bulk_build(leaves, k);

    std::vector<NodeId> ids = t.tree_.leaves();
    std::vector<KNeighborTree::Mark> marks;
    marks.reserve(t.elems_.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < t.elems_.size(); ++i) {
        ElementRecord& e = t.elems_[i];
        e.run.reserve(2 * e.weights.w_quant);
        for (std::uint64_t j = 0; j < 2 * e.weights.w_quant; ++j)
            e.run.push_back(t.tree_.handle(ids[pos++]));
        e.epsilon = t.find_epsilon(e);
        marks.push_back({e.epsilon, static_cast<std::uint32_t>(i), e.key});
    }
    t.tree_.set_marks(marks);
    return t;
}

// A lone element owns every leaf, so the root itself is its epsilon.
std::uint32_t DynTree::epsilon_height(const ElementRecord& e) const {
    return index_.size() == 1 ? tree_.height() : floor_log2(e.weights.w_quant);
}

NodeId DynTree::find_epsilon(const ElementRecord& e) const {
    std::uint64_t wq = e.weights.w_quant;
    if (e.run.size() != 2 * wq)
        throw Error(ErrorCode::StructureCorrupt, "run length differs from 2w'");
    NodeId v = tree_.ancestor_at_height(e.run[wq - 1], epsilon_height(e));
    if (!tree_.node(v).owned.is_point(e.key))
        throw Error(ErrorCode::StructureCorrupt,
                    "epsilon candidate of key " + std::to_string(e.key) + " leaves its run");
    return v;
}

DynTree::Descent DynTree::descend(Key key) const {
    if (tree_.empty()) return {};
    NodeId v = tree_.root();
    std::uint32_t d = 0;
    for (;;) {
        const KNode& n = tree_.node(v);
        if (n.eps_owner != kNoOwner) return {n.eps_key == key ? v : kNoNode, d};
        if (n.nkids == 0 || n.eps.empty()) return {kNoNode, d};
        if (n.nkids == 2) {
            const KNode& l = tree_.node(n.kids[0]);
            v = (!l.eps.empty() && key <= l.eps.hi) ? n.kids[0] : n.kids[1];
        } else {
            v = n.kids[0];
        }
        ++d;
    }
}

std::optional<Found> DynTree::search(Key key) const {
    Descent d = descend(key);
    if (d.node == kNoNode) return std::nullopt;
    const ElementRecord& e = elems_[tree_.node(d.node).eps_owner];
    return Found{{e.key, e.weights.w, e.weights.w_quant}, {d.depth, d.depth, 0, rebuilds_}};
}

std::vector<bool> DynTree::path_bits(Key key) const {
    if (descend(key).node == kNoNode) throw Error(ErrorCode::NotFound, "key absent");
    std::vector<bool> bits;
    NodeId v = tree_.root();
    while (tree_.node(v).eps_owner == kNoOwner) {
        const KNode& n = tree_.node(v);
        if (n.nkids == 2) {
            const KNode& l = tree_.node(n.kids[0]);
            bool left = !l.eps.empty() && key <= l.eps.hi;
            bits.push_back(!left);
            v = n.kids[left ? 0 : 1];
        } else {
            bits.push_back(false);
            v = n.kids[0];
        }
    }
    return bits;
}

const ElementRecord* DynTree::element(Key key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &elems_[it->second];
}

std::vector<ElementView> DynTree::elements() const {
    std::vector<ElementView> out;
    out.reserve(index_.size());
    for (auto [key, id] : index_)
        out.push_back({key, elems_[id].weights.w, elems_[id].weights.w_quant});
    return out;
}

ElementId DynTree::new_record(Key key) {
    ElementId id;
    if (!free_ids_.empty()) {
        id = free_ids_.back();
        free_ids_.pop_back();
    } else {
        id = static_cast<ElementId>(elems_.size());
        elems_.emplace_back();
    }
    ElementRecord& e = elems_[id];
    e = ElementRecord{};
    e.key = key;
    e.alive = true;
    return id;
}

// The ancestor at some height of a leaf can only change if a node on its
// root path was relinked. When that matters for an element, the relinked
// node lies inside the element's run, so its first leaf names the element.
void DynTree::collect_owners(const MovedReport& rep, std::vector<ElementId>& out) const {
    for (const Relink& r : rep.relinks) {
        if (!tree_.alive(r.node)) continue;
        for (NodeId leaf : {tree_.first_leaf(r.node), tree_.last_leaf(r.node)}) {
            std::uint64_t p = tree_.node(leaf).payload;
            if (p != kDummyPayload && elems_[p].alive) out.push_back(static_cast<ElementId>(p));
        }
    }
}

std::uint64_t DynTree::refresh(std::vector<ElementId>& ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::uint64_t ops = 0;
    for (ElementId id : ids) {
        ElementRecord& e = elems_[id];
        if (!e.alive) continue;
        NodeId v = find_epsilon(e);
        if (v != e.epsilon && tree_.alive(e.epsilon) && tree_.node(e.epsilon).eps_owner == id)
            ops += tree_.clear_mark(e.epsilon);
        if (tree_.node(v).eps_owner != id || tree_.node(v).eps_key != e.key)
            ops += tree_.set_mark(v, id, e.key);
        e.epsilon = v;
    }
    return ops;
}

void DynTree::remove_leaves(ElementRecord& e, std::size_t count, std::vector<ElementId>& touched,
                            std::uint64_t& ops) {
    for (std::size_t i = 0; i < count; ++i) {
        LeafHandle h = e.run.back();
        e.run.pop_back();
        MovedReport rep = tree_.delete_leaf(h);
        ops += rep.ops;
        collect_owners(rep, touched);
    }
}

void DynTree::rebuild_now(std::uint64_t& ops) {
    std::uint64_t count = rebuilds_ + 1;
    std::vector<std::pair<Key, std::uint64_t>> items;
    items.reserve(index_.size());
    for (auto [key, id] : index_) items.emplace_back(key, elems_[id].weights.w);
    *this = build(items);
    rebuilds_ = count;
    ops += tree_.node_count() + index_.size();
}

AccessStats DynTree::finish(AccessStats st, std::uint64_t ops, bool rebuild,
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

AccessStats DynTree::access(Key key) {
    Descent d = descend(key);
    if (d.node == kNoNode) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = tree_.node(d.node).eps_owner;
    ElementRecord& e = elems_[id];
    AccessStats st{d.depth, d.depth, 0, 0};
    std::uint64_t ops = 1;

    ++e.weights.w;
    ++phase_.W;
    std::uint64_t nq = quantize(e.weights.w, phase_);
    if (nq > e.weights.w_quant) {
        std::vector<ElementId> touched{id};
        LeafHandle anchor = e.run.back();
        for (int i = 0; i < 2; ++i) {
            auto ins = tree_.insert_leaf_after(anchor, id, KeyRange::point(key));
            ops += ins.report.ops;
            collect_owners(ins.report, touched);
            e.run.push_back(ins.leaf);
            anchor = ins.leaf;
        }
        e.weights.w_quant = nq;
        if (!phase_should_end(phase_)) ops += refresh(touched);
    }
    return finish(st, ops, phase_should_end(phase_), std::nullopt);
}

AccessStats DynTree::insert_element(Key key) {
    if (index_.contains(key)) throw Error(ErrorCode::DuplicateKey, "key already present");
    if (index_.empty()) {
        std::pair<Key, std::uint64_t> one{key, 1};
        std::uint64_t count = rebuilds_;
        *this = build(std::span(&one, 1));
        rebuilds_ = count;
        return finish({}, tree_.node_count() + 1, false, key);
    }

    std::optional<LeafHandle> anchor;
    auto it = index_.lower_bound(key);
    if (it != index_.begin()) anchor = elems_[std::prev(it)->second].run.back();

    std::vector<ElementId> touched;
    if (index_.size() == 1) touched.push_back(index_.begin()->second);
    ElementId id = new_record(key);
    touched.push_back(id);
    std::uint64_t ops = 1;
    for (int i = 0; i < 2; ++i) {
        auto ins = tree_.insert_leaf_after(anchor, id, KeyRange::point(key));
        ops += ins.report.ops;
        collect_owners(ins.report, touched);
        elems_[id].run.push_back(ins.leaf);
        anchor = ins.leaf;
    }
    ++phase_.n;
    ++phase_.W;
    elems_[id].weights = {1, quantize(1, phase_)};
    index_.emplace(key, id);
    bool rebuild = phase_should_end(phase_);
    if (!rebuild) ops += refresh(touched);
    return finish({}, ops, rebuild, key);
}

AccessStats DynTree::decrement(Key key) {
    Descent d = descend(key);
    if (d.node == kNoNode) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = tree_.node(d.node).eps_owner;
    ElementRecord& e = elems_[id];
    if (e.weights.w < 2) throw Error(ErrorCode::UseDelete, "weight 1; delete instead");
    AccessStats st{d.depth, d.depth, 0, 0};
    std::uint64_t ops = 1;

    --e.weights.w;
    --phase_.W;
    std::uint64_t nq = quantize(e.weights.w, phase_);
    if (nq < e.weights.w_quant) {
        std::vector<ElementId> touched{id};
        remove_leaves(e, 2, touched, ops);
        e.weights.w_quant = nq;
        if (!phase_underflow(phase_)) ops += refresh(touched);
    }
    return finish(st, ops, phase_underflow(phase_), std::nullopt);
}

AccessStats DynTree::delete_element(Key key) {
    Descent d = descend(key);
    if (d.node == kNoNode) throw Error(ErrorCode::NotFound, "key absent");
    ElementId id = tree_.node(d.node).eps_owner;
    ElementRecord& e = elems_[id];
    if (e.weights.w != 1) throw Error(ErrorCode::UseDecrement, "weight above 1; decrement first");
    AccessStats st{d.depth, d.depth, 0, 0};

    if (index_.size() == 1) {
        std::uint64_t ops = tree_.node_count() + 1;
        std::uint64_t count = rebuilds_;
        *this = DynTree{};
        rebuilds_ = count;
        return finish(st, ops, false, std::nullopt);
    }

    std::uint64_t ops = 1;
    std::vector<ElementId> touched;
    ops += tree_.clear_mark(e.epsilon);
    remove_leaves(e, e.run.size(), touched, ops);
    e.alive = false;
    e.epsilon = kNoNode;
    index_.erase(key);
    free_ids_.push_back(id);
    --phase_.n;
    --phase_.W;
    bool rebuild = phase_underflow(phase_);
    if (!rebuild) ops += refresh(touched);
    return finish(st, ops, rebuild, std::nullopt);
}

double DynTree::max_depth_excess() const {
    double worst = -INFINITY;
    double W = static_cast<double>(phase_.W);
    double logn = std::log2(static_cast<double>(index_.size()));
    for (auto [key, id] : index_) {
        const ElementRecord& e = elems_[id];
        double bound = std::min(std::log2(W / static_cast<double>(e.weights.w)), logn);
        worst = std::max(worst, tree_.depth(e.epsilon) - bound);
    }
    return worst;
}

std::optional<std::string> DynTree::audit(double c_audit) const {
    auto fail = [](Key key, const std::string& what) -> std::optional<std::string> {
        return "key " + std::to_string(key) + ": " + what;
    };
    if (index_.empty()) {
        if (!tree_.empty()) return "empty dictionary over a non-empty tree";
        return std::nullopt;
    }
    if (auto bad = tree_.check_invariants()) return "tree: " + *bad;

    std::uint64_t W = 0;
    for (auto [key, id] : index_) W += elems_[id].weights.w;
    if (W != phase_.W || index_.size() != phase_.n) return "phase totals out of sync";

    std::vector<NodeId> leaves = tree_.leaves();
    std::size_t pos = 0;
    double logn = std::log2(static_cast<double>(index_.size()));
    std::uint64_t marks_expected = 0;
    for (auto [key, id] : index_) {
        const ElementRecord& e = elems_[id];
        if (!e.alive || e.key != key) return fail(key, "index points at a stale record");
        std::uint64_t wq = e.weights.w_quant;
        if (wq != quantize(e.weights.w, phase_)) return fail(key, "w' differs from quantize(w)");
        if (e.run.size() != 2 * wq) return fail(key, "run length differs from 2w'");
        for (LeafHandle h : e.run) {
            if (!tree_.live(h)) return fail(key, "dead handle in run");
            if (pos >= leaves.size() || leaves[pos] != h.id)
                return fail(key, "run not contiguous or out of key order");
            if (tree_.node(h.id).payload != id) return fail(key, "leaf owned by another element");
            ++pos;
        }
        NodeId v;
        try {
            v = find_epsilon(e);
        } catch (const Error& err) {
            return fail(key, err.what());
        }
        if (v != e.epsilon) return fail(key, "stored epsilon is stale");
        const KNode& en = tree_.node(v);
        if (en.eps_owner != id || en.eps_key != key) return fail(key, "epsilon mark missing");
        if (en.height != epsilon_height(e)) return fail(key, "epsilon height differs from floor(log w')");
        // the search stops at the first mark, so reaching v also rules out a
        // marked ancestor
        Descent d = descend(key);
        if (d.node != v) return fail(key, "search does not end at its epsilon");
        std::uint32_t depth = d.depth;
        double bound = std::min(std::log2(static_cast<double>(W) / e.weights.w), logn) + c_audit;
        if (depth > bound + 1e-9)
            return fail(key, "epsilon depth " + std::to_string(depth) + " exceeds bound " +
                                 std::to_string(bound));
        ++marks_expected;
    }
    for (; pos < leaves.size(); ++pos)
        if (tree_.node(leaves[pos]).payload != kDummyPayload)
            return "leaf right of the last run is not padding";
    if (tree_.mark_count() != marks_expected) return "stray epsilon marks in the tree";
    return std::nullopt;
}

std::string DynTree::snapshot() const {
    std::unordered_map<NodeId, std::uint64_t> leaf_pos;
    std::vector<NodeId> leaves = tree_.leaves();
    for (std::size_t i = 0; i < leaves.size(); ++i) leaf_pos[leaves[i]] = i;
    std::ostringstream os;
    for (auto [key, id] : index_) {
        const ElementRecord& e = elems_[id];
        os << key << ' ' << e.weights.w << ' ' << e.weights.w_quant << ' '
           << leaf_pos.at(e.run.front().id) << ' ' << e.run.size() << ' '
           << tree_.node(e.epsilon).height << ' ' << tree_.depth(e.epsilon) << '\n';
    }
    return os.str();
}

std::string DynTree::tree_dump() const {
    std::ostringstream os;
    if (tree_.empty()) return {};
    auto mark = [&](const KNode& n) {
        if (n.eps_owner == kNoOwner)
            os << '-';
        else
            os << n.eps_key;
    };
    std::vector<NodeId> stack{tree_.root()};
    while (!stack.empty()) {
        const KNode& n = tree_.node(stack.back());
        stack.pop_back();
        if (n.height == 0) {
            os << "L ";
            if (n.payload == kDummyPayload)
                os << '-';
            else
                os << elems_[n.payload].key;
        } else {
            os << "N " << int(n.nkids);
        }
        os << ' ';
        mark(n);
        os << '\n';
        for (std::size_t i = n.nkids; i > 0; --i) stack.push_back(n.kids[i - 1]);
    }
    return os.str();
}

}  // namespace dyntree
