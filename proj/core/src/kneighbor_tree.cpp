#include "dyntree/kneighbor_tree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "dyntree/error.hpp"

namespace dyntree {

KNeighborTree KNeighborTree::bulk_build(std::span<const LeafInit> leaves, std::uint32_t k,
                                        Padding padding) {
    if (leaves.empty()) throw Error(ErrorCode::EmptyBuild, "no leaves to build from");
    KNeighborTree t;
    t.k_ = std::max<std::uint32_t>(k, 1);

    std::uint64_t count = leaves.size();
    if (padding == Padding::PowerOfTwo) count = std::bit_ceil(count);
    t.nodes_.reserve(2 * count);

    std::vector<NodeId> level;
    level.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NodeId id = t.alloc(0);
        KNode& n = t.nodes_[id];
        if (i < leaves.size()) {
            n.payload = leaves[i].payload;
            n.owned = leaves[i].owned;
            n.base_eps = leaves[i].eps;
            n.eps = leaves[i].eps;
            n.base_weight = n.weight = leaves[i].weight;
        } else {
            n.payload = kDummyPayload;
            n.owned = KeyRange::everything();
        }
        n.leaf_count = 1;
        if (!level.empty()) {
            t.nodes_[level.back()].right = id;
            n.left = level.back();
        }
        level.push_back(id);
    }

    std::uint32_t h = 0;
    while (level.size() > 1) {
        ++h;
        std::vector<NodeId> up;
        up.reserve(level.size() / 2 + 1);
        std::size_t i = 0;
        auto open = [&]() {
            NodeId id = t.alloc(h);
            if (!up.empty()) {
                t.nodes_[up.back()].right = id;
                t.nodes_[id].left = up.back();
            }
            up.push_back(id);
            return id;
        };
        if (level.size() % 2 == 1) {
            // The single 1-node of this level goes leftmost: it has a right
            // neighbor and all its right neighbors have two children.
            NodeId p = open();
            t.attach(p, 0, level[0]);
            i = 1;
        }
        for (; i < level.size(); i += 2) {
            NodeId p = open();
            t.attach(p, 0, level[i]);
            t.attach(p, 1, level[i + 1]);
        }
        for (NodeId id : up) t.recompute(id);
        level = std::move(up);
    }
    t.root_ = level[0];
    return t;
}

NodeId KNeighborTree::alloc(std::uint32_t height) {
    NodeId id;
    if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
    } else {
        id = static_cast<NodeId>(nodes_.size());
        nodes_.emplace_back();
    }
    KNode& n = nodes_[id];
    std::uint32_t gen = n.gen;
    n = KNode{};
    n.gen = gen;
    n.height = height;
    n.alive = true;
    return id;
}

void KNeighborTree::release(NodeId id) {
    KNode& n = nodes_[id];
    n.alive = false;
    ++n.gen;
    n.eps_owner = kNoOwner;
    free_.push_back(id);
}

void KNeighborTree::attach(NodeId parent, std::size_t pos, NodeId child) {
    KNode& p = nodes_[parent];
    for (std::size_t i = p.nkids; i > pos; --i) p.kids[i] = p.kids[i - 1];
    p.kids[pos] = child;
    ++p.nkids;
    nodes_[child].parent = parent;
}

void KNeighborTree::detach(NodeId parent, NodeId child) {
    KNode& p = nodes_[parent];
    std::size_t i = child_index(parent, child);
    for (; i + 1 < p.nkids; ++i) p.kids[i] = p.kids[i + 1];
    --p.nkids;
    p.kids[p.nkids] = kNoNode;
    nodes_[child].parent = kNoNode;
}

std::size_t KNeighborTree::child_index(NodeId parent, NodeId child) const {
    const KNode& p = nodes_[parent];
    for (std::size_t i = 0; i < p.nkids; ++i)
        if (p.kids[i] == child) return i;
    throw Error(ErrorCode::StructureCorrupt, "child not found under its parent");
}

void KNeighborTree::link_after(NodeId a, NodeId x) {
    NodeId b = nodes_[a].right;
    nodes_[x].left = a;
    nodes_[x].right = b;
    nodes_[a].right = x;
    if (b != kNoNode) nodes_[b].left = x;
}

void KNeighborTree::link_before(NodeId b, NodeId x) {
    NodeId a = nodes_[b].left;
    nodes_[x].right = b;
    nodes_[x].left = a;
    nodes_[b].left = x;
    if (a != kNoNode) nodes_[a].right = x;
}

void KNeighborTree::unlink(NodeId x) {
    KNode& n = nodes_[x];
    if (n.left != kNoNode) nodes_[n.left].right = n.right;
    if (n.right != kNoNode) nodes_[n.right].left = n.left;
    n.left = n.right = kNoNode;
}

void KNeighborTree::shift(NodeId child, NodeId from, NodeId to, bool to_front,
                          MovedReport& rep) {
    detach(from, child);
    attach(to, to_front ? 0 : nodes_[to].nkids, child);
    rep.relinks.push_back({child, from, to});
    ++rep.ops;
}

KNeighborTree::Found KNeighborTree::nearest_one_node(NodeId p, std::uint32_t radius) const {
    Found best;
    NodeId u = nodes_[p].right;
    for (std::uint32_t d = 1; d <= radius && u != kNoNode; ++d, u = nodes_[u].right) {
        if (nodes_[u].nkids == 1) {
            best = {u, true, d};
            break;
        }
    }
    u = nodes_[p].left;
    for (std::uint32_t d = 1; d <= radius && u != kNoNode; ++d, u = nodes_[u].left) {
        if (nodes_[u].nkids == 1) {
            // Ties go right.
            if (best.node == kNoNode || d < best.dist) best = {u, false, d};
            break;
        }
    }
    return best;
}

// Shifts one child per node along the chain from p to q. With q to the right,
// each node hands its last child to the next one; with q to the left, its
// first child to the previous one. Every node strictly between p and q keeps
// its child count.
void KNeighborTree::move_children(NodeId p, const Found& q, MovedReport& rep) {
    std::vector<NodeId> chain{p};
    chain.reserve(q.dist + 1);
    for (std::uint32_t i = 0; i < q.dist; ++i) {
        NodeId last = chain.back();
        chain.push_back(q.right ? nodes_[last].right : nodes_[last].left);
    }
    for (std::size_t i = q.dist; i >= 1; --i) {
        NodeId from = chain[i - 1];
        NodeId to = chain[i];
        if (q.right)
            shift(nodes_[from].last_kid(), from, to, /*to_front=*/true, rep);
        else
            shift(nodes_[from].first_kid(), from, to, /*to_front=*/false, rep);
    }
    ++rep.moves;
    ++total_moves_;
}

KNeighborTree::Inserted KNeighborTree::insert_leaf_after(std::optional<LeafHandle> anchor,
                                                         std::uint64_t payload, KeyRange owned) {
    if (root_ == kNoNode) throw Error(ErrorCode::InvalidHandle, "insert into an unbuilt tree");
    if (anchor && !live(*anchor)) throw Error(ErrorCode::InvalidHandle, "anchor is not a live leaf");

    Inserted out;
    MovedReport& rep = out.report;

    NodeId x = alloc(0);
    nodes_[x].payload = payload;
    nodes_[x].owned = owned;
    nodes_[x].leaf_count = 1;
    rep.created.push_back(x);
    ++rep.ops;
    out.leaf = handle(x);

    if (nodes_[root_].height == 0) {
        NodeId r = root_;
        NodeId top = alloc(1);
        rep.created.push_back(top);
        ++rep.ops;
        if (anchor) {
            attach(top, 0, r);
            attach(top, 1, x);
            link_after(r, x);
        } else {
            attach(top, 0, x);
            attach(top, 1, r);
            link_before(r, x);
        }
        rep.relinks.push_back({r, kNoNode, top});
        rep.relinks.push_back({x, kNoNode, top});
        root_ = top;
    } else {
        NodeId p;
        if (anchor) {
            NodeId a = anchor->id;
            p = nodes_[a].parent;
            attach(p, child_index(p, a) + 1, x);
            link_after(a, x);
        } else {
            NodeId a = leftmost_leaf();
            p = nodes_[a].parent;
            attach(p, 0, x);
            link_before(a, x);
        }
        rep.relinks.push_back({x, kNoNode, p});
        ++rep.ops;

        while (nodes_[p].nkids == 3) {
            // Searching k+1 positions keeps 1-nodes at least k+1 apart when a
            // split has to place a fresh 1-node immediately left of p.
            Found q = nearest_one_node(p, k_ + 1);
            if (q.node != kNoNode) {
                move_children(p, q, rep);
                break;
            }
            NodeId split = alloc(nodes_[p].height);
            rep.created.push_back(split);
            ++rep.ops;
            link_before(p, split);
            NodeId c = nodes_[p].first_kid();
            detach(p, c);
            attach(split, 0, c);
            rep.relinks.push_back({c, p, split});
            ++rep.ops;
            if (p == root_) {
                NodeId top = alloc(nodes_[p].height + 1);
                rep.created.push_back(top);
                ++rep.ops;
                attach(top, 0, split);
                attach(top, 1, p);
                rep.relinks.push_back({split, kNoNode, top});
                rep.relinks.push_back({p, kNoNode, top});
                root_ = top;
                break;
            }
            NodeId pp = nodes_[p].parent;
            attach(pp, child_index(pp, p), split);
            rep.relinks.push_back({split, kNoNode, pp});
            ++rep.ops;
            p = pp;
        }
    }

    std::vector<NodeId> seeds;
    seeds.reserve(rep.relinks.size() * 2 + rep.created.size());
    for (const Relink& r : rep.relinks) {
        if (r.old_parent != kNoNode) seeds.push_back(r.old_parent);
        if (r.new_parent != kNoNode) seeds.push_back(r.new_parent);
    }
    for (NodeId c : rep.created) seeds.push_back(c);
    repair(seeds, rep.ops);
    return out;
}

MovedReport KNeighborTree::delete_leaf(LeafHandle leaf) {
    if (!live(leaf)) throw Error(ErrorCode::InvalidHandle, "leaf is not live");
    if (nodes_[root_].leaf_count == 1 || leaf.id == root_)
        throw Error(ErrorCode::WouldEmpty, "cannot delete the last leaf");

    MovedReport rep;
    std::vector<NodeId> seeds;

    NodeId x = leaf.id;
    NodeId p = nodes_[x].parent;
    detach(p, x);
    unlink(x);
    release(x);
    rep.relinks.push_back({x, p, kNoNode});
    rep.removed.push_back(x);
    ++rep.ops;
    seeds.push_back(p);

    while (true) {
        KNode& n = nodes_[p];
        if (n.nkids == 0) {
            NodeId pp = n.parent;
            detach(pp, p);
            unlink(p);
            release(p);
            rep.relinks.push_back({p, pp, kNoNode});
            rep.removed.push_back(p);
            ++rep.ops;
            seeds.push_back(pp);
            p = pp;
            continue;
        }
        if (p == root_) {
            while (nodes_[root_].nkids == 1) {
                NodeId old = root_;
                NodeId c = nodes_[old].first_kid();
                detach(old, c);
                release(old);
                rep.relinks.push_back({c, old, kNoNode});
                rep.removed.push_back(old);
                ++rep.ops;
                root_ = c;
            }
            break;
        }
        if (n.nkids == 1) {
            if (n.right == kNoNode) {
                // The last node of a level may not be a 1-node: borrow the
                // left neighbor's last child and re-examine the neighbor.
                NodeId u = n.left;
                shift(nodes_[u].last_kid(), u, p, /*to_front=*/true, rep);
                seeds.push_back(u);
                p = u;
                continue;
            }
            Found q = nearest_one_node(p, k_);
            if (q.node == kNoNode) break;
            NodeId emptied;
            if (q.right) {
                move_children(p, q, rep);
                emptied = p;
            } else {
                move_children(q.node, Found{p, true, q.dist}, rep);
                emptied = q.node;
            }
            p = emptied;
            continue;
        }
        break;
    }

    for (const Relink& r : rep.relinks) {
        seeds.push_back(r.old_parent);
        seeds.push_back(r.new_parent);
    }
    std::vector<NodeId> live_seeds;
    live_seeds.reserve(seeds.size());
    for (NodeId s : seeds)
        if (s != kNoNode && nodes_[s].alive) live_seeds.push_back(s);
    repair(live_seeds, rep.ops);
    return rep;
}

bool KNeighborTree::recompute(NodeId id) {
    KNode& n = nodes_[id];
    std::uint64_t count = 0, weight = 0;
    KeyRange owned, eps;
    if (n.height == 0) {
        count = 1;
        weight = n.base_weight;
        owned = n.owned;
        eps = n.base_eps;
    } else {
        for (std::size_t i = 0; i < n.nkids; ++i) {
            const KNode& c = nodes_[n.kids[i]];
            count += c.leaf_count;
            weight += c.weight;
            owned.absorb(c.owned);
            eps.absorb(c.eps);
        }
    }
    if (n.eps_owner != kNoOwner) eps.absorb(KeyRange::point(n.eps_key));
    bool changed = count != n.leaf_count || weight != n.weight || !(owned == n.owned) ||
                   !(eps == n.eps);
    n.leaf_count = count;
    n.weight = weight;
    n.owned = owned;
    n.eps = eps;
    return changed;
}

// Recomputes summaries bottom-up, one height at a time, so that a parent is
// only recomputed after all of its touched children.
void KNeighborTree::repair(std::vector<NodeId>& seeds, std::uint64_t& ops) {
    if (seeds.empty()) return;
    if (++epoch_ == 0) {
        for (KNode& n : nodes_) n.stamp = 0;
        epoch_ = 1;
    }
    std::vector<std::vector<NodeId>> buckets(height() + 2);
    for (NodeId s : seeds) {
        std::uint32_t h = nodes_[s].height;
        if (h >= buckets.size()) buckets.resize(h + 2);
        buckets[h].push_back(s);
    }
    for (std::size_t h = 0; h < buckets.size(); ++h) {
        for (std::size_t i = 0; i < buckets[h].size(); ++i) {
            NodeId id = buckets[h][i];
            KNode& n = nodes_[id];
            if (n.stamp == epoch_) continue;
            n.stamp = epoch_;
            KeyRange before = n.eps;
            bool changed = recompute(id);
            if (!(n.eps == before)) ++ops;
            if (changed && n.parent != kNoNode) {
                if (h + 1 >= buckets.size()) buckets.resize(h + 2);
                buckets[h + 1].push_back(n.parent);
            }
        }
    }
}

std::uint64_t KNeighborTree::set_leaf_owned(NodeId leaf, KeyRange owned) {
    nodes_[leaf].owned = owned;
    std::vector<NodeId> seeds{leaf};
    // a leaf's owned range is its own input, so recompute cannot see it change
    if (nodes_[leaf].parent != kNoNode) seeds.push_back(nodes_[leaf].parent);
    std::uint64_t ops = 0;
    repair(seeds, ops);
    return ops;
}

std::uint64_t KNeighborTree::set_leaf_eps(NodeId leaf, KeyRange eps) {
    nodes_[leaf].base_eps = eps;
    std::vector<NodeId> seeds{leaf};
    std::uint64_t ops = 0;
    repair(seeds, ops);
    return ops;
}

std::uint64_t KNeighborTree::set_leaf_summary(NodeId leaf, KeyRange owned, KeyRange eps,
                                              std::uint64_t weight) {
    KNode& n = nodes_[leaf];
    n.owned = owned;
    n.base_eps = eps;
    n.base_weight = weight;
    std::vector<NodeId> seeds{leaf};
    if (nodes_[leaf].parent != kNoNode) seeds.push_back(nodes_[leaf].parent);
    std::uint64_t ops = 0;
    repair(seeds, ops);
    return ops;
}

std::uint64_t KNeighborTree::set_mark(NodeId node, std::uint32_t owner, std::uint64_t key) {
    nodes_[node].eps_owner = owner;
    nodes_[node].eps_key = key;
    std::vector<NodeId> seeds{node};
    std::uint64_t ops = 1;
    repair(seeds, ops);
    return ops;
}

std::uint64_t KNeighborTree::clear_mark(NodeId node) {
    nodes_[node].eps_owner = kNoOwner;
    std::vector<NodeId> seeds{node};
    std::uint64_t ops = 1;
    repair(seeds, ops);
    return ops;
}

std::uint64_t KNeighborTree::set_marks(std::span<const Mark> marks) {
    std::vector<NodeId> seeds;
    seeds.reserve(marks.size());
    for (const Mark& m : marks) {
        nodes_[m.node].eps_owner = m.owner;
        nodes_[m.node].eps_key = m.key;
        seeds.push_back(m.node);
    }
    std::uint64_t ops = marks.size();
    repair(seeds, ops);
    return ops;
}

NodeId KNeighborTree::ancestor_at_height(LeafHandle leaf, std::uint32_t h) const {
    if (!live(leaf)) throw Error(ErrorCode::InvalidHandle, "leaf is not live");
    return ancestor_at_height(leaf.id, h);
}

NodeId KNeighborTree::ancestor_at_height(NodeId node, std::uint32_t h) const {
    if (h > height()) throw Error(ErrorCode::OutOfRange, "height above the root");
    while (nodes_[node].height < h) node = nodes_[node].parent;
    return node;
}

NodeId KNeighborTree::first_leaf(NodeId node) const {
    while (nodes_[node].height > 0) node = nodes_[node].first_kid();
    return node;
}

NodeId KNeighborTree::last_leaf(NodeId node) const {
    while (nodes_[node].height > 0) node = nodes_[node].last_kid();
    return node;
}

std::uint32_t KNeighborTree::depth(NodeId node) const {
    std::uint32_t d = 0;
    while (nodes_[node].parent != kNoNode) {
        node = nodes_[node].parent;
        ++d;
    }
    return d;
}

std::pair<std::uint32_t, std::uint64_t> KNeighborTree::coordinates(NodeId node) const {
    std::uint64_t idx = 0;
    for (NodeId u = nodes_[node].left; u != kNoNode; u = nodes_[u].left) ++idx;
    return {nodes_[node].height, idx};
}

std::vector<NodeId> KNeighborTree::leaves() const {
    std::vector<NodeId> out;
    if (root_ == kNoNode) return out;
    out.reserve(leaf_count());
    for (NodeId u = leftmost_leaf(); u != kNoNode; u = nodes_[u].right) out.push_back(u);
    return out;
}

std::vector<std::uint64_t> KNeighborTree::leaf_payloads() const {
    std::vector<std::uint64_t> out;
    if (root_ == kNoNode) return out;
    out.reserve(leaf_count());
    for (NodeId u = leftmost_leaf(); u != kNoNode; u = nodes_[u].right)
        out.push_back(nodes_[u].payload);
    return out;
}

std::uint32_t KNeighborTree::height_bound(std::uint64_t n_leaves, std::uint32_t k) {
    k = std::max<std::uint32_t>(k, 1);
    n_leaves = std::max<std::uint64_t>(n_leaves, 1);
    const long double lr = std::log2l(static_cast<long double>(2 * k + 1) / (k + 1));
    const long double ln = std::log2l(static_cast<long double>(n_leaves));
    auto fits = [&](std::int64_t h) {  // h - 1 <= log n / log r
        return static_cast<long double>(h - 1) * lr <= ln * (1 + 1e-15L);
    };
    auto h = static_cast<std::int64_t>(std::floor(ln / lr + 1));
    while (!fits(h)) --h;
    while (fits(h + 1)) ++h;
    return static_cast<std::uint32_t>(h);
}

namespace {

std::string node_path(const KNeighborTree& t, NodeId id) {
    std::vector<std::size_t> steps;
    while (t.node(id).parent != kNoNode) {
        NodeId p = t.node(id).parent;
        const KNode& pn = t.node(p);
        for (std::size_t i = 0; i < pn.nkids; ++i)
            if (pn.kids[i] == id) steps.push_back(i);
        id = p;
    }
    std::string s = "root";
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) s += "/" + std::to_string(*it);
    return s;
}

}  // namespace

std::optional<std::string> KNeighborTree::check_invariants() const {
    if (root_ == kNoNode) return std::nullopt;
    auto fail = [&](NodeId id, const std::string& what) -> std::optional<std::string> {
        return what + " at " + node_path(*this, id);
    };
    const KNode& r = nodes_[root_];
    if (!r.alive) return std::string("root is not alive");
    if (r.parent != kNoNode || r.left != kNoNode || r.right != kNoNode)
        return fail(root_, "root has a parent or level neighbors");
    if (r.height > 0 && r.nkids != 2) return fail(root_, "condition (2): root is a 1-node");

    // Walks each level along its right links. The children of consecutive
    // nodes must be consecutive on the level below, which pins the level
    // lists to the subtree order.
    NodeId first = root_;
    std::size_t reached = 0;
    while (true) {
        if (nodes_[first].left != kNoNode) return fail(first, "level list has a node left of the leftmost");
        const std::uint32_t h = nodes_[first].height;
        NodeId below = h > 0 ? nodes_[first].kids[0] : kNoNode;
        NodeId expect = below;
        std::uint64_t since_one = 0;
        bool seen_one = false;
        for (NodeId id = first, prev = kNoNode; id != kNoNode; prev = id, id = nodes_[id].right) {
            const KNode& n = nodes_[id];
            if (!n.alive) return fail(id, "dead node reachable");
            ++reached;
            if (n.left != prev) return fail(id, "left level link broken");
            if (n.height != h) return fail(id, "condition (1): leaves at unequal depth");
            ++since_one;
            if (h == 0) {
                if (n.nkids != 0) return fail(id, "leaf with children");
                if (n.leaf_count != 1) return fail(id, "leaf_count of a leaf is not 1");
                KeyRange eps = n.base_eps;
                if (n.eps_owner != kNoOwner) eps.absorb(KeyRange::point(n.eps_key));
                if (!(eps == n.eps)) return fail(id, "epsilon summary is stale");
                if (n.weight != n.base_weight) return fail(id, "leaf weight is stale");
                continue;
            }
            if (n.nkids < 1 || n.nkids > 2) return fail(id, "internal node without 1 or 2 children");
            if (n.nkids == 1) {
                if (n.right == kNoNode) return fail(id, "condition (2): 1-node without a right neighbor");
                if (seen_one && since_one <= k_)
                    return fail(id, "condition (3): a 1-node among the k nearest right neighbors of a 1-node");
                seen_one = true;
                since_one = 0;
            }
            std::uint64_t count = 0, weight = 0;
            KeyRange owned, eps;
            for (std::size_t c = 0; c < n.nkids; ++c) {
                NodeId kid = n.kids[c];
                if (kid != expect) return fail(id, "level links disagree with subtree order");
                const KNode& cn = nodes_[kid];
                if (cn.parent != id) return fail(kid, "parent link disagrees with child list");
                count += cn.leaf_count;
                weight += cn.weight;
                owned.absorb(cn.owned);
                eps.absorb(cn.eps);
                expect = cn.right;
            }
            if (n.eps_owner != kNoOwner) eps.absorb(KeyRange::point(n.eps_key));
            if (count != n.leaf_count) return fail(id, "leaf_count is not the sum over children");
            if (weight != n.weight) return fail(id, "weight is not the sum over children");
            if (!(owned == n.owned)) return fail(id, "owned-key summary is stale");
            if (!(eps == n.eps)) return fail(id, "epsilon summary is stale");
        }
        if (h == 0) break;
        if (expect != kNoNode) return fail(expect, "level links disagree with subtree order");
        first = below;
    }

    if (reached != node_count()) return std::string("live node unreachable from the root");
    const std::uint32_t bound = height_bound(leaf_count(), k_);
    if (height() > bound)
        return "height " + std::to_string(height()) + " exceeds bound " + std::to_string(bound);
    return std::nullopt;
}

std::uint64_t KNeighborTree::mark_count() const {
    std::uint64_t marks = 0;
    for (const KNode& n : nodes_)
        if (n.alive && n.eps_owner != kNoOwner) ++marks;
    return marks;
}

std::string KNeighborTree::dump_levels() const {
    std::ostringstream os;
    if (root_ == kNoNode) return {};
    std::vector<NodeId> level{root_};
    while (!level.empty()) {
        std::vector<NodeId> next;
        bool first = true;
        for (NodeId id : level) {
            const KNode& n = nodes_[id];
            if (!first) os << ' ';
            first = false;
            os << '(' << n.leaf_count << ',' << static_cast<unsigned>(n.nkids) << ')';
            for (std::size_t c = 0; c < n.nkids; ++c) next.push_back(n.kids[c]);
        }
        os << '\n';
        level = std::move(next);
    }
    return os.str();
}

}  // namespace dyntree
