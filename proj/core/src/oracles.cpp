#include "dyntree/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dyntree {

namespace {

std::optional<Key> opt_key(const std::string& s) {
    if (s == "-") return std::nullopt;
    return std::stoull(s);
}

}  // namespace

std::vector<DumpNode> parse_tree_dump(const std::string& dump) {
    std::vector<DumpNode> nodes;
    std::istringstream in(dump);
    std::vector<std::pair<std::size_t, std::size_t>> open;  // node, children still to come
    std::string line;
    std::uint64_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        std::istringstream ls(line);
        std::string tag, a, b, extra;
        if (!(ls >> tag >> a >> b) || (ls >> extra) || (tag != "N" && tag != "L"))
            throw Error(ErrorCode::ParseError, "tree dump line " + std::to_string(no));
        if (!open.empty() || !nodes.empty()) {
            if (open.empty()) throw Error(ErrorCode::ParseError, "tree dump has more than one root");
        }
        DumpNode n;
        try {
            n.leaf = tag == "L";
            if (n.leaf) n.owner = opt_key(a);
            n.mark = opt_key(b);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, "tree dump line " + std::to_string(no));
        }
        std::size_t id = nodes.size();
        if (!open.empty()) {
            nodes[open.back().first].kids.push_back(id);
            n.depth = nodes[open.back().first].depth + 1;
            if (--open.back().second == 0) open.pop_back();
        }
        std::size_t kids = 0;
        if (!n.leaf) {
            kids = std::stoul(a);
            if (kids == 0) throw Error(ErrorCode::ParseError, "inner node without children");
        }
        nodes.push_back(n);
        if (kids > 0) open.push_back({id, kids});
    }
    if (!open.empty()) throw Error(ErrorCode::ParseError, "tree dump ends inside a node");

    // Preorder means children follow their parent, so a reverse sweep sees
    // every child before its parent.
    std::uint64_t leaf_no = 0;
    for (DumpNode& n : nodes)
        if (n.leaf) {
            n.first_leaf = leaf_no;
            n.end_leaf = ++leaf_no;
        }
    for (std::size_t i = nodes.size(); i-- > 0;) {
        DumpNode& n = nodes[i];
        if (n.leaf) continue;
        n.first_leaf = nodes[n.kids.front()].first_leaf;
        n.end_leaf = nodes[n.kids.back()].end_leaf;
        n.height = 0;
        for (std::size_t c : n.kids) n.height = std::max(n.height, nodes[c].height + 1);
    }
    return nodes;
}

std::vector<SnapshotRow> parse_snapshot(const std::string& snapshot) {
    std::vector<SnapshotRow> rows;
    std::istringstream in(snapshot);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        SnapshotRow r;
        if (!(ls >> r.key >> r.w >> r.w_quant >> r.run_start >> r.run_len >> r.eps_height >> r.eps_depth))
            throw Error(ErrorCode::ParseError, "snapshot line " + std::to_string(rows.size() + 1));
        rows.push_back(r);
    }
    return rows;
}

std::vector<NodeCoord> exhaustive_epsilon_search(const std::vector<DumpNode>& tree, const SnapshotRow& row) {
    std::uint32_t h = 0;
    while ((std::uint64_t{2} << h) <= row.w_quant) ++h;
    std::uint64_t lo = row.run_start, hi = row.run_start + row.run_len;
    std::vector<NodeCoord> out;
    for (const DumpNode& n : tree)
        if (n.height == h && n.first_leaf >= lo && n.end_leaf <= hi) out.push_back({n.height, n.first_leaf});
    return out;
}

std::vector<NodeCoord> exhaustive_epsilon_search(const std::string& dump, const std::string& snapshot, Key key) {
    auto rows = parse_snapshot(snapshot);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SnapshotRow& r) { return r.key == key; });
    if (it == rows.end()) throw Error(ErrorCode::NotFound, "key not in snapshot");
    return exhaustive_epsilon_search(parse_tree_dump(dump), *it);
}

NodeCoord coordinate_of(const DynTree& t, NodeId node) {
    const KNeighborTree& k = t.tree();
    NodeId first = k.first_leaf(node);
    std::uint64_t pos = 0;
    for (NodeId v = k.leftmost_leaf(); v != first; v = k.node(v).right) ++pos;
    return {k.node(node).height, pos};
}

std::optional<DepthViolation> depth_trace_audit(std::span<const TraceOp> trace, double c, std::uint32_t f) {
    HierTree t(f);
    for (std::uint64_t step = 0; step < trace.size(); ++step) {
        Observation o = observe(t, trace[step]);
        if (o.error)
            throw Error(*o.error, "trace step " + std::to_string(step) + " is not replayable");
        if (auto bad = t.audit(std::numeric_limits<double>::infinity(), 0))
            throw Error(ErrorCode::StructureCorrupt, "step " + std::to_string(step) + ": " + *bad);
        if (t.empty()) continue;
        double W = static_cast<double>(t.total_weight());
        double logn = std::log2(static_cast<double>(t.size()));
        for (const SnapshotRow& r : parse_snapshot(t.snapshot())) {
            double bound = std::min(std::log2(W / static_cast<double>(r.w)), logn);
            double excess = static_cast<double>(r.eps_depth) - bound;
            if (excess > c + 1e-9) return DepthViolation{step, r.key, excess};
        }
    }
    return std::nullopt;
}

}  // namespace dyntree
