#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "dyntree/hierarchy.hpp"
#include "dyntree/optimal_tree.hpp"
#include "dyntree/oracles.hpp"
#include "dyntree/reference_dictionary.hpp"
#include "workload_support.hpp"

using namespace dyntree;

namespace {

using Items = std::vector<std::pair<Key, std::uint64_t>>;

template <class Dict>
void differential(Dict& d, const std::vector<TraceOp>& ops) {
    ReferenceDictionary ref;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        Observation want = ref.apply(ops[i]);
        Observation got = observe(d, ops[i]);
        if (!(want == got)) {
            FAIL_CHECK("step " << i << " op " << char(ops[i].kind) << ' ' << ops[i].key);
            return;
        }
    }
}

std::set<NodeCoord> candidates_of(const DynTree& t, Key key) {
    auto v = exhaustive_epsilon_search(t.tree_dump(), t.snapshot(), key);
    return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("reference dictionary basics") {
    CHECK(reference_apply({}).empty());
    std::vector<TraceOp> ops{{OpKind::Insert, 5}, {OpKind::Search, 5}};
    auto obs = reference_apply(ops);
    REQUIRE(obs.size() == 2);
    CHECK(!obs[1].error);
    CHECK(obs[1].present);
    CHECK(obs[1].weight == 1);
    CHECK(obs[1].n == 1);
    CHECK(obs[1].W == 1);

    ReferenceDictionary r;
    CHECK(r.apply({OpKind::Access, 1}).error == ErrorCode::NotFound);
    r.apply({OpKind::Insert, 1});
    CHECK(r.apply({OpKind::Insert, 1}).error == ErrorCode::DuplicateKey);
    CHECK(r.apply({OpKind::Decrement, 1}).error == ErrorCode::UseDelete);
    r.apply({OpKind::Access, 1});
    CHECK(r.apply({OpKind::Delete, 1}).error == ErrorCode::UseDecrement);
    CHECK(r.apply({OpKind::Decrement, 1}).weight == 1);
    Observation gone = r.apply({OpKind::Delete, 1});
    CHECK(!gone.error);
    CHECK(!gone.present);
    CHECK(gone.n == 0);
    CHECK(gone.W == 0);
}

TEST_CASE("differential against the flat tree") {
    auto ops = test_support::mixed_script(20000, 300, 11);
    DynTree t;
    differential(t, ops);
    CHECK(!t.audit());
}

TEST_CASE("differential against the hierarchy") {
    for (std::uint32_t f : {0u, 1u}) {
        CAPTURE(f);
        auto ops = test_support::mixed_script(20000, 1024, 12 + f);
        HierTree t(f);
        differential(t, ops);
        CHECK(!t.audit());
    }
}

TEST_CASE("tree dump parse") {
    DynTree t = DynTree::build(Items{{0, 1}, {1, 1}, {2, 1}});
    auto nodes = parse_tree_dump(t.tree_dump());
    REQUIRE(!nodes.empty());
    std::uint64_t leaves = std::count_if(nodes.begin(), nodes.end(), [](const DumpNode& n) { return n.leaf; });
    CHECK(nodes[0].first_leaf == 0);
    CHECK(nodes[0].end_leaf == leaves);
    CHECK(nodes[0].height == t.tree().height());
    for (const DumpNode& n : nodes)
        if (n.leaf) CHECK(n.depth == nodes[0].height);
    CHECK_THROWS_AS(parse_tree_dump("N 2 -\nL 0 -\n"), Error);
    CHECK_THROWS_AS(parse_tree_dump("L 0 -\nL 1 -\n"), Error);
    CHECK_THROWS_AS(parse_tree_dump("Q 0 -\n"), Error);
}

TEST_CASE("unit quantized weight: the candidates are the run's leaves") {
    DynTree t = DynTree::build(Items{{0, 1}, {1, 1}, {2, 1}, {3, 1}});
    for (const SnapshotRow& r : parse_snapshot(t.snapshot())) {
        REQUIRE(r.w_quant == 1);
        auto c = candidates_of(t, r.key);
        std::set<NodeCoord> run;
        for (std::uint64_t i = 0; i < r.run_len; ++i) run.insert({0, r.run_start + i});
        CHECK(c == run);
    }
}

TEST_CASE("four-element fixture") {
    DynTree t = DynTree::build_in_phase(Items{{0, 1}, {1, 2}, {2, 4}, {3, 1}}, 4, 4);
    auto rows = parse_snapshot(t.snapshot());
    REQUIRE(rows.size() == 4);
    std::vector<std::uint64_t> heights;
    for (const auto& r : rows) heights.push_back(r.eps_height);
    CHECK(heights == std::vector<std::uint64_t>{0, 1, 2, 0});
    const ElementRecord* e3 = t.element(2);
    REQUIRE(e3);
    NodeCoord eps = coordinate_of(t, e3->epsilon);
    CHECK(rows[2].eps_depth == 2);
    CHECK(candidates_of(t, 2).count(eps) == 1);
}

TEST_CASE("random snapshots: find_epsilon's node is a candidate") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 200; ++round) {
        std::uint64_t n = std::uniform_int_distribution<std::uint64_t>(2, 60)(rng);
        Items items;
        for (Key k = 0; k < n; ++k) items.push_back({k * 3, std::uniform_int_distribution<std::uint64_t>(1, 50)(rng)});
        DynTree t = DynTree::build(items);
        // some churn so the layout is not a fresh build
        for (int i = 0; i < 50; ++i) t.access(items[rng() % n].first);
        auto nodes = parse_tree_dump(t.tree_dump());
        for (const SnapshotRow& r : parse_snapshot(t.snapshot())) {
            auto c = exhaustive_epsilon_search(nodes, r);
            REQUIRE(!c.empty());
            NodeCoord chosen = coordinate_of(t, t.find_epsilon(*t.element(r.key)));
            CHECK(std::find(c.begin(), c.end(), chosen) != c.end());
        }
    }
}

TEST_CASE("depth trace audit") {
    std::vector<TraceOp> uniform;
    for (Key k = 0; k < 64; ++k) uniform.push_back({OpKind::Insert, k});
    std::mt19937_64 rng(9);
    for (int i = 0; i < 3000; ++i) uniform.push_back({OpKind::Access, rng() % 64});
    CHECK(!depth_trace_audit(uniform, 8.0, 0));
    CHECK(!depth_trace_audit(uniform, 12.0, 1));
    auto v = depth_trace_audit(uniform, 0.0, 0);
    REQUIRE(v);
    CHECK(v->excess > 0);

    std::vector<TraceOp> single{{OpKind::Insert, 4}, {OpKind::Access, 4}, {OpKind::Access, 4}};
    CHECK(!depth_trace_audit(single, 0.0, 0));
    CHECK(!depth_trace_audit(single, 0.0, 1));

    std::vector<TraceOp> broken{{OpKind::Access, 1}};
    CHECK_THROWS_AS(depth_trace_audit(broken, 8.0), Error);
}
