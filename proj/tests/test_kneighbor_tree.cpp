#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "dyntree/error.hpp"
#include "dyntree/kneighbor_tree.hpp"

namespace dyntree {

struct KNeighborTreeTestAccess {
    // Removes a leaf without any rebalancing.
    static void raw_remove_leaf(KNeighborTree& t, NodeId leaf) {
        NodeId p = t.nodes_[leaf].parent;
        t.detach(p, leaf);
        t.unlink(leaf);
        t.release(leaf);
        std::vector<NodeId> seeds{p};
        std::uint64_t ops = 0;
        t.repair(seeds, ops);
    }
};

}  // namespace dyntree

using namespace dyntree;

namespace {

std::vector<LeafInit> payloads(std::size_t n, std::uint64_t first = 0) {
    std::vector<LeafInit> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back({first + i, KeyRange::point(first + i)});
    return v;
}

std::uint32_t ceil_log2(std::uint64_t n) {
    std::uint32_t h = 0;
    while ((std::uint64_t{1} << h) < n) ++h;
    return h;
}

std::map<NodeId, NodeId> parent_map(const KNeighborTree& t) {
    std::map<NodeId, NodeId> out;
    std::vector<NodeId> stack{t.root()};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        out[id] = t.node(id).parent;
        for (std::size_t i = 0; i < t.node(id).nkids; ++i) stack.push_back(t.node(id).kids[i]);
    }
    return out;
}

}  // namespace

TEST_CASE("bulk_build shapes") {
    SUBCASE("16 leaves give a perfect tree of height 4") {
        auto in = payloads(16);
        auto t = KNeighborTree::bulk_build(in, 4);
        CHECK(t.height() == 4);
        CHECK(t.leaf_count() == 16);
        CHECK_FALSE(t.check_invariants());
        for (NodeId u = t.root(); t.node(u).height > 0; u = t.node(u).first_kid())
            CHECK(t.node(u).nkids == 2);
        CHECK(t.dump_levels().substr(0, 7) == "(16,2)\n");
    }
    SUBCASE("one leaf is a single node") {
        auto in = payloads(1);
        auto t = KNeighborTree::bulk_build(in, 2);
        CHECK(t.height() == 0);
        CHECK(t.leaf_count() == 1);
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("5 leaves pad to 8 with dummies on the right") {
        auto in = payloads(5);
        auto t = KNeighborTree::bulk_build(in, 2);
        CHECK(t.height() == 3);
        auto p = t.leaf_payloads();
        REQUIRE(p.size() == 8);
        CHECK(std::count(p.begin(), p.end(), kDummyPayload) == 3);
        CHECK(p[4] == 4);
        CHECK(p[5] == kDummyPayload);
        CHECK(p[7] == kDummyPayload);
    }
    SUBCASE("unpadded odd counts keep the invariants") {
        for (std::size_t n : {2u, 3u, 5u, 7u, 11u, 100u, 333u}) {
            auto in = payloads(n);
            auto t = KNeighborTree::bulk_build(in, 3, Padding::None);
            CHECK(t.leaf_count() == n);
            CHECK(t.height() == ceil_log2(n));
            CHECK_FALSE(t.check_invariants());
        }
    }
    SUBCASE("empty input") {
        std::vector<LeafInit> none;
        CHECK_THROWS_AS(KNeighborTree::bulk_build(none, 2), Error);
    }
}

TEST_CASE("height_bound") {
    CHECK(KNeighborTree::height_bound(16, 4) == 5);
    CHECK(KNeighborTree::height_bound(1, 3) == 1);
    // Exact powers: log2(2^j)/log2(2 - 1/(k+1)) for large k stays just above j.
    CHECK(KNeighborTree::height_bound(1024, 10) >= 10);
    CHECK(KNeighborTree::height_bound(1024, 10) == static_cast<std::uint32_t>(std::floor(10.0 / std::log2(21.0 / 11.0) + 1)));
}

TEST_CASE("insert_leaf_after") {
    SUBCASE("parent with one child just gains a second") {
        auto in = payloads(3);
        auto t = KNeighborTree::bulk_build(in, 2, Padding::None);
        // Level 1 is [1-node(leaf0), 2-node(leaf1, leaf2)].
        NodeId leaf0 = t.leftmost_leaf();
        REQUIRE(t.node(t.node(leaf0).parent).nkids == 1);
        auto res = t.insert_leaf_after(t.handle(leaf0), 99, KeyRange::point(99));
        CHECK(res.report.relinks.size() == 1);
        CHECK(res.report.relinks[0].node == res.leaf.id);
        CHECK(res.report.moves == 0);
        CHECK(t.leaf_payloads() == std::vector<std::uint64_t>{0, 99, 1, 2});
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("overflow next to a 1-node shifts children instead of growing") {
        auto in = payloads(3);
        auto t = KNeighborTree::bulk_build(in, 2, Padding::None);
        auto leaves = t.leaves();
        auto res = t.insert_leaf_after(t.handle(leaves[1]), 99, KeyRange::point(99));
        CHECK(res.report.moves == 1);
        CHECK(t.height() == 2);
        CHECK(res.report.created.size() == 1);
        CHECK(t.leaf_payloads() == std::vector<std::uint64_t>{0, 1, 99, 2});
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("leftmost insertion") {
        auto in = payloads(4, 10);
        auto t = KNeighborTree::bulk_build(in, 2);
        t.insert_leaf_after(std::nullopt, 1, KeyRange::point(1));
        CHECK(t.leaf_payloads().front() == 1);
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("into a single leaf") {
        auto in = payloads(1);
        auto t = KNeighborTree::bulk_build(in, 2);
        t.insert_leaf_after(t.handle(t.root()), 5, KeyRange::point(5));
        CHECK(t.height() == 1);
        CHECK(t.leaf_payloads() == std::vector<std::uint64_t>{0, 5});
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("2^j successive inserts stay within log n + 2") {
        for (std::uint32_t j : {6u, 10u, 13u}) {
            auto in = payloads(1);
            std::uint64_t final_n = (std::uint64_t{1} << j) + 1;
            auto t = KNeighborTree::bulk_build(in, std::max(2u, ceil_log2(final_n)));
            std::mt19937_64 rng(j);
            std::vector<NodeId> live{t.root()};
            for (std::uint64_t i = 0; i + 1 < final_n; ++i) {
                NodeId a = live[rng() % live.size()];
                auto res = t.insert_leaf_after(t.handle(a), i + 1, KeyRange::point(i + 1));
                CHECK(res.report.moves <= 1);
                live.push_back(res.leaf.id);
            }
            CHECK(t.height() <= ceil_log2(final_n) + 2);
            CHECK_FALSE(t.check_invariants());
        }
    }
    SUBCASE("dead handle") {
        auto in = payloads(4);
        auto t = KNeighborTree::bulk_build(in, 2);
        NodeId l = t.leaves()[1];
        LeafHandle h = t.handle(l);
        t.delete_leaf(h);
        CHECK_THROWS_AS(t.insert_leaf_after(h, 1, KeyRange::point(1)), Error);
    }
}

TEST_CASE("delete_leaf") {
    SUBCASE("delete the leaf just inserted restores the sequence") {
        auto in = payloads(10);
        auto t = KNeighborTree::bulk_build(in, 3);
        auto before = t.leaf_payloads();
        auto res = t.insert_leaf_after(t.handle(t.leaves()[4]), 77, KeyRange::point(77));
        t.delete_leaf(res.leaf);
        CHECK(t.leaf_payloads() == before);
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("2-leaf root collapses to a single leaf") {
        auto in = payloads(2);
        auto t = KNeighborTree::bulk_build(in, 2);
        t.delete_leaf(t.handle(t.leaves()[0]));
        CHECK(t.height() == 0);
        CHECK(t.leaf_payloads() == std::vector<std::uint64_t>{1});
        CHECK_FALSE(t.check_invariants());
    }
    SUBCASE("last leaf") {
        auto in = payloads(1);
        auto t = KNeighborTree::bulk_build(in, 2);
        try {
            t.delete_leaf(t.handle(t.root()));
            FAIL("expected WouldEmpty");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::WouldEmpty);
        }
    }
    SUBCASE("dead handle") {
        auto in = payloads(4);
        auto t = KNeighborTree::bulk_build(in, 2);
        LeafHandle h = t.handle(t.leaves()[0]);
        t.delete_leaf(h);
        try {
            t.delete_leaf(h);
            FAIL("expected InvalidHandle");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidHandle);
        }
    }
}

TEST_CASE("random insert/delete interleavings keep every invariant") {
    for (std::uint32_t k : {1u, 2u, 5u}) {
        std::mt19937_64 rng(1234 + k);
        auto in = payloads(7);
        auto t = KNeighborTree::bulk_build(in, k, Padding::None);
        std::vector<std::uint64_t> ref = t.leaf_payloads();
        std::vector<NodeId> live = t.leaves();
        std::uint64_t next = 1000;
        for (int step = 0; step < 10000 / 3; ++step) {
            bool ins = live.size() < 3 || rng() % 100 < 55;
            auto before = parent_map(t);
            MovedReport rep;
            if (ins) {
                std::size_t i = rng() % (live.size() + 1);
                std::optional<LeafHandle> anchor;
                if (i > 0) anchor = t.handle(live[i - 1]);
                auto r = t.insert_leaf_after(anchor, next, KeyRange::point(next));
                ref.insert(ref.begin() + static_cast<std::ptrdiff_t>(i), next++);
                live.insert(live.begin() + static_cast<std::ptrdiff_t>(i), r.leaf.id);
                CHECK(r.report.moves <= 1);
                rep = std::move(r.report);
            } else {
                std::size_t i = rng() % live.size();
                rep = t.delete_leaf(t.handle(live[i]));
                ref.erase(ref.begin() + static_cast<std::ptrdiff_t>(i));
                live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
            }
            auto err = t.check_invariants();
            REQUIRE_MESSAGE(!err, *err);
            REQUIRE(t.leaf_payloads() == ref);

            // Replaying the report on the old parent function gives the new one.
            auto replay = before;
            for (const Relink& r : rep.relinks) replay[r.node] = r.new_parent;
            for (NodeId c : rep.created) replay.try_emplace(c, kNoNode);
            for (NodeId dead : rep.removed) replay.erase(dead);
            CHECK(replay == parent_map(t));
        }
    }
}

TEST_CASE("long random run at n ~ 1024, k = 10") {
    std::mt19937_64 rng(99);
    auto in = payloads(1024);
    auto t = KNeighborTree::bulk_build(in, 10);
    std::vector<NodeId> live;
    for (NodeId l : t.leaves())
        if (t.node(l).payload != kDummyPayload) live.push_back(l);
    for (int step = 0; step < 100000; ++step) {
        std::size_t i = rng() % live.size();
        auto r = t.insert_leaf_after(t.handle(live[i]), 5000 + step, KeyRange::point(1));
        live.push_back(r.leaf.id);
        std::size_t j = rng() % live.size();
        t.delete_leaf(t.handle(live[j]));
        live[j] = live.back();
        live.pop_back();
        if (step % 10000 == 0) REQUIRE_FALSE(t.check_invariants());
    }
    CHECK_FALSE(t.check_invariants());
    CHECK(t.height() <= 12);
    CHECK(t.height() <= KNeighborTree::height_bound(t.leaf_count(), 10));
}

TEST_CASE("ancestor_at_height") {
    auto in = payloads(16);
    auto t = KNeighborTree::bulk_build(in, 4);
    NodeId leaf = t.leftmost_leaf();
    CHECK(t.ancestor_at_height(t.handle(leaf), 0) == leaf);
    CHECK(t.ancestor_at_height(t.handle(leaf), t.height()) == t.root());
    NodeId a = t.ancestor_at_height(t.handle(leaf), 2);
    CHECK(t.node(a).leaf_count == 4);
    CHECK(t.first_leaf(a) == leaf);
    CHECK(t.node(t.last_leaf(a)).payload == 3);
    CHECK_THROWS_AS(t.ancestor_at_height(t.handle(leaf), 5), Error);
}

TEST_CASE("check_invariants reports adjacent 1-nodes") {
    auto in = payloads(8);
    auto t = KNeighborTree::bulk_build(in, 4);
    auto leaves = t.leaves();
    KNeighborTreeTestAccess::raw_remove_leaf(t, leaves[1]);
    KNeighborTreeTestAccess::raw_remove_leaf(t, leaves[3]);
    auto err = t.check_invariants();
    REQUIRE(err);
    CHECK(err->find("condition (3)") != std::string::npos);
}
