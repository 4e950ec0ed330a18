#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dyntree/alphacoder.hpp"
#include "dyntree/hierarchy.hpp"
#include "dyntree/kneighbor_tree.hpp"
#include "dyntree/optimal_tree.hpp"

using namespace dyntree;

namespace {

std::vector<std::uint64_t> zipf(std::uint64_t n, std::uint64_t len, std::uint64_t seed) {
    std::vector<double> w(n);
    for (std::uint64_t i = 0; i < n; ++i) w[i] = 1.0 / double(i + 1);
    std::discrete_distribution<std::uint64_t> dist(w.begin(), w.end());
    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> out(len);
    for (auto& x : out) x = dist(rng);
    return out;
}

std::vector<std::pair<Key, std::uint64_t>> unit_items(std::uint64_t n) {
    std::vector<std::pair<Key, std::uint64_t>> items;
    for (Key k = 0; k < n; ++k) items.push_back({k, 1});
    return items;
}

// Accesses keep growing W, so the tree is rebuilt from scratch outside the
// timed region once per pass over the sequence.
template <class Make>
void access_loop(benchmark::State& state, Make make) {
    auto n = std::uint64_t(state.range(0));
    auto seq = zipf(n, 1 << 16, 1);
    auto t = make(n);
    std::size_t i = 0;
    std::uint64_t comparisons = 0, work = 0;
    for (auto _ : state) {
        if (i == seq.size()) {
            state.PauseTiming();
            t = make(n);
            i = 0;
            state.ResumeTiming();
        }
        AccessStats st = t.access(seq[i++]);
        comparisons += st.comparisons;
        work += st.structural_ops;
    }
    state.counters["comparisons"] = benchmark::Counter(double(comparisons), benchmark::Counter::kAvgIterations);
    state.counters["structural_ops"] = benchmark::Counter(double(work), benchmark::Counter::kAvgIterations);
}

void BM_FlatAccess(benchmark::State& state) {
    access_loop(state, [](std::uint64_t n) { return DynTree::build(unit_items(n)); });
}

void BM_HierAccess(benchmark::State& state) {
    access_loop(state, [](std::uint64_t n) { return HierTree::build(unit_items(n), 1); });
}

void BM_FlatSearch(benchmark::State& state) {
    auto n = std::uint64_t(state.range(0));
    DynTree t = DynTree::build(unit_items(n));
    for (auto k : zipf(n, 1 << 16, 2)) t.access(k);
    auto seq = zipf(n, 1 << 12, 3);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(t.search(seq[i]));
        i = (i + 1) % seq.size();
    }
}

void BM_KNeighborInsert(benchmark::State& state) {
    std::mt19937_64 rng(4);
    for (auto _ : state) {
        state.PauseTiming();
        std::vector<LeafInit> first{{0, KeyRange::point(0)}};
        auto t = KNeighborTree::bulk_build(first, 17, Padding::None);
        std::vector<NodeId> leaves{t.leaves().front()};
        state.ResumeTiming();
        for (std::int64_t i = 1; i <= state.range(0); ++i) {
            auto r = t.insert_leaf_after(t.handle(leaves[rng() % leaves.size()]), i, KeyRange::point(i));
            leaves.push_back(r.leaf.id);
        }
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EncodeBytes(benchmark::State& state) {
    auto ranks = zipf(256, std::uint64_t(state.range(0)), 5);
    std::vector<std::uint8_t> data(ranks.begin(), ranks.end());
    auto alphabet = byte_alphabet();
    for (auto _ : state) benchmark::DoNotOptimize(encode_bytes(alphabet, data));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}

void BM_DecodeBytes(benchmark::State& state) {
    auto ranks = zipf(256, std::uint64_t(state.range(0)), 5);
    std::vector<std::uint8_t> data(ranks.begin(), ranks.end());
    auto packed = encode_bytes(byte_alphabet(), data).bytes;
    for (auto _ : state) benchmark::DoNotOptimize(decode_bytes(packed));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_FlatAccess)->Arg(256)->Arg(4096);
BENCHMARK(BM_HierAccess)->Arg(256)->Arg(4096);
BENCHMARK(BM_FlatSearch)->Arg(256)->Arg(4096);
BENCHMARK(BM_KNeighborInsert)->Arg(1 << 14)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeBytes)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeBytes)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
