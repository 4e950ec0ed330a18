#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dyntree/reference_dictionary.hpp"
#include "dyntree/trace.hpp"

namespace test_support {

inline std::vector<std::uint64_t> zipf_sequence(std::uint64_t n, std::uint64_t len, double s,
                                                std::uint64_t seed) {
    std::vector<double> w(n);
    for (std::uint64_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(double(i + 1), s);
    std::discrete_distribution<std::uint64_t> dist(w.begin(), w.end());
    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> out(len);
    for (auto& x : out) x = dist(rng);
    return out;
}

// Mixed script over keys [0, key_space). Roughly one op in twenty is aimed at
// a key that makes it fail, so error paths get compared too.
inline std::vector<dyntree::TraceOp> mixed_script(std::uint64_t len, std::uint64_t key_space,
                                                  std::uint64_t seed) {
    using dyntree::OpKind;
    std::mt19937_64 rng(seed);
    dyntree::ReferenceDictionary state;
    std::vector<dyntree::TraceOp> ops;
    ops.reserve(len);
    auto any_key = [&] { return std::uniform_int_distribution<std::uint64_t>(0, key_space - 1)(rng); };
    auto live_key = [&] {
        const auto& items = state.items();
        return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)].first;
    };
    while (ops.size() < len) {
        int roll = std::uniform_int_distribution<int>(0, 99)(rng);
        dyntree::TraceOp op{};
        if (state.size() == 0 || roll < 20) {
            op = {OpKind::Insert, any_key()};
        } else if (roll < 25) {
            static constexpr OpKind kinds[] = {OpKind::Search, OpKind::Access, OpKind::Insert,
                                               OpKind::Decrement, OpKind::Delete};
            op = {kinds[std::uniform_int_distribution<int>(0, 4)(rng)], any_key()};
        } else if (roll < 65) {
            op = {OpKind::Access, live_key()};
        } else if (roll < 80) {
            op = {OpKind::Decrement, live_key()};
        } else if (roll < 85) {
            op = {OpKind::Search, live_key()};
        } else {
            std::uint64_t k = live_key();
            // drain first so the delete usually succeeds
            while (*state.weight(k) > 1 && ops.size() + 1 < len) {
                ops.push_back({OpKind::Decrement, k});
                state.apply(ops.back());
            }
            op = {OpKind::Delete, k};
        }
        ops.push_back(op);
        state.apply(op);
    }
    return ops;
}

}  // namespace test_support
