#include "dyntree/quantizer.hpp"

#include <cmath>
#include <unordered_map>
#include <vector>

#include "dyntree/error.hpp"

namespace dyntree {

namespace {

std::uint64_t ceil_div(unsigned __int128 num, unsigned __int128 den) {
    return static_cast<std::uint64_t>((num + den - 1) / den);
}

}  // namespace

std::uint64_t quantize(std::uint64_t w, const PhaseState& phase) {
    return ceil_div(static_cast<unsigned __int128>(w) * phase.n0, phase.W0);
}

bool phase_should_end(const PhaseState& phase) {
    return phase.W >= 2 * phase.W0 || phase.n >= 2 * phase.n0;
}

bool phase_underflow(const PhaseState& phase) {
    return 2 * phase.W <= phase.W0 || 2 * phase.n <= phase.n0;
}

QuantizedTotal quantized_total_bound_check(std::span<const std::uint64_t> weights) {
    std::uint64_t total = 0;
    for (std::uint64_t w : weights) total += w;
    const std::uint64_t n = weights.size();
    PhaseState phase = PhaseState::start(total, n);
    std::uint64_t quantized = 0;
    for (std::uint64_t w : weights) quantized += quantize(w, phase);
    return {quantized <= 2 * n, quantized, 2 * n};
}

double entropy(std::span<const std::uint64_t> counts) {
    long double total = 0;
    for (std::uint64_t c : counts) total += static_cast<long double>(c);
    if (total == 0) throw Error(ErrorCode::EmptyDistribution, "all counts are zero");
    long double h = 0;
    for (std::uint64_t c : counts) {
        if (c == 0) continue;
        long double p = static_cast<long double>(c) / total;
        h -= p * std::log2l(p);
    }
    return static_cast<double>(h);
}

double dynamic_entropy_lhs(std::span<const std::uint64_t> sequence) {
    std::unordered_map<std::uint64_t, std::uint64_t> seen;
    long double sum = 0;
    std::uint64_t t = 0;
    for (std::uint64_t a : sequence) {
        ++t;
        std::uint64_t& w = seen[a];
        sum += std::log2l(static_cast<long double>(t)) -
               std::log2l(static_cast<long double>(w == 0 ? 1 : w));
        ++w;
    }
    return static_cast<double>(sum);
}

DynamicEntropyCheck verify_dynamic_entropy_bound(std::span<const std::uint64_t> sequence) {
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    for (std::uint64_t a : sequence) ++counts[a];
    std::vector<std::uint64_t> c;
    c.reserve(counts.size());
    for (const auto& [key, v] : counts) c.push_back(v);
    const double W = static_cast<double>(sequence.size());
    const double lhs = dynamic_entropy_lhs(sequence);
    const double rhs = W * entropy(c) + 2 * W;
    return {lhs <= rhs + 1e-6 * W, lhs, rhs};
}

}  // namespace dyntree
