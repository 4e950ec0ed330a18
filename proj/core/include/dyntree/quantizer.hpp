#pragma once

// Weight quantization, phase thresholds and entropy accounting.

#include <cstdint>
#include <span>

namespace dyntree {

/// Parameters frozen when a phase starts (W0, n0) plus the live totals.
/// The quantization step is W0/n0, kept as the exact integer pair.
struct PhaseState {
    std::uint64_t W0 = 1;
    std::uint64_t n0 = 1;
    std::uint64_t W = 1;
    std::uint64_t n = 1;

    static PhaseState start(std::uint64_t total_weight, std::uint64_t count) {
        return {total_weight, count, total_weight, count};
    }
};

struct WeightPair {
    std::uint64_t w = 1;
    std::uint64_t w_quant = 1;
};

/// ceil(w * n0 / W0), exact.
std::uint64_t quantize(std::uint64_t w, const PhaseState& phase);

/// True once W or n has doubled relative to the phase start.
bool phase_should_end(const PhaseState& phase);

/// True once W or n has halved relative to the phase start (deletion side).
bool phase_underflow(const PhaseState& phase);

struct QuantizedTotal {
    bool ok;
    std::uint64_t quantized_total;  // W' = sum of ceil(w_i / tau), tau = W/n
    std::uint64_t bound;            // 2n
};

/// Quantizes with tau = W/n of the given weights and checks W' <= 2n.
QuantizedTotal quantized_total_bound_check(std::span<const std::uint64_t> weights);

/// Shannon entropy in bits of the empirical distribution. Zero counts are
/// skipped; an all-zero input throws EmptyDistribution.
double entropy(std::span<const std::uint64_t> counts);

/// Sum over t of log2(t / max(w_{a_t}^{(t-1)}, 1)) for an access sequence.
double dynamic_entropy_lhs(std::span<const std::uint64_t> sequence);

struct DynamicEntropyCheck {
    bool ok;
    double lhs;
    double rhs;  // W*H + 2W
};

/// Checks lhs <= W*H + 2W + 1e-6*W.
DynamicEntropyCheck verify_dynamic_entropy_bound(std::span<const std::uint64_t> sequence);

}  // namespace dyntree
