#pragma once

// Plain sorted-vector dictionary with the same operations and error rules as
// the trees. It depends on nothing but the error and trace types, so a bug
// in the trees cannot leak into it.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dyntree/error.hpp"
#include "dyntree/trace.hpp"

namespace dyntree {

/// Everything a caller can see after one operation.
struct Observation {
    std::optional<ErrorCode> error;
    bool present = false;       // key in the dictionary afterwards
    std::uint64_t weight = 0;   // its weight afterwards, 0 when absent
    std::uint64_t n = 0;
    std::uint64_t W = 0;
    friend bool operator==(const Observation&, const Observation&) = default;
};

class ReferenceDictionary {
public:
    Observation apply(const TraceOp& op);
    std::uint64_t size() const { return items_.size(); }
    std::uint64_t total_weight() const { return total_; }
    std::optional<std::uint64_t> weight(std::uint64_t key) const;
    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& items() const { return items_; }

private:
    std::vector<std::pair<std::uint64_t, std::uint64_t>> items_;
    std::uint64_t total_ = 0;
};

std::vector<Observation> reference_apply(std::span<const TraceOp> ops);

}  // namespace dyntree
