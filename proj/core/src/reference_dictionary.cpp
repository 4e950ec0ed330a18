#include "dyntree/reference_dictionary.hpp"

#include <algorithm>

namespace dyntree {

std::optional<std::uint64_t> ReferenceDictionary::weight(std::uint64_t key) const {
    auto it = std::lower_bound(items_.begin(), items_.end(), key,
                               [](const auto& p, std::uint64_t k) { return p.first < k; });
    if (it == items_.end() || it->first != key) return std::nullopt;
    return it->second;
}

Observation ReferenceDictionary::apply(const TraceOp& op) {
    auto it = std::lower_bound(items_.begin(), items_.end(), op.key,
                               [](const auto& p, std::uint64_t k) { return p.first < k; });
    bool here = it != items_.end() && it->first == op.key;
    std::optional<ErrorCode> error;
    switch (op.kind) {
        case OpKind::Search:
            break;
        case OpKind::Access:
            if (!here) {
                error = ErrorCode::NotFound;
            } else {
                ++it->second;
                ++total_;
            }
            break;
        case OpKind::Insert:
            if (here) {
                error = ErrorCode::DuplicateKey;
            } else {
                items_.insert(it, {op.key, 1});
                ++total_;
            }
            break;
        case OpKind::Decrement:
            if (!here) {
                error = ErrorCode::NotFound;
            } else if (it->second == 1) {
                error = ErrorCode::UseDelete;
            } else {
                --it->second;
                --total_;
            }
            break;
        case OpKind::Delete:
            if (!here) {
                error = ErrorCode::NotFound;
            } else if (it->second > 1) {
                error = ErrorCode::UseDecrement;
            } else {
                items_.erase(it);
                --total_;
            }
            break;
    }
    Observation o;
    o.error = error;
    auto w = weight(op.key);
    o.present = w.has_value();
    o.weight = w.value_or(0);
    o.n = items_.size();
    o.W = total_;
    return o;
}

std::vector<Observation> reference_apply(std::span<const TraceOp> ops) {
    ReferenceDictionary ref;
    std::vector<Observation> out;
    out.reserve(ops.size());
    for (const TraceOp& op : ops) out.push_back(ref.apply(op));
    return out;
}

}  // namespace dyntree
