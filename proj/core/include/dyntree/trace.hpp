#pragma once

// Operation scripts. The text form has one record per line:
//   A <key>   access      I <key>   insert
//   D <key>   decrement   X <key>   delete
// Searches exist only in memory (they never change the structure).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dyntree {

enum class OpKind : char {
    Search = 'S',
    Access = 'A',
    Insert = 'I',
    Decrement = 'D',
    Delete = 'X',
};

struct TraceOp {
    OpKind kind;
    std::uint64_t key;
    friend bool operator==(const TraceOp&, const TraceOp&) = default;
};

/// Throws ParseError naming the 1-based line of the first bad record.
std::vector<TraceOp> parse_trace(std::istream& in);
std::vector<TraceOp> parse_trace(const std::string& text);
void write_trace(std::ostream& out, std::span<const TraceOp> ops);
std::string format_trace(std::span<const TraceOp> ops);

}  // namespace dyntree
