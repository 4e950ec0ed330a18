#include "dyntree/trace.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "dyntree/error.hpp"

namespace dyntree {

std::vector<TraceOp> parse_trace(std::istream& in) {
    std::vector<TraceOp> ops;
    std::string line;
    for (std::uint64_t no = 1; std::getline(in, line); ++no) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto bad = [&](const char* why) {
            return Error(ErrorCode::ParseError, "line " + std::to_string(no) + ": " + why);
        };
        if (line.size() < 3 || line[1] != ' ') throw bad("expected '<op> <key>'");
        OpKind kind;
        switch (line[0]) {
            case 'A': kind = OpKind::Access; break;
            case 'I': kind = OpKind::Insert; break;
            case 'D': kind = OpKind::Decrement; break;
            case 'X': kind = OpKind::Delete; break;
            default: throw bad("unknown operation");
        }
        std::uint64_t key = 0;
        const char* first = line.data() + 2;
        const char* last = line.data() + line.size();
        auto [end, ec] = std::from_chars(first, last, key);
        if (ec == std::errc::result_out_of_range) throw bad("key out of range");
        if (ec != std::errc() || end != last) throw bad("key is not a decimal integer");
        ops.push_back({kind, key});
    }
    return ops;
}

std::vector<TraceOp> parse_trace(const std::string& text) {
    std::istringstream in(text);
    return parse_trace(in);
}

void write_trace(std::ostream& out, std::span<const TraceOp> ops) {
    for (const TraceOp& op : ops) {
        if (op.kind == OpKind::Search) throw Error(ErrorCode::UsageError, "searches have no text form");
        out << static_cast<char>(op.kind) << ' ' << op.key << '\n';
    }
}

std::string format_trace(std::span<const TraceOp> ops) {
    std::ostringstream out;
    write_trace(out, ops);
    return out.str();
}

}  // namespace dyntree
