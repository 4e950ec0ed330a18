#pragma once

// Workload generation, trace replay with statistics, and file coding used by
// the dyntree command-line tool.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dyntree/trace.hpp"

namespace dyntree::bench {

enum class Dist { Zipf, Uniform, Adversarial };

Dist parse_dist(const std::string& name);  // UsageError on unknown names

struct GenOptions {
    Dist dist = Dist::Uniform;
    double s = 1.0;  // zipf exponent
    std::uint64_t n = 1;
    std::uint64_t len = 1;
    std::uint64_t seed = 0;
};

/// First sighting of a key is an insert, later ones accesses. The adversarial
/// workload inserts every key, then lifts one hot key by about one quantum of
/// W/n, lets half of that drain again and moves on to another key.
std::vector<TraceOp> generate(const GenOptions& opt);

enum class AuditMode { Off, Final, EveryOp };
AuditMode parse_audit(const std::string& name);

struct RunOptions {
    bool hier = false;
    std::uint32_t f = 1;           // levels for hier
    AuditMode audit = AuditMode::Off;
    std::optional<double> c;       // total allowed excess; default 8 + 4f
};

struct StatsReport {
    std::string structure;
    std::uint32_t f = 0;
    std::uint64_t ops = 0;
    std::uint64_t n = 0;
    std::uint64_t W = 0;
    double H = 0;
    std::uint64_t comparisons = 0;
    double comparisons_per_W = 0;
    double WH_per_W = 0;
    std::uint64_t accesses = 0;
    double excess_max = 0;
    double excess_mean = 0;
    std::uint64_t structural_ops = 0;
    double structural_ops_per_W = 0;
    std::uint64_t rebuilds = 0;
    std::vector<std::uint32_t> depth_deciles;  // access depth at 0%, 10%, ..., 100%
    double smallest_passing_c = 0;  // max depth excess seen by the audits run
    std::string audit;
    double c = 0;
    bool ok = true;
    std::optional<std::uint64_t> violation_step;
    std::string violation;
};

nlohmann::json to_json(const StatsReport& r);

/// Domain errors in the trace throw; audit failures end the replay and are
/// reported with ok = false.
StatsReport run(std::span<const TraceOp> trace, const RunOptions& opt);

/// `bytes` is all 256 byte values; `used` is the distinct bytes of the input.
std::vector<std::uint8_t> encode_file(std::span<const std::uint8_t> data, const std::string& alphabet);
std::vector<std::uint8_t> decode_file(std::span<const std::uint8_t> container);

/// Whole CLI: returns the process exit code (0 ok, 1 violation, 2 usage or
/// parse error).
int main_cli(int argc, char** argv);

}  // namespace dyntree::bench
