#pragma once

// Throughput and scaling measurements for the classifiers. Lookups are timed
// in batches of 64; every run first cross-checks a sample of results against
// the linear reference and refuses to report numbers if any disagree.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "netsieve/workload.hpp"

namespace netsieve {

enum class ClassifierKind : std::uint8_t { Linear, Rfc, LpmAcl, LpmRoute };

std::string_view to_string(ClassifierKind k) noexcept;
/// Accepts linear, rfc, lpm-acl, lpm-route.
std::optional<ClassifierKind> parse_classifier_kind(std::string_view s) noexcept;

class OracleMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BenchConfig {
    std::vector<ClassifierKind> kinds{ClassifierKind::Linear, ClassifierKind::LpmAcl};
    std::vector<std::size_t> rule_counts{100, 1000, 10000};
    std::size_t keys = 65536;
    unsigned threads = 1;
    double warmup_seconds = 0.1;
    double measure_seconds = 0.5;
    /// Measurement continues until both this many lookups and the measure
    /// duration have elapsed.
    std::size_t min_lookups = 1'000'000;
    std::uint64_t seed = 1;
    WorkloadShape shape;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct BenchRow {
    ClassifierKind kind = ClassifierKind::Linear;
    std::size_t rules = 0;
    unsigned threads = 1;
    std::size_t lookups = 0;       // over all threads
    double seconds = 0.0;          // wall time of the measured phase
    double lookups_per_second = 0.0;
    double per_thread_lookups_per_second = 0.0;
    double mean_ns = 0.0;          // per lookup, per thread
    double p50_ns = 0.0;           // per lookup, from 64-lookup batches
    double p99_ns = 0.0;
    /// Table reads per lookup where the structure counts them; negative if not.
    double accesses_per_lookup = -1.0;
    std::size_t memory_bytes = 0;
    std::size_t oracle_checked = 0; // sampled lookups compared with the reference
    std::uint64_t checksum = 0;     // of classification results, thread 0's stream
};

struct BenchResult {
    BenchConfig config;
    std::vector<BenchRow> rows;
};

/// One row per (kind, rule count). Throws OracleMismatch on any disagreement
/// with the reference classifier.
BenchResult bench_throughput(const BenchConfig& config);

/// Rule counts must span at least two decades.
BenchResult scaling_curve(const BenchConfig& config);

/// Leading '#' lines carry the seed and configuration. With mask_timing set,
/// every measured column is written as '-' so reruns can be compared.
std::string bench_csv(const BenchResult& result, bool mask_timing = false);
std::string scaling_csv(const BenchResult& result, bool mask_timing = false);

} // namespace netsieve
