#pragma once

// Recursive flow classification. The 104-bit key is cut into seven 16-bit
// chunks; each phase-0 table maps a chunk value to the equivalence class of
// rules matching it, and each later table maps a tuple of upstream class ids
// to the class of their intersection. The last table's class resolves to the
// first matching rule. Every lookup reads exactly one entry from every table.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "netsieve/rule_model.hpp"

namespace netsieve {

class RfcCapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RfcChunk : std::uint8_t { SrcHi, SrcLo, DstHi, DstLo, Sport, Dport, Proto };
inline constexpr std::size_t kRfcChunkCount = 7;

std::string_view to_string(RfcChunk c) noexcept;

/// Extracts the 16-bit value of one chunk from a key. Proto is zero-extended.
constexpr std::uint16_t chunk_value(const FiveTupleKey& k, RfcChunk c) noexcept {
    switch (c) {
    case RfcChunk::SrcHi: return static_cast<std::uint16_t>(k.src >> 16);
    case RfcChunk::SrcLo: return static_cast<std::uint16_t>(k.src);
    case RfcChunk::DstHi: return static_cast<std::uint16_t>(k.dst >> 16);
    case RfcChunk::DstLo: return static_cast<std::uint16_t>(k.dst);
    case RfcChunk::Sport: return k.sport;
    case RfcChunk::Dport: return k.dport;
    case RfcChunk::Proto: return k.proto;
    }
    return 0;
}

/// Which upstream outputs each table of phases 1.. combines. Phase 0 always
/// has one table per chunk, in RfcChunk order.
struct RfcTree {
    std::vector<std::vector<std::vector<std::size_t>>> phases;

    /// (src-hi, src-lo), (dst-hi, dst-lo), (sport, dport, proto), then one 3-way combine.
    static RfcTree standard();
    /// Validates shape: every node has 2 or 3 inputs, every upstream output is
    /// consumed exactly once, the last phase has a single node.
    void validate() const;
};

struct RfcOptions {
    RfcTree tree = RfcTree::standard();
    std::size_t max_classes = std::size_t{1} << 22;     // per table
    std::size_t max_table_entries = std::size_t{1} << 26; // per table
};

struct RfcChunkTable {
    std::size_t phase = 0;
    std::vector<std::size_t> inputs; // phase 0: the chunk; later: upstream table indices
    std::vector<std::size_t> strides; // per-input multiplier forming the entry index
    std::vector<std::uint32_t> entries;
    std::uint32_t classes = 0;
};

struct RfcResult {
    std::optional<RuleId> id;
    unsigned accesses = 0;
};

class RfcTables {
public:
    const std::vector<std::vector<RfcChunkTable>>& phases() const noexcept { return phases_; }
    const std::vector<std::optional<RuleId>>& final_table() const noexcept { return final_; }
    std::size_t rule_count() const noexcept { return rule_count_; }
    /// Tables read per lookup, including the class-to-rule table.
    unsigned accesses_per_lookup() const noexcept { return accesses_; }
    std::size_t memory_bytes() const noexcept;

    /// Class id produced by the last combine table, before rule resolution.
    std::uint32_t final_class(const FiveTupleKey& key) const noexcept;

    RfcResult classify(const FiveTupleKey& key) const noexcept {
        const std::uint32_t cls = final_class(key);
        return {final_[cls], accesses_};
    }

    /// CSV: per-table class counts and sizes followed by totals.
    std::string report_csv() const;

private:
    friend RfcTables rfc_build(const RuleSet&, const RfcOptions&);

    std::vector<std::vector<RfcChunkTable>> phases_;
    std::vector<std::optional<RuleId>> final_;
    std::size_t rule_count_ = 0;
    unsigned accesses_ = 0;
};

/// Throws RfcCapacityError when a table would exceed the configured ceilings.
RfcTables rfc_build(const RuleSet& rules, const RfcOptions& options = {});

inline RfcResult rfc_classify(const RfcTables& tables, const FiveTupleKey& key) noexcept {
    return tables.classify(key);
}

} // namespace netsieve
