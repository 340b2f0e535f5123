#pragma once

// ACL classification composed from per-field longest-prefix-match tables.
//
// Each field table stores, for every distinct prefix appearing in the rules,
// the bitset of rules whose field matches that prefix or any of its
// ancestors. One lookup per field plus an AND of the five bitsets yields the
// set of matching rules; the lowest set bit is the first match. Bitsets carry
// a one-bit-per-word summary so the AND only visits words that can be nonzero.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "netsieve/lpm_dir24.hpp"
#include "netsieve/rule_model.hpp"

namespace netsieve {

class AclCapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class AclField : std::uint8_t { Src, Dst, Sport, Dport, Proto };

struct LpmAclOptions {
    std::size_t capacity = 32768; // maximum rule count
    std::size_t expansion_limit = kDefaultExpansionLimit;
    std::size_t max_tbl8_blocks = std::size_t{1} << 16;
};

struct PortPrefix {
    std::uint16_t value = 0;
    unsigned length = 16;

    friend constexpr bool operator==(const PortPrefix&, const PortPrefix&) = default;
};

/// Minimal set of 16-bit prefixes whose union is exactly [r.lo, r.hi]; at most 30.
std::vector<PortPrefix> port_range_to_prefixes(const PortRange& r);

/// Fixed-width rule bitsets stored back to back, with a summary word per 64 words.
class BitsetTable {
public:
    BitsetTable() = default;
    explicit BitsetTable(std::size_t rules);

    /// Appends a bitset (given as `words()` words) and returns its index.
    std::uint32_t append(const std::uint64_t* bits);

    std::size_t words() const noexcept { return words_; }
    std::size_t summary_words() const noexcept { return summary_words_; }
    std::size_t size() const noexcept { return count_; }
    const std::uint64_t* bits(std::uint32_t index) const noexcept { return bits_.data() + index * words_; }
    const std::uint64_t* summary(std::uint32_t index) const noexcept {
        return summary_.data() + index * summary_words_;
    }
    std::size_t memory_bytes() const noexcept {
        return (bits_.size() + summary_.size()) * sizeof(std::uint64_t);
    }

private:
    std::size_t words_ = 0;
    std::size_t summary_words_ = 0;
    std::size_t count_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint64_t> summary_;
};

class LpmAclTables {
public:
    std::optional<RuleId> classify(const FiveTupleKey& key) const noexcept {
        if (auto i = first_match(key)) {
            return ids_[*i];
        }
        return std::nullopt;
    }

    /// Priority position of the first matching rule.
    std::optional<std::size_t> first_match(const FiveTupleKey& key) const noexcept;

    /// Priority positions of every rule whose `field` accepts `value`, as
    /// answered by that field's table.
    std::vector<std::size_t> field_matches(AclField field, std::uint32_t value) const;

    std::size_t rule_count() const noexcept { return ids_.size(); }
    std::size_t bitset_words() const noexcept { return pools_[0].words(); }
    std::size_t memory_bytes() const noexcept;
    const Dir24Tables& src_table() const noexcept { return src_; }
    const Port88Tables& sport_table() const noexcept { return sport_; }

    /// Field lookups performed per classification.
    static constexpr unsigned kFieldLookups = 5;

private:
    friend LpmAclTables acl_build(const RuleSet&, const LpmAclOptions&);

    LpmAclTables(std::size_t max_blocks) : src_(max_blocks), dst_(max_blocks) {}

    std::uint32_t bitset_index(AclField field, std::uint32_t value) const noexcept;

    Dir24Tables src_;
    Dir24Tables dst_;
    Port88Tables sport_;
    Port88Tables dport_;
    std::array<std::uint32_t, 256> proto_{};
    std::array<BitsetTable, 5> pools_; // index 0 of every pool is the empty set
    std::vector<RuleId> ids_;          // rule id by priority position
};

/// Throws AclCapacityError when the rule count, a wildcard expansion or the
/// second-level pool exceeds the configured limits.
LpmAclTables acl_build(const RuleSet& rules, const LpmAclOptions& options = {});

inline std::optional<RuleId> acl_classify(const LpmAclTables& tables, const FiveTupleKey& key) noexcept {
    return tables.classify(key);
}

} // namespace netsieve
