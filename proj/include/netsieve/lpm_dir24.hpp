#pragma once

// Two-level direct-indexed longest-prefix-match tables (DIR-24-8 and a
// 16-bit 8+8 variant used for port fields).
//
// The first level is indexed by the top FirstBits of the key and holds every
// prefix up to FirstBits long, expanded over all slots it covers. A slot that
// has at least one longer prefix underneath points to a second-level block of
// 2^(KeyBits - FirstBits) entries. Lookups therefore read one entry, or two
// when the first one is an extension pointer.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "netsieve/rule_model.hpp"

namespace netsieve {

class Tbl8Exhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PrefixNotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LpmResult {
    std::optional<std::uint32_t> id;
    unsigned accesses = 0;
};

/// Decoded view of a single table entry, for inspection and tests.
struct LpmEntryView {
    bool valid = false;
    bool ext = false;
    std::uint32_t payload = 0; // stored id, or block index when ext
    unsigned depth = 0;
};

template <unsigned KeyBits, unsigned FirstBits>
class TwoLevelLpm {
    static_assert(KeyBits <= 32 && FirstBits < KeyBits && FirstBits <= 24);

public:
    static constexpr unsigned kKeyBits = KeyBits;
    static constexpr unsigned kFirstBits = FirstBits;
    static constexpr unsigned kSecondBits = KeyBits - FirstBits;
    static constexpr std::size_t kFirstSize = std::size_t{1} << FirstBits;
    static constexpr std::size_t kBlockSize = std::size_t{1} << kSecondBits;
    static constexpr std::uint32_t kMaxId = 0x00ffffffu;
    static constexpr std::size_t kDefaultMaxBlocks = 256;

    explicit TwoLevelLpm(std::size_t max_blocks = kDefaultMaxBlocks)
        : first_(kFirstSize, 0), first_depth_(kFirstSize, 0), max_blocks_(max_blocks) {}

    /// Inserts or replaces the id stored for (key, length). Throws
    /// Tbl8Exhausted when a new second-level block is needed and the pool is
    /// full, std::invalid_argument for a bad length or id. Strong guarantee.
    void add(std::uint32_t key, unsigned length, std::uint32_t id);

    /// Throws PrefixNotFound if (key, length) was never added.
    void remove(std::uint32_t key, unsigned length);

    LpmResult lookup(std::uint32_t key) const noexcept {
        std::uint32_t e = first_[key >> kSecondBits];
        if ((e & kExtBit) != 0) {
            e = second_[(e & kPayloadMask) * kBlockSize + (key & (kBlockSize - 1))];
            return {(e & kValidBit) != 0 ? std::optional<std::uint32_t>(e & kPayloadMask) : std::nullopt, 2};
        }
        return {(e & kValidBit) != 0 ? std::optional<std::uint32_t>(e & kPayloadMask) : std::nullopt, 1};
    }

    /// Raw payload lookup without access accounting; returns `miss` on no match.
    std::uint32_t find(std::uint32_t key, std::uint32_t miss) const noexcept {
        std::uint32_t e = first_[key >> kSecondBits];
        if ((e & kExtBit) != 0) {
            e = second_[(e & kPayloadMask) * kBlockSize + (key & (kBlockSize - 1))];
        }
        return (e & kValidBit) != 0 ? (e & kPayloadMask) : miss;
    }

    LpmEntryView first_level(std::size_t slot) const {
        const std::uint32_t e = first_.at(slot);
        return {(e & kValidBit) != 0, (e & kExtBit) != 0, e & kPayloadMask, first_depth_[slot]};
    }
    LpmEntryView second_level(std::size_t block, std::size_t index) const {
        const std::size_t at = block * kBlockSize + index;
        const std::uint32_t e = second_.at(at);
        return {(e & kValidBit) != 0, false, e & kPayloadMask, second_depth_[at]};
    }

    std::size_t blocks_in_use() const noexcept { return blocks_in_use_; }
    std::size_t max_blocks() const noexcept { return max_blocks_; }
    /// Number of distinct prefixes currently stored.
    std::size_t size() const noexcept { return live_.size(); }
    /// Number of distinct first-level parents that have a longer prefix beneath them.
    std::size_t extended_slots() const noexcept { return long_count_.size(); }
    std::size_t memory_bytes() const noexcept {
        return first_.size() * (sizeof(std::uint32_t) + 1) + second_.size() * (sizeof(std::uint32_t) + 1);
    }

private:
    static constexpr std::uint32_t kValidBit = 0x80000000u;
    static constexpr std::uint32_t kExtBit = 0x40000000u;
    static constexpr std::uint32_t kPayloadMask = 0x00ffffffu;

    static std::uint32_t mask_of(unsigned length) noexcept {
        return length == 0 ? 0u : static_cast<std::uint32_t>((~std::uint64_t{0} << (KeyBits - length)) & ((std::uint64_t{1} << KeyBits) - 1));
    }
    static std::uint64_t live_key(std::uint32_t key, unsigned length) noexcept {
        return (std::uint64_t{key} << 6) | length;
    }
    void check(std::uint32_t key, unsigned length) const;
    /// Longest live prefix strictly shorter than `length` that covers `key`.
    std::optional<std::pair<std::uint32_t, unsigned>> covering_below(std::uint32_t key, unsigned length) const;
    std::uint32_t allocate_block();

    std::vector<std::uint32_t> first_;
    std::vector<std::uint8_t> first_depth_;
    std::vector<std::uint32_t> second_;
    std::vector<std::uint8_t> second_depth_;
    std::vector<std::uint32_t> free_blocks_;
    std::size_t blocks_in_use_ = 0;
    std::size_t max_blocks_;
    // Shadow copy of the stored prefixes, used to revert slots on delete.
    std::unordered_map<std::uint64_t, std::uint32_t> live_;
    std::unordered_map<std::uint32_t, std::uint32_t> long_count_;
};

extern template class TwoLevelLpm<32, 24>;
extern template class TwoLevelLpm<16, 8>;

/// DIR-24-8: 2^24-entry first table plus 256-entry extension blocks.
using Dir24Tables = TwoLevelLpm<32, 24>;
/// 16-bit keys split 8+8, used for port fields.
using Port88Tables = TwoLevelLpm<16, 8>;

inline void lpm_add(Dir24Tables& t, const Ipv4Prefix& p, std::uint32_t id) {
    t.add(p.address(), p.length(), id);
}
inline void lpm_delete(Dir24Tables& t, const Ipv4Prefix& p) { t.remove(p.address(), p.length()); }
inline LpmResult lpm_lookup(const Dir24Tables& t, std::uint32_t addr) noexcept { return t.lookup(addr); }

struct Route {
    Ipv4Prefix prefix;
    std::uint32_t id = 0;
};

/// Route file: "<ip>/<len> <id>" per line, '#' comments. Throws ParseError.
std::vector<Route> parse_routes(std::string_view text);
/// Lookup trace: one dotted quad per line. Throws ParseError.
std::vector<std::uint32_t> parse_addresses(std::string_view text);

/// Single-writer publisher of immutable table snapshots. Readers hold a
/// shared_ptr to a complete table and never see a partially applied update.
class RouteTableHandle {
public:
    explicit RouteTableHandle(std::size_t max_blocks = Dir24Tables::kDefaultMaxBlocks);

    std::shared_ptr<const Dir24Tables> snapshot() const;

    /// Copies the current snapshot, applies `mutate` to the copy and publishes
    /// it. If `mutate` throws, the published snapshot is unchanged.
    template <typename Fn>
    void update(Fn&& mutate) {
        std::lock_guard writer(write_mutex_);
        auto next = std::make_shared<Dir24Tables>(*snapshot());
        mutate(*next);
        std::lock_guard lock(ptr_mutex_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex ptr_mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const Dir24Tables> current_;
};

} // namespace netsieve
