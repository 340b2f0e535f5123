#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace netsieve {

/// Opaque rule identifier. Rules read from a file get their 0-based position
/// among the file's rule lines.
using RuleId = std::uint32_t;

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ExpansionOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Canonical IPv4 prefix: host bits below the prefix length are always zero.
class Ipv4Prefix {
public:
    constexpr Ipv4Prefix() = default;
    /// Throws std::invalid_argument for length > 32. Host bits are cleared.
    Ipv4Prefix(std::uint32_t address, unsigned length);

    constexpr std::uint32_t address() const noexcept { return address_; }
    constexpr unsigned length() const noexcept { return length_; }
    constexpr std::uint32_t netmask() const noexcept {
        return length_ == 0 ? 0u : ~std::uint32_t{0} << (32 - length_);
    }
    constexpr bool contains(std::uint32_t addr) const noexcept {
        return (addr & netmask()) == address_;
    }
    constexpr bool contains(const Ipv4Prefix& other) const noexcept {
        return other.length_ >= length_ && contains(other.address_);
    }
    constexpr std::uint32_t first() const noexcept { return address_; }
    constexpr std::uint32_t last() const noexcept { return address_ | ~netmask(); }

    friend constexpr bool operator==(const Ipv4Prefix&, const Ipv4Prefix&) = default;
    friend constexpr auto operator<=>(const Ipv4Prefix&, const Ipv4Prefix&) = default;

private:
    std::uint32_t address_ = 0;
    std::uint8_t length_ = 0;
};

/// Address match with an inverted (wildcard) mask: set bits of `wildcard` are
/// free to vary. A contiguous low-bit wildcard is an ordinary prefix.
struct AddressMatch {
    std::uint32_t address = 0; // canonical: address & wildcard == 0
    std::uint32_t wildcard = ~std::uint32_t{0};

    static AddressMatch from_prefix(const Ipv4Prefix& p) {
        return {p.address(), ~p.netmask()};
    }
    static AddressMatch from_wildcard(std::uint32_t address, std::uint32_t wildcard) {
        return {address & ~wildcard, wildcard};
    }
    static AddressMatch any() { return {0, ~std::uint32_t{0}}; }

    constexpr bool matches(std::uint32_t addr) const noexcept {
        return (addr & ~wildcard) == address;
    }
    /// Set when the wildcard covers a contiguous run of low bits.
    std::optional<Ipv4Prefix> as_prefix() const;

    friend constexpr bool operator==(const AddressMatch&, const AddressMatch&) = default;
};

struct PortRange {
    std::uint16_t lo = 0;
    std::uint16_t hi = 0xffff;

    constexpr bool contains(std::uint16_t port) const noexcept { return lo <= port && port <= hi; }
    constexpr bool is_any() const noexcept { return lo == 0 && hi == 0xffff; }

    friend constexpr bool operator==(const PortRange&, const PortRange&) = default;
};

struct ProtoMatch {
    std::optional<std::uint8_t> value; // nullopt = wildcard

    constexpr bool matches(std::uint8_t proto) const noexcept { return !value || *value == proto; }

    friend constexpr bool operator==(const ProtoMatch&, const ProtoMatch&) = default;
};

enum class Action : std::uint8_t { Permit, Deny, Mirror };

std::string_view to_string(Action a) noexcept;

struct FiveTupleKey {
    std::uint8_t proto = 0;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint16_t sport = 0;
    std::uint16_t dport = 0;

    friend constexpr bool operator==(const FiveTupleKey&, const FiveTupleKey&) = default;
};

struct AclRule {
    std::int64_t priority = 0; // lower is matched first
    ProtoMatch proto;
    AddressMatch src;
    AddressMatch dst;
    PortRange sport;
    PortRange dport;
    Action action = Action::Permit;
    RuleId id = 0;

    constexpr bool matches(const FiveTupleKey& k) const noexcept {
        return proto.matches(k.proto) && src.matches(k.src) && dst.matches(k.dst) &&
               sport.contains(k.sport) && dport.contains(k.dport);
    }

    friend constexpr bool operator==(const AclRule&, const AclRule&) = default;
};

/// Rules ordered by ascending priority. Priorities and ids are unique.
class RuleSet {
public:
    RuleSet() = default;
    /// Sorts by priority; throws std::invalid_argument on duplicate priority or id.
    explicit RuleSet(std::vector<AclRule> rules);

    std::span<const AclRule> rules() const noexcept { return rules_; }
    std::size_t size() const noexcept { return rules_.size(); }
    bool empty() const noexcept { return rules_.empty(); }
    const AclRule& operator[](std::size_t i) const { return rules_[i]; }
    auto begin() const noexcept { return rules_.begin(); }
    auto end() const noexcept { return rules_.end(); }

    friend bool operator==(const RuleSet&, const RuleSet&) = default;

private:
    std::vector<AclRule> rules_;
};

// Text helpers shared by the file readers.
std::optional<std::uint32_t> parse_ipv4(std::string_view text);
std::string format_ipv4(std::uint32_t addr);
/// "a.b.c.d/len"; throws std::invalid_argument.
Ipv4Prefix parse_prefix(std::string_view text);
std::string format_prefix(const Ipv4Prefix& p);

/// Parses a rule file. Throws ParseError carrying the 1-based line number.
RuleSet parse_rules(std::string_view text);
/// Writes one line per rule with explicit priorities; parse_rules reads it back unchanged.
std::string serialize_rules(const RuleSet& rules);

/// Key file: "<proto> <src> <dst> <sport> <dport>" per line, '#' comments.
std::vector<FiveTupleKey> parse_keys(std::string_view text);
std::string format_key(const FiveTupleKey& k);

inline constexpr std::size_t kDefaultExpansionLimit = 256;

/// Disjoint prefixes whose union is exactly the set of addresses matching
/// (address, wildcard). Throws ExpansionOverflow when more than `limit` would be produced.
std::vector<Ipv4Prefix> wildcard_to_prefixes(std::uint32_t address, std::uint32_t wildcard,
                                             std::size_t limit = kDefaultExpansionLimit);

/// Reference first-match semantics: id of the first rule (by priority) matching the key.
std::optional<RuleId> classify_linear(const RuleSet& rules, const FiveTupleKey& key) noexcept;

/// Index into rules() of the first match; used where the caller needs the position.
std::optional<std::size_t> first_match_index(const RuleSet& rules, const FiveTupleKey& key) noexcept;

} // namespace netsieve
