#include "netsieve/rule_model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <climits>
#include <set>
#include <sstream>

namespace netsieve {

Ipv4Prefix::Ipv4Prefix(std::uint32_t address, unsigned length) {
    if (length > 32) {
        throw std::invalid_argument("prefix length " + std::to_string(length) + " exceeds 32");
    }
    length_ = static_cast<std::uint8_t>(length);
    address_ = address & netmask();
}

std::optional<Ipv4Prefix> AddressMatch::as_prefix() const {
    // wildcard + 1 is a power of two (or wraps to 0) iff the set bits are a low run.
    const std::uint32_t next = wildcard + 1;
    if ((next & wildcard) != 0) {
        return std::nullopt;
    }
    const unsigned host_bits = static_cast<unsigned>(std::popcount(wildcard));
    return Ipv4Prefix(address, 32 - host_bits);
}

std::string_view to_string(Action a) noexcept {
    switch (a) {
    case Action::Permit: return "permit";
    case Action::Deny: return "deny";
    case Action::Mirror: return "mirror";
    }
    return "?";
}

RuleSet::RuleSet(std::vector<AclRule> rules) : rules_(std::move(rules)) {
    std::stable_sort(rules_.begin(), rules_.end(),
                     [](const AclRule& a, const AclRule& b) { return a.priority < b.priority; });
    std::set<RuleId> ids;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (i > 0 && rules_[i].priority == rules_[i - 1].priority) {
            throw std::invalid_argument("duplicate priority " + std::to_string(rules_[i].priority));
        }
        if (!ids.insert(rules_[i].id).second) {
            throw std::invalid_argument("duplicate rule id " + std::to_string(rules_[i].id));
        }
    }
}

namespace {

bool parse_uint(std::string_view s, std::uint64_t max, std::uint64_t& out) {
    if (s.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && out <= max;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string r(s);
    std::transform(r.begin(), r.end(), r.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return r;
}

PortRange parse_port(std::string_view tok, std::size_t line) {
    if (tok == "*") {
        return {};
    }
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    const auto dash = tok.find('-');
    if (dash == std::string_view::npos) {
        if (!parse_uint(tok, 0xffff, lo)) {
            throw ParseError(line, "bad port '" + std::string(tok) + "'");
        }
        hi = lo;
    } else if (!parse_uint(tok.substr(0, dash), 0xffff, lo) ||
               !parse_uint(tok.substr(dash + 1), 0xffff, hi)) {
        throw ParseError(line, "bad port range '" + std::string(tok) + "'");
    }
    if (lo > hi) {
        throw ParseError(line, "port range " + std::string(tok) + " has lo > hi");
    }
    return {static_cast<std::uint16_t>(lo), static_cast<std::uint16_t>(hi)};
}

// Consumes one address field (one or three tokens) starting at toks[pos].
AddressMatch parse_address(const std::vector<std::string_view>& toks, std::size_t& pos,
                           std::size_t line) {
    if (pos >= toks.size()) {
        throw ParseError(line, "missing address field");
    }
    const std::string_view tok = toks[pos];
    if (pos + 2 < toks.size() && lower(toks[pos + 1]) == "wildcard") {
        const auto addr = parse_ipv4(tok);
        const auto mask = parse_ipv4(toks[pos + 2]);
        if (!addr || !mask) {
            throw ParseError(line, "bad wildcard address '" + std::string(tok) + " wildcard " +
                                       std::string(toks[pos + 2]) + "'");
        }
        pos += 3;
        return AddressMatch::from_wildcard(*addr, *mask);
    }
    const auto slash = tok.find('/');
    if (slash == std::string_view::npos) {
        throw ParseError(line, "expected ip/len or 'ip wildcard mask', got '" + std::string(tok) + "'");
    }
    const auto addr = parse_ipv4(tok.substr(0, slash));
    std::uint64_t len = 0;
    if (!addr || !parse_uint(tok.substr(slash + 1), 255, len)) {
        throw ParseError(line, "bad prefix '" + std::string(tok) + "'");
    }
    if (len > 32) {
        throw ParseError(line, "prefix length " + std::to_string(len) + " exceeds 32");
    }
    ++pos;
    return AddressMatch::from_prefix(Ipv4Prefix(*addr, static_cast<unsigned>(len)));
}

std::string format_address(const AddressMatch& m) {
    if (auto p = m.as_prefix()) {
        return format_prefix(*p);
    }
    return format_ipv4(m.address) + " wildcard " + format_ipv4(m.wildcard);
}

std::string format_port(const PortRange& r) {
    if (r.is_any()) {
        return "*";
    }
    if (r.lo == r.hi) {
        return std::to_string(r.lo);
    }
    return std::to_string(r.lo) + "-" + std::to_string(r.hi);
}

} // namespace

std::optional<std::uint32_t> parse_ipv4(std::string_view text) {
    std::uint32_t addr = 0;
    std::size_t start = 0;
    for (int octet = 0; octet < 4; ++octet) {
        const std::size_t end = octet < 3 ? text.find('.', start) : text.size();
        if (end == std::string_view::npos) {
            return std::nullopt;
        }
        std::uint64_t v = 0;
        if (end - start > 3 || !parse_uint(text.substr(start, end - start), 255, v)) {
            return std::nullopt;
        }
        addr = (addr << 8) | static_cast<std::uint32_t>(v);
        start = end + 1;
    }
    return addr;
}

std::string format_ipv4(std::uint32_t a) {
    return std::to_string(a >> 24) + "." + std::to_string((a >> 16) & 0xff) + "." +
           std::to_string((a >> 8) & 0xff) + "." + std::to_string(a & 0xff);
}

Ipv4Prefix parse_prefix(std::string_view text) {
    const auto slash = text.find('/');
    std::uint64_t len = 0;
    if (slash == std::string_view::npos) {
        throw std::invalid_argument("expected ip/len, got '" + std::string(text) + "'");
    }
    const auto addr = parse_ipv4(text.substr(0, slash));
    if (!addr || !parse_uint(text.substr(slash + 1), 255, len)) {
        throw std::invalid_argument("bad prefix '" + std::string(text) + "'");
    }
    return Ipv4Prefix(*addr, static_cast<unsigned>(len));
}

std::string format_prefix(const Ipv4Prefix& p) {
    return format_ipv4(p.address()) + "/" + std::to_string(p.length());
}

RuleSet parse_rules(std::string_view text) {
    std::vector<AclRule> rules;
    std::set<std::int64_t> priorities;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        const auto toks = split_ws(line);
        if (toks.empty()) {
            if (end == text.size()) {
                break;
            }
            continue;
        }

        AclRule rule;
        rule.id = static_cast<RuleId>(rules.size());
        std::size_t pos = 0;
        std::int64_t priority = static_cast<std::int64_t>(rules.size()) * 10;
        if (!toks[0].empty() && (std::isdigit(static_cast<unsigned char>(toks[0][0])) != 0)) {
            std::uint64_t p = 0;
            if (!parse_uint(toks[0], static_cast<std::uint64_t>(INT64_MAX), p)) {
                throw ParseError(line_no, "bad priority '" + std::string(toks[0]) + "'");
            }
            priority = static_cast<std::int64_t>(p);
            ++pos;
        }
        if (!priorities.insert(priority).second) {
            throw ParseError(line_no, "duplicate priority " + std::to_string(priority));
        }
        rule.priority = priority;

        if (pos >= toks.size()) {
            throw ParseError(line_no, "missing action");
        }
        const std::string action = lower(toks[pos++]);
        if (action == "permit") {
            rule.action = Action::Permit;
        } else if (action == "deny") {
            rule.action = Action::Deny;
        } else if (action == "mirror") {
            rule.action = Action::Mirror;
        } else {
            throw ParseError(line_no, "unknown action '" + action + "'");
        }

        if (pos >= toks.size()) {
            throw ParseError(line_no, "missing protocol");
        }
        if (toks[pos] != "*") {
            std::uint64_t proto = 0;
            if (!parse_uint(toks[pos], 255, proto)) {
                throw ParseError(line_no, "bad protocol '" + std::string(toks[pos]) + "'");
            }
            rule.proto.value = static_cast<std::uint8_t>(proto);
        }
        ++pos;

        rule.src = parse_address(toks, pos, line_no);
        rule.dst = parse_address(toks, pos, line_no);
        if (pos + 2 != toks.size()) {
            throw ParseError(line_no, pos + 2 > toks.size() ? "missing port field"
                                                            : "trailing tokens after destination port");
        }
        rule.sport = parse_port(toks[pos], line_no);
        rule.dport = parse_port(toks[pos + 1], line_no);
        rules.push_back(rule);

        if (end == text.size()) {
            break;
        }
    }
    return RuleSet(std::move(rules));
}

std::string serialize_rules(const RuleSet& rules) {
    std::vector<const AclRule*> by_id;
    for (const auto& r : rules) {
        by_id.push_back(&r);
    }
    std::sort(by_id.begin(), by_id.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::ostringstream out;
    for (const AclRule* r : by_id) {
        out << r->priority << ' ' << to_string(r->action) << ' '
            << (r->proto.value ? std::to_string(*r->proto.value) : std::string("*")) << ' '
            << format_address(r->src) << ' ' << format_address(r->dst) << ' '
            << format_port(r->sport) << ' ' << format_port(r->dport) << '\n';
    }
    return out.str();
}

std::vector<Ipv4Prefix> wildcard_to_prefixes(std::uint32_t address, std::uint32_t wildcard,
                                             std::size_t limit) {
    // The low contiguous run of wildcard bits becomes the host part of every
    // prefix; each remaining wildcard bit doubles the number of prefixes.
    const unsigned run = static_cast<unsigned>(std::countr_one(wildcard));
    const std::uint32_t run_mask = run == 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << run) - 1;
    const std::uint32_t spread = wildcard & ~run_mask;
    const unsigned spread_bits = static_cast<unsigned>(std::popcount(spread));
    if (spread_bits >= 63 || (std::uint64_t{1} << spread_bits) > limit) {
        throw ExpansionOverflow("wildcard " + format_ipv4(wildcard) + " expands to 2^" +
                                std::to_string(spread_bits) + " prefixes (limit " +
                                std::to_string(limit) + ")");
    }
    const std::uint32_t base = address & ~wildcard;
    std::vector<Ipv4Prefix> out;
    out.reserve(std::size_t{1} << spread_bits);
    std::uint32_t sub = 0;
    do {
        out.emplace_back(base | sub, 32 - run);
        sub = (sub - spread) & spread;
    } while (sub != 0);
    return out;
}

std::optional<std::size_t> first_match_index(const RuleSet& rules, const FiveTupleKey& key) noexcept {
    const auto span = rules.rules();
    for (std::size_t i = 0; i < span.size(); ++i) {
        if (span[i].matches(key)) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<RuleId> classify_linear(const RuleSet& rules, const FiveTupleKey& key) noexcept {
    if (auto i = first_match_index(rules, key)) {
        return rules[*i].id;
    }
    return std::nullopt;
}

std::vector<FiveTupleKey> parse_keys(std::string_view text) {
    std::vector<FiveTupleKey> keys;
    std::istringstream in{std::string(text)};
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string w; ls >> w;) {
            tok.push_back(w);
        }
        if (tok.empty()) {
            continue;
        }
        if (tok.size() != 5) {
            throw ParseError(n, "expected '<proto> <src> <dst> <sport> <dport>'");
        }
        auto number = [&](const std::string& t, unsigned max, const char* what) {
            unsigned v = 0;
            auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec != std::errc{} || ptr != t.data() + t.size() || v > max) {
                throw ParseError(n, std::string("bad ") + what + " '" + t + "'");
            }
            return v;
        };
        auto address = [&](const std::string& t) {
            const auto a = parse_ipv4(t);
            if (!a) {
                throw ParseError(n, "bad address '" + t + "'");
            }
            return *a;
        };
        FiveTupleKey k;
        k.proto = static_cast<std::uint8_t>(number(tok[0], 255, "protocol"));
        k.src = address(tok[1]);
        k.dst = address(tok[2]);
        k.sport = static_cast<std::uint16_t>(number(tok[3], 65535, "port"));
        k.dport = static_cast<std::uint16_t>(number(tok[4], 65535, "port"));
        keys.push_back(k);
    }
    return keys;
}

std::string format_key(const FiveTupleKey& k) {
    return std::to_string(k.proto) + " " + format_ipv4(k.src) + " " + format_ipv4(k.dst) + " " +
           std::to_string(k.sport) + " " + std::to_string(k.dport);
}

} // namespace netsieve
