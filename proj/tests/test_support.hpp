#pragma once

// Random rule/key generators for property tests. Deliberately independent of
// the benchmark workload generator so the two exercise different shapes.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "netsieve/rule_model.hpp"

namespace netsieve::testing {

struct RandomRuleShape {
    double wildcard_addr = 0.15;    // full wildcard address
    double noncontiguous = 0.05;    // inverted mask with holes
    double nested = 0.4;            // derive prefix from an earlier rule's prefix
    double any_port = 0.5;
    double any_proto = 0.4;
    // When nonzero, addresses are drawn from this many distinct matches per
    // field, the way production ACLs reuse a limited set of networks. Keeps
    // RFC cross-product tables bounded for large rule counts.
    std::size_t address_pool = 0;
    std::size_t port_pool = 0; // same idea for port ranges
};

inline AddressMatch random_address(std::mt19937_64& rng, const RandomRuleShape& shape,
                                   const std::vector<AddressMatch>& earlier) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    if (x < shape.wildcard_addr) {
        return AddressMatch::any();
    }
    if (x < shape.wildcard_addr + shape.noncontiguous) {
        // up to 8 free bits scattered plus a low run
        std::uint32_t wc = (std::uint32_t{1} << (rng() % 9)) - 1;
        for (int i = 0; i < 3; ++i) {
            wc |= std::uint32_t{1} << (8 + rng() % 24);
        }
        return AddressMatch::from_wildcard(static_cast<std::uint32_t>(rng()), wc);
    }
    std::uint32_t base = static_cast<std::uint32_t>(rng());
    unsigned len = 8 + static_cast<unsigned>(rng() % 25);
    if (!earlier.empty() && u(rng) < shape.nested) {
        const auto& parent = earlier[rng() % earlier.size()];
        if (auto p = parent.as_prefix()) {
            base = p->address() | (base & ~p->netmask());
            len = p->length() + static_cast<unsigned>(rng() % (33 - p->length()));
        }
    }
    return AddressMatch::from_prefix(Ipv4Prefix(base, len));
}

inline PortRange random_ports(std::mt19937_64& rng, const RandomRuleShape& shape) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < shape.any_port) {
        return {};
    }
    switch (rng() % 4) {
    case 0: {
        const auto p = static_cast<std::uint16_t>(rng() % 2048);
        return {p, p};
    }
    case 1: return {0, 1023};
    case 2: return {1024, 65535};
    default: {
        auto a = static_cast<std::uint16_t>(rng());
        auto b = static_cast<std::uint16_t>(rng());
        if (a > b) {
            std::swap(a, b);
        }
        return {a, b};
    }
    }
}

inline RuleSet random_rules(std::size_t n, std::uint64_t seed, const RandomRuleShape& shape = {}) {
    std::mt19937_64 rng(seed);
    std::vector<AclRule> rules;
    std::vector<AddressMatch> srcs;
    std::vector<AddressMatch> dsts;
    std::vector<PortRange> sports;
    std::vector<PortRange> dports;
    for (std::size_t i = 0; i < shape.port_pool; ++i) {
        sports.push_back(random_ports(rng, shape));
        dports.push_back(random_ports(rng, shape));
    }
    for (std::size_t i = 0; i < shape.address_pool; ++i) {
        srcs.push_back(random_address(rng, shape, srcs));
        dsts.push_back(random_address(rng, shape, dsts));
    }
    for (std::size_t i = 0; i < n; ++i) {
        AclRule r;
        r.id = static_cast<RuleId>(i);
        r.priority = static_cast<std::int64_t>(i);
        if (shape.address_pool > 0) {
            r.src = srcs[rng() % srcs.size()];
            r.dst = dsts[rng() % dsts.size()];
        } else {
            r.src = random_address(rng, shape, srcs);
            r.dst = random_address(rng, shape, dsts);
            srcs.push_back(r.src);
            dsts.push_back(r.dst);
        }
        if (shape.port_pool > 0) {
            r.sport = sports[rng() % sports.size()];
            r.dport = dports[rng() % dports.size()];
        } else {
            r.sport = random_ports(rng, shape);
            r.dport = random_ports(rng, shape);
        }
        if (std::uniform_real_distribution<double>(0, 1)(rng) >= shape.any_proto) {
            static constexpr std::uint8_t kProtos[] = {1, 6, 17, 47};
            r.proto.value = kProtos[rng() % 4];
        }
        r.action = static_cast<Action>(rng() % 3);
        rules.push_back(r);
    }
    // shuffle priorities so position and id differ
    std::vector<std::int64_t> prios(n);
    for (std::size_t i = 0; i < n; ++i) {
        prios[i] = static_cast<std::int64_t>(i) * 3;
    }
    std::shuffle(prios.begin(), prios.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        rules[i].priority = prios[i];
    }
    return RuleSet(std::move(rules));
}

inline std::uint32_t random_member(std::mt19937_64& rng, const AddressMatch& m) {
    return m.address | (static_cast<std::uint32_t>(rng()) & m.wildcard);
}

/// Half the keys land inside a randomly chosen rule, the rest are uniform.
inline std::vector<FiveTupleKey> random_keys(const RuleSet& rules, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<FiveTupleKey> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        FiveTupleKey k;
        k.proto = static_cast<std::uint8_t>(rng() % 2 ? rng() : std::vector<int>{1, 6, 17}[rng() % 3]);
        k.src = static_cast<std::uint32_t>(rng());
        k.dst = static_cast<std::uint32_t>(rng());
        k.sport = static_cast<std::uint16_t>(rng());
        k.dport = static_cast<std::uint16_t>(rng());
        if (!rules.empty() && rng() % 2 == 0) {
            const AclRule& r = rules[rng() % rules.size()];
            k.src = random_member(rng, r.src);
            k.dst = random_member(rng, r.dst);
            k.sport = static_cast<std::uint16_t>(r.sport.lo + rng() % (std::uint32_t{r.sport.hi} - r.sport.lo + 1));
            k.dport = static_cast<std::uint16_t>(r.dport.lo + rng() % (std::uint32_t{r.dport.hi} - r.dport.lo + 1));
            if (r.proto.value) {
                k.proto = *r.proto.value;
            }
        }
        keys.push_back(k);
    }
    return keys;
}

} // namespace netsieve::testing
