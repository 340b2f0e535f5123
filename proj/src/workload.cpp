#include "netsieve/workload.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace netsieve {

namespace {

double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Mostly /16../24 with a tail of short prefixes; `long_fraction` of draws are
// /25../32.
unsigned prefix_length(std::mt19937_64& rng, double long_fraction) {
    if (unit(rng) < long_fraction) {
        return 25 + static_cast<unsigned>(rng() % 8);
    }
    const double x = unit(rng);
    if (x < 0.45) {
        return 24;
    }
    if (x < 0.85) {
        return 16 + static_cast<unsigned>(rng() % 8);
    }
    return 8 + static_cast<unsigned>(rng() % 8);
}

std::vector<AddressMatch> network_pool(std::mt19937_64& rng, const WorkloadShape& shape) {
    std::vector<AddressMatch> pool;
    std::vector<Ipv4Prefix> made;
    while (pool.size() < shape.network_pool) {
        if (!made.empty() && rng() % 3 == 0) {
            // nest inside an earlier network
            const Ipv4Prefix parent = made[rng() % made.size()];
            if (parent.length() < 32) {
                const unsigned len = parent.length() + 1 + static_cast<unsigned>(rng() % (32 - parent.length()));
                const Ipv4Prefix p(parent.address() | (static_cast<std::uint32_t>(rng()) & ~parent.netmask()),
                                   std::min(len, parent.length() < 24 ? 24u : 32u));
                made.push_back(p);
                pool.push_back(AddressMatch::from_prefix(p));
                continue;
            }
        }
        const Ipv4Prefix p(static_cast<std::uint32_t>(rng()), prefix_length(rng, shape.long_prefix_fraction));
        made.push_back(p);
        pool.push_back(AddressMatch::from_prefix(p));
    }
    return pool;
}

std::vector<PortRange> port_pool(std::mt19937_64& rng, const WorkloadShape& shape) {
    static constexpr std::uint16_t kWellKnown[] = {22, 25, 53, 80, 123, 161, 443, 514, 3306, 8080};
    std::vector<PortRange> pool;
    while (pool.size() < shape.port_pool) {
        switch (rng() % 4) {
        case 0:
        case 1: {
            const std::uint16_t p = kWellKnown[rng() % std::size(kWellKnown)];
            pool.push_back({p, p});
            break;
        }
        case 2: pool.push_back(rng() % 2 == 0 ? PortRange{1024, 65535} : PortRange{0, 1023}); break;
        default: {
            const auto lo = static_cast<std::uint16_t>(1024 + rng() % 60000);
            pool.push_back({lo, static_cast<std::uint16_t>(std::min<std::uint32_t>(65535, lo + rng() % 2000))});
        }
        }
    }
    return pool;
}

} // namespace

RuleSet synthetic_rules(std::size_t n, std::uint64_t seed, const WorkloadShape& shape) {
    std::mt19937_64 rng(seed);
    const auto srcs = network_pool(rng, shape);
    const auto dsts = network_pool(rng, shape);
    const auto sports = port_pool(rng, shape);
    const auto dports = port_pool(rng, shape);
    static constexpr std::uint8_t kProtos[] = {6, 17, 1, 47};
    std::vector<AclRule> rules;
    rules.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        AclRule r;
        r.id = static_cast<RuleId>(i);
        r.priority = static_cast<std::int64_t>(i);
        r.src = unit(rng) < shape.any_address ? AddressMatch::any() : srcs[rng() % srcs.size()];
        r.dst = unit(rng) < shape.any_address ? AddressMatch::any() : dsts[rng() % dsts.size()];
        r.sport = unit(rng) < shape.any_port ? PortRange{} : sports[rng() % sports.size()];
        r.dport = unit(rng) < shape.any_port ? PortRange{} : dports[rng() % dports.size()];
        if (unit(rng) >= shape.any_proto) {
            r.proto.value = kProtos[rng() % std::size(kProtos)];
        }
        r.action = static_cast<Action>(rng() % 2);
        rules.push_back(r);
    }
    return RuleSet(std::move(rules));
}

std::vector<FiveTupleKey> synthetic_keys(const RuleSet& rules, std::size_t n, std::uint64_t seed,
                                         double hit_fraction) {
    std::mt19937_64 rng(seed);
    std::vector<FiveTupleKey> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        FiveTupleKey k;
        if (!rules.size() || unit(rng) >= hit_fraction) {
            k.proto = static_cast<std::uint8_t>(rng() % 2 == 0 ? 6 : rng());
            k.src = static_cast<std::uint32_t>(rng());
            k.dst = static_cast<std::uint32_t>(rng());
            k.sport = static_cast<std::uint16_t>(rng());
            k.dport = static_cast<std::uint16_t>(rng());
        } else {
            const AclRule& r = rules[rng() % rules.size()];
            k.proto = r.proto.value.value_or(static_cast<std::uint8_t>(rng()));
            k.src = r.src.address | (static_cast<std::uint32_t>(rng()) & r.src.wildcard);
            k.dst = r.dst.address | (static_cast<std::uint32_t>(rng()) & r.dst.wildcard);
            k.sport = static_cast<std::uint16_t>(r.sport.lo + rng() % (std::uint32_t{r.sport.hi} - r.sport.lo + 1));
            k.dport = static_cast<std::uint16_t>(r.dport.lo + rng() % (std::uint32_t{r.dport.hi} - r.dport.lo + 1));
        }
        keys.push_back(k);
    }
    return keys;
}

std::vector<Route> synthetic_routes(std::size_t n, std::uint64_t seed, double long_prefix_fraction) {
    std::mt19937_64 rng(seed);
    std::set<Ipv4Prefix> seen;
    std::vector<Route> routes;
    routes.reserve(n);
    while (routes.size() < n) {
        Ipv4Prefix p(static_cast<std::uint32_t>(rng()), prefix_length(rng, long_prefix_fraction));
        if (!routes.empty() && rng() % 4 == 0) {
            // more-specific of an existing route
            const Ipv4Prefix parent = routes[rng() % routes.size()].prefix;
            const unsigned len = std::max(parent.length(), p.length());
            p = Ipv4Prefix(parent.address() | (p.address() & ~parent.netmask()), len);
        }
        if (seen.insert(p).second) {
            routes.push_back({p, static_cast<std::uint32_t>(routes.size())});
        }
    }
    return routes;
}

std::vector<std::uint32_t> synthetic_addresses(const std::vector<Route>& routes, std::size_t n, std::uint64_t seed,
                                               double hit_fraction) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint32_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto a = static_cast<std::uint32_t>(rng());
        if (!routes.empty() && unit(rng) < hit_fraction) {
            const Ipv4Prefix& p = routes[rng() % routes.size()].prefix;
            a = p.address() | (a & ~p.netmask());
        }
        out.push_back(a);
    }
    return out;
}

} // namespace netsieve
