#pragma once

// Seeded synthetic workloads for benchmarks and the command-line tools.
// Rules reuse a bounded pool of networks and port ranges, as production ACLs
// do, with prefix lengths skewed toward 24 bits and shorter.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "netsieve/lpm_dir24.hpp"
#include "netsieve/rule_model.hpp"

namespace netsieve {

struct WorkloadShape {
    std::size_t network_pool = 64;       // distinct src and dst networks each
    std::size_t port_pool = 12;          // distinct port ranges each
    double long_prefix_fraction = 0.05;  // share of prefixes longer than 24 bits
    double any_address = 0.01;          // wildcard shares per field
    double any_port = 0.3;
    double any_proto = 0.3;
};

RuleSet synthetic_rules(std::size_t n, std::uint64_t seed, const WorkloadShape& shape = {});

/// hit_fraction of the keys are drawn inside a random rule's match space,
/// the rest uniformly.
std::vector<FiveTupleKey> synthetic_keys(const RuleSet& rules, std::size_t n, std::uint64_t seed,
                                         double hit_fraction = 0.5);

/// Distinct prefixes, ids 0..n-1.
std::vector<Route> synthetic_routes(std::size_t n, std::uint64_t seed, double long_prefix_fraction = 0.05);

std::vector<std::uint32_t> synthetic_addresses(const std::vector<Route>& routes, std::size_t n, std::uint64_t seed,
                                               double hit_fraction = 0.5);

} // namespace netsieve
