#include <map>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "netsieve/lpm_dir24.hpp"

using namespace netsieve;

namespace {

std::uint32_t ip(const char* s) { return *parse_ipv4(s); }

// Brute-force longest covering prefix over an explicit list.
struct LinearLpm {
    std::map<Ipv4Prefix, std::uint32_t> routes;

    std::optional<std::uint32_t> lookup(std::uint32_t addr) const {
        std::optional<std::uint32_t> best;
        int best_len = -1;
        for (const auto& [p, id] : routes) {
            if (p.contains(addr) && static_cast<int>(p.length()) > best_len) {
                best = id;
                best_len = static_cast<int>(p.length());
            }
        }
        return best;
    }
    bool has_long_in(std::uint32_t addr) const {
        for (const auto& [p, id] : routes) {
            if (p.length() > 24 && (p.address() >> 8) == (addr >> 8)) {
                return true;
            }
        }
        return false;
    }
};

Ipv4Prefix random_prefix(std::mt19937_64& rng) {
    // skewed toward <= 24 bits, with a share of longer ones
    const unsigned len = rng() % 10 == 0 ? 25 + static_cast<unsigned>(rng() % 8) : static_cast<unsigned>(rng() % 25);
    return Ipv4Prefix(static_cast<std::uint32_t>(rng()), len);
}

std::uint32_t probe_near(std::mt19937_64& rng, const std::map<Ipv4Prefix, std::uint32_t>& routes) {
    if (routes.empty() || rng() % 4 == 0) {
        return static_cast<std::uint32_t>(rng());
    }
    auto it = routes.begin();
    std::advance(it, static_cast<long>(rng() % routes.size()));
    return it->first.address() | (static_cast<std::uint32_t>(rng()) & ~it->first.netmask());
}

} // namespace

TEST_CASE("lpm_add: /8 fills its 2^16 first-level slots") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("10.0.0.0"), 8), 7);
    for (std::size_t slot : {ip("10.0.0.0") >> 8, ip("10.128.77.0") >> 8, ip("10.255.255.0") >> 8}) {
        const auto e = t.first_level(slot);
        CHECK(e.valid);
        CHECK_FALSE(e.ext);
        CHECK(e.payload == 7);
        CHECK(e.depth == 8);
    }
    CHECK_FALSE(t.first_level(ip("11.0.0.0") >> 8).valid);
    CHECK_FALSE(t.first_level(ip("9.255.255.0") >> 8).valid);
    CHECK(t.blocks_in_use() == 0);
}

TEST_CASE("lpm_add: /32 under a /24 extends the slot and back-fills the block") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 1);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.7"), 32), 2);
    const auto e = t.first_level(ip("10.1.1.0") >> 8);
    REQUIRE(e.ext);
    CHECK(t.blocks_in_use() == 1);
    for (std::size_t i = 0; i < 256; ++i) {
        const auto s = t.second_level(e.payload, i);
        CHECK(s.valid);
        CHECK(s.payload == (i == 7 ? 2u : 1u));
        CHECK(s.depth == (i == 7 ? 32u : 24u));
    }
}

TEST_CASE("lpm_add: default route fills every empty slot at depth 0") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("192.168.0.0"), 16), 5);
    lpm_add(t, Ipv4Prefix(0, 0), 9);
    CHECK(t.first_level(0).payload == 9);
    CHECK(t.first_level(0).depth == 0);
    CHECK(t.first_level((1u << 24) - 1).payload == 9);
    CHECK(t.first_level(ip("192.168.3.0") >> 8).payload == 5);
    CHECK(lpm_lookup(t, ip("8.8.8.8")).id == 9u);
}

TEST_CASE("lpm_add: re-adding a prefix replaces its id") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 1);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.128"), 25), 2);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 3);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.128"), 25), 4);
    CHECK(lpm_lookup(t, ip("10.1.1.1")).id == 3u);
    CHECK(lpm_lookup(t, ip("10.1.1.200")).id == 4u);
    CHECK(t.size() == 2);
    CHECK(t.blocks_in_use() == 1);
}

TEST_CASE("lpm_lookup: examples") {
    Dir24Tables t;
    auto r = lpm_lookup(t, ip("1.2.3.4"));
    CHECK_FALSE(r.id.has_value());
    CHECK(r.accesses == 1);

    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 0xA);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.7"), 32), 0xB);
    r = lpm_lookup(t, ip("10.1.1.7"));
    CHECK(r.id == 0xBu);
    CHECK(r.accesses == 2);
    r = lpm_lookup(t, ip("10.1.1.8"));
    CHECK(r.id == 0xAu);
    CHECK(r.accesses == 2);
    r = lpm_lookup(t, ip("10.2.0.1"));
    CHECK_FALSE(r.id.has_value());
    CHECK(r.accesses == 1);
}

TEST_CASE("lpm_add/lpm_lookup: argument checks") {
    Dir24Tables t;
    CHECK_THROWS_AS(t.add(ip("10.0.0.1"), 8, 1), std::invalid_argument);
    CHECK_THROWS_AS(t.add(0, 33, 1), std::invalid_argument);
    CHECK_THROWS_AS(t.add(0, 0, Dir24Tables::kMaxId + 1), std::invalid_argument);
}

TEST_CASE("lpm_delete: examples") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("10.0.0.0"), 8), 1);
    lpm_delete(t, Ipv4Prefix(ip("10.0.0.0"), 8));
    CHECK_FALSE(lpm_lookup(t, ip("10.0.0.1")).id.has_value());
    CHECK_FALSE(lpm_lookup(t, ip("10.255.3.1")).id.has_value());

    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 1);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.7"), 32), 2);
    CHECK(t.blocks_in_use() == 1);
    lpm_delete(t, Ipv4Prefix(ip("10.1.1.7"), 32));
    CHECK(t.blocks_in_use() == 0);
    const auto e = t.first_level(ip("10.1.1.0") >> 8);
    CHECK_FALSE(e.ext);
    CHECK(e.payload == 1);
    CHECK(e.depth == 24);
    CHECK(lpm_lookup(t, ip("10.1.1.7")).id == 1u);
    CHECK(lpm_lookup(t, ip("10.1.1.7")).accesses == 1);
}

TEST_CASE("lpm_delete: unknown prefix leaves the tables unchanged") {
    Dir24Tables t;
    lpm_add(t, Ipv4Prefix(ip("10.1.1.0"), 24), 1);
    lpm_add(t, Ipv4Prefix(ip("10.1.1.7"), 32), 2);
    CHECK_THROWS_AS(lpm_delete(t, Ipv4Prefix(ip("10.1.1.8"), 32)), PrefixNotFound);
    CHECK_THROWS_AS(lpm_delete(t, Ipv4Prefix(ip("10.1.0.0"), 16)), PrefixNotFound);
    CHECK(t.size() == 2);
    CHECK(t.blocks_in_use() == 1);
    CHECK(lpm_lookup(t, ip("10.1.1.7")).id == 2u);
    CHECK(lpm_lookup(t, ip("10.1.1.9")).id == 1u);
}

TEST_CASE("second-level pool limit") {
    Dir24Tables t(2);
    lpm_add(t, Ipv4Prefix(ip("1.1.1.1"), 32), 1);
    lpm_add(t, Ipv4Prefix(ip("1.1.2.1"), 32), 2);
    lpm_add(t, Ipv4Prefix(ip("1.1.2.2"), 32), 3); // same block
    CHECK_THROWS_AS(lpm_add(t, Ipv4Prefix(ip("1.1.3.1"), 32), 4), Tbl8Exhausted);
    CHECK(t.size() == 3);
    CHECK_FALSE(lpm_lookup(t, ip("1.1.3.1")).id.has_value());
    lpm_delete(t, Ipv4Prefix(ip("1.1.1.1"), 32));
    lpm_add(t, Ipv4Prefix(ip("1.1.3.1"), 32), 4); // freed block is reused
    CHECK(lpm_lookup(t, ip("1.1.3.1")).id == 4u);
    CHECK(t.blocks_in_use() == 2);
}

TEST_CASE("oracle equivalence under random add/delete sequences") {
    std::mt19937_64 rng(2024);
    Dir24Tables t(4096);
    LinearLpm oracle;
    for (int step = 0; step < 400; ++step) {
        if (!oracle.routes.empty() && rng() % 3 == 0) {
            auto it = oracle.routes.begin();
            std::advance(it, static_cast<long>(rng() % oracle.routes.size()));
            lpm_delete(t, it->first);
            oracle.routes.erase(it);
        } else {
            // cluster prefixes in a few /16s so they nest and share /24s
            Ipv4Prefix p = random_prefix(rng);
            const std::uint32_t clustered = (ip("10.0.0.0") + ((rng() % 4) << 16)) | (p.address() & 0xffff);
            if (p.length() >= 16) {
                p = Ipv4Prefix(clustered, p.length());
            }
            const auto id = static_cast<std::uint32_t>(rng() % 1000);
            lpm_add(t, p, id);
            oracle.routes[p] = id;
        }
        for (int probe = 0; probe < 50; ++probe) {
            const std::uint32_t a = probe_near(rng, oracle.routes);
            const auto got = lpm_lookup(t, a);
            REQUIRE(got.id == oracle.lookup(a));
            CHECK(got.accesses == (oracle.has_long_in(a) ? 2u : 1u));
        }
        std::set<std::uint32_t> parents;
        for (const auto& [p, id] : oracle.routes) {
            if (p.length() > 24) {
                parents.insert(p.address() >> 8);
            }
        }
        REQUIRE(t.blocks_in_use() == parents.size());
        REQUIRE(t.size() == oracle.routes.size());
    }
}

TEST_CASE("shorter prefixes never shadow longer ones") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        Dir24Tables t;
        const Ipv4Prefix longer(static_cast<std::uint32_t>(rng()), 20 + static_cast<unsigned>(rng() % 13));
        lpm_add(t, longer, 1);
        const Ipv4Prefix shorter(longer.address(), static_cast<unsigned>(rng() % longer.length()));
        lpm_add(t, shorter, 2);
        for (int probe = 0; probe < 64; ++probe) {
            const std::uint32_t a = longer.address() | (static_cast<std::uint32_t>(rng()) & ~longer.netmask());
            CHECK(lpm_lookup(t, a).id == 1u);
        }
    }
}

TEST_CASE("16-bit 8+8 variant") {
    Port88Tables t;
    t.add(1000, 14, 3); // 1000-1003
    t.add(0, 6, 4);     // 0-1023
    t.add(1001, 16, 5);
    CHECK(t.lookup(999).id == 4u);
    CHECK(t.lookup(1000).id == 3u);
    CHECK(t.lookup(1001).id == 5u);
    CHECK(t.lookup(1001).accesses == 2);
    CHECK(t.lookup(1003).id == 3u);
    CHECK(t.lookup(1024).id == std::nullopt);
    CHECK_THROWS_AS(t.add(70000, 16, 1), std::invalid_argument);
}

TEST_CASE("route and address files") {
    const auto routes = parse_routes("# routes\n10.0.0.0/8 1\n10.1.1.7/32   42\n\n");
    REQUIRE(routes.size() == 2);
    CHECK(routes[1].prefix == Ipv4Prefix(ip("10.1.1.7"), 32));
    CHECK(routes[1].id == 42);
    CHECK_THROWS_AS(parse_routes("10.0.0.0/8\n"), ParseError);
    CHECK_THROWS_AS(parse_routes("10.0.0.0/8 x\n"), ParseError);
    CHECK_THROWS_AS(parse_routes("10.0.0.0/40 1\n"), ParseError);
    CHECK(parse_addresses("1.2.3.4\n5.6.7.8\n").size() == 2);
    CHECK_THROWS_AS(parse_addresses("1.2.3\n"), ParseError);
}

TEST_CASE("published snapshots are immutable for readers") {
    RouteTableHandle handle;
    handle.update([](Dir24Tables& t) { lpm_add(t, Ipv4Prefix(ip("10.0.0.0"), 8), 1); });
    const auto before = handle.snapshot();

    std::thread reader([&] {
        for (int i = 0; i < 1000; ++i) {
            const auto id = lpm_lookup(*before, ip("10.1.1.7")).id;
            CHECK(id == 1u);
        }
    });
    handle.update([](Dir24Tables& t) { lpm_add(t, Ipv4Prefix(ip("10.1.1.7"), 32), 2); });
    reader.join();

    CHECK(lpm_lookup(*before, ip("10.1.1.7")).id == 1u);
    CHECK(lpm_lookup(*handle.snapshot(), ip("10.1.1.7")).id == 2u);

    CHECK_THROWS(handle.update([](Dir24Tables& t) { lpm_delete(t, Ipv4Prefix(ip("99.0.0.0"), 8)); }));
    CHECK(handle.snapshot()->size() == 2);
}
