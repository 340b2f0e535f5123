#include <random>
#include <set>

#include "doctest.h"
#include "netsieve/lpm_acl.hpp"
#include "test_support.hpp"

using namespace netsieve;

namespace {

std::uint32_t ip(const char* s) { return *parse_ipv4(s); }

std::vector<std::size_t> brute_force_field(const RuleSet& rs, AclField f, std::uint32_t v) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const AclRule& r = rs[i];
        bool m = false;
        switch (f) {
        case AclField::Src: m = r.src.matches(v); break;
        case AclField::Dst: m = r.dst.matches(v); break;
        case AclField::Sport: m = r.sport.contains(static_cast<std::uint16_t>(v)); break;
        case AclField::Dport: m = r.dport.contains(static_cast<std::uint16_t>(v)); break;
        case AclField::Proto: m = r.proto.matches(static_cast<std::uint8_t>(v)); break;
        }
        if (m) {
            out.push_back(i);
        }
    }
    return out;
}

} // namespace

TEST_CASE("port_range_to_prefixes") {
    auto p = port_range_to_prefixes({1000, 1003});
    REQUIRE(p.size() == 1);
    CHECK(p[0] == PortPrefix{1000, 14});

    CHECK(port_range_to_prefixes({0, 65535}) == std::vector<PortPrefix>{{0, 0}});
    CHECK(port_range_to_prefixes({80, 80}) == std::vector<PortPrefix>{{80, 16}});
    CHECK(port_range_to_prefixes({1, 65534}).size() == 30);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        auto a = static_cast<std::uint16_t>(rng());
        auto b = static_cast<std::uint16_t>(rng());
        if (a > b) {
            std::swap(a, b);
        }
        const auto prefixes = port_range_to_prefixes({a, b});
        CHECK(prefixes.size() <= 30);
        std::vector<int> cover(65536, 0);
        for (const auto& q : prefixes) {
            const std::uint32_t size = 1u << (16 - q.length);
            CHECK(q.value % size == 0);
            for (std::uint32_t v = q.value; v < q.value + size; ++v) {
                ++cover[v];
            }
        }
        bool exact = true;
        for (std::uint32_t v = 0; v < 65536; ++v) {
            exact = exact && cover[v] == (v >= a && v <= b ? 1 : 0);
        }
        CHECK(exact);
    }
}

TEST_CASE("acl_build: single catch-all") {
    const RuleSet rs = parse_rules("permit * 0.0.0.0/0 0.0.0.0/0 * *");
    const LpmAclTables t = acl_build(rs);
    for (std::uint32_t v : {0u, 80u, 255u, 65535u, ip("10.1.2.3"), 0xffffffffu}) {
        CHECK(t.field_matches(AclField::Src, v) == std::vector<std::size_t>{0});
        CHECK(t.field_matches(AclField::Dst, v) == std::vector<std::size_t>{0});
        CHECK(t.field_matches(AclField::Sport, v & 0xffff) == std::vector<std::size_t>{0});
        CHECK(t.field_matches(AclField::Dport, v & 0xffff) == std::vector<std::size_t>{0});
        CHECK(t.field_matches(AclField::Proto, v & 0xff) == std::vector<std::size_t>{0});
    }
    CHECK(acl_classify(t, {6, 1, 2, 3, 4}) == RuleId{0});
}

TEST_CASE("acl_build: nested source prefixes inherit ancestors") {
    const RuleSet rs = parse_rules(
        "permit * 10.0.0.0/8 0.0.0.0/0 * *\n"
        "deny * 10.1.0.0/16 0.0.0.0/0 * *\n");
    const LpmAclTables t = acl_build(rs);
    CHECK(t.field_matches(AclField::Src, ip("10.1.2.3")) == std::vector<std::size_t>{0, 1});
    CHECK(t.field_matches(AclField::Src, ip("10.2.0.1")) == std::vector<std::size_t>{0});
    CHECK(t.field_matches(AclField::Src, ip("11.0.0.1")).empty());
    CHECK(acl_classify(t, {6, ip("10.1.2.3"), 5, 1, 1}) == RuleId{0});
}

TEST_CASE("per-field bitsets match brute force on sampled values") {
    const RuleSet rs = testing::random_rules(300, 17);
    const LpmAclTables t = acl_build(rs);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 3000; ++i) {
        const AclRule& r = rs[rng() % rs.size()];
        const std::uint32_t s = testing::random_member(rng, r.src);
        const std::uint32_t d = testing::random_member(rng, r.dst);
        CHECK(t.field_matches(AclField::Src, s) == brute_force_field(rs, AclField::Src, s));
        CHECK(t.field_matches(AclField::Dst, d) == brute_force_field(rs, AclField::Dst, d));
        const auto port = static_cast<std::uint32_t>(rng() % 65536);
        CHECK(t.field_matches(AclField::Sport, port) == brute_force_field(rs, AclField::Sport, port));
        CHECK(t.field_matches(AclField::Dport, port) == brute_force_field(rs, AclField::Dport, port));
    }
    for (std::uint32_t p = 0; p < 256; ++p) {
        CHECK(t.field_matches(AclField::Proto, p) == brute_force_field(rs, AclField::Proto, p));
    }
}

TEST_CASE("acl_classify: empty rule set") {
    const LpmAclTables t = acl_build(RuleSet{});
    CHECK_FALSE(acl_classify(t, {6, 1, 2, 3, 4}).has_value());
}

TEST_CASE("acl_classify agrees with classify_linear") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const std::size_t n = seed == 4 ? 1000 : 200;
        const RuleSet rs = testing::random_rules(n, seed);
        const LpmAclTables t = acl_build(rs);
        const std::size_t keys = seed == 4 ? 50000 : 10000;
        for (const auto& k : testing::random_keys(rs, keys, seed + 10)) {
            REQUIRE(acl_classify(t, k) == classify_linear(rs, k));
        }
    }
}

TEST_CASE("bitset summary skips words across a wide rule set") {
    // 5000 rules: only the last one matches, so the scan must cross many
    // all-zero words and the summary must still find it.
    std::vector<AclRule> rules;
    for (std::uint32_t i = 0; i < 5000; ++i) {
        AclRule r;
        r.id = i;
        r.priority = i;
        r.src = AddressMatch::from_prefix(Ipv4Prefix(ip("20.0.0.0") + (i << 8), 24));
        rules.push_back(r);
    }
    rules.back().src = AddressMatch::from_prefix(Ipv4Prefix(ip("99.0.0.0"), 8));
    const RuleSet rs(rules);
    const LpmAclTables t = acl_build(rs);
    CHECK(t.bitset_words() == 79);
    CHECK(acl_classify(t, {6, ip("99.1.1.1"), 1, 1, 1}) == RuleId{4999});
    CHECK(acl_classify(t, {6, ip("20.0.5.1"), 1, 1, 1}) == RuleId{5});
    CHECK_FALSE(acl_classify(t, {6, ip("98.0.0.1"), 1, 1, 1}).has_value());
}

TEST_CASE("acl_build: capacity limits") {
    LpmAclOptions opt;
    opt.capacity = 10;
    CHECK_THROWS_AS(acl_build(testing::random_rules(11, 1), opt), AclCapacityError);

    const RuleSet wide = parse_rules("permit * 0.0.0.0 wildcard 255.1.0.255 0.0.0.0/0 * *");
    CHECK_THROWS_AS(acl_build(wide), AclCapacityError);
    LpmAclOptions big;
    big.expansion_limit = 1024;
    const LpmAclTables t = acl_build(wide, big);
    CHECK(acl_classify(t, {6, ip("7.1.0.9"), 1, 1, 1}) == RuleId{0});
    CHECK_FALSE(acl_classify(t, {6, ip("7.2.0.9"), 1, 1, 1}).has_value());

    LpmAclOptions few_blocks;
    few_blocks.max_tbl8_blocks = 1;
    const RuleSet longs = parse_rules(
        "permit * 1.1.1.1/32 0.0.0.0/0 * *\n"
        "permit * 1.1.2.1/32 0.0.0.0/0 * *\n");
    CHECK_THROWS_AS(acl_build(longs, few_blocks), AclCapacityError);
}
