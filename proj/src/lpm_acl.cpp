#include "netsieve/lpm_acl.hpp"

#include <bit>
#include <map>
#include <string>

namespace netsieve {

std::vector<PortPrefix> port_range_to_prefixes(const PortRange& r) {
    std::vector<PortPrefix> out;
    std::uint32_t lo = r.lo;
    const std::uint32_t hi = r.hi;
    while (lo <= hi) {
        // Largest aligned block starting at lo that stays inside the range.
        std::uint32_t size = lo == 0 ? 0x10000u : (lo & (~lo + 1));
        while (lo + size - 1 > hi) {
            size >>= 1;
        }
        out.push_back({static_cast<std::uint16_t>(lo), 16 - static_cast<unsigned>(std::countr_zero(size))});
        lo += size;
    }
    return out;
}

BitsetTable::BitsetTable(std::size_t rules)
    : words_((rules + 63) / 64), summary_words_((words_ + 63) / 64) {}

std::uint32_t BitsetTable::append(const std::uint64_t* bits) {
    bits_.insert(bits_.end(), bits, bits + words_);
    summary_.resize(summary_.size() + summary_words_, 0);
    std::uint64_t* sum = summary_.data() + count_ * summary_words_;
    for (std::size_t w = 0; w < words_; ++w) {
        if (bits[w] != 0) {
            sum[w / 64] |= std::uint64_t{1} << (w % 64);
        }
    }
    return static_cast<std::uint32_t>(count_++);
}

namespace {

struct FieldPrefix {
    std::uint32_t key;
    unsigned length;
};

template <unsigned KeyBits>
std::uint32_t field_mask(unsigned length) {
    if (length == 0) {
        return 0;
    }
    return static_cast<std::uint32_t>((~std::uint64_t{0} << (KeyBits - length)) & ((std::uint64_t{1} << KeyBits) - 1));
}

// Inserts every distinct prefix of one field, with the bitset of rules whose
// prefix list contains that prefix or one of its ancestors.
template <unsigned KeyBits, typename Table>
void build_prefix_field(Table& table, BitsetTable& pool, const std::vector<std::vector<FieldPrefix>>& per_rule) {
    std::map<std::uint64_t, std::vector<std::size_t>> exact;
    auto key_of = [](std::uint32_t k, unsigned len) { return (std::uint64_t{k} << 6) | len; };
    for (std::size_t r = 0; r < per_rule.size(); ++r) {
        for (const auto& p : per_rule[r]) {
            exact[key_of(p.key, p.length)].push_back(r);
        }
    }
    std::vector<std::uint64_t> bits(pool.words());
    for (const auto& [packed, owners] : exact) {
        const auto key = static_cast<std::uint32_t>(packed >> 6);
        const auto length = static_cast<unsigned>(packed & 63);
        std::fill(bits.begin(), bits.end(), 0);
        for (unsigned len = 0; len <= length; ++len) {
            auto it = exact.find(key_of(key & field_mask<KeyBits>(len), len));
            if (it == exact.end()) {
                continue;
            }
            for (std::size_t r : it->second) {
                bits[r / 64] |= std::uint64_t{1} << (r % 64);
            }
        }
        table.add(key, length, pool.append(bits.data()));
    }
}

std::vector<FieldPrefix> address_prefixes(const AddressMatch& m, std::size_t limit) {
    std::vector<FieldPrefix> out;
    if (auto p = m.as_prefix()) {
        out.push_back({p->address(), p->length()});
        return out;
    }
    for (const auto& p : wildcard_to_prefixes(m.address, m.wildcard, limit)) {
        out.push_back({p.address(), p.length()});
    }
    return out;
}

std::vector<FieldPrefix> port_prefixes(const PortRange& r) {
    std::vector<FieldPrefix> out;
    for (const auto& p : port_range_to_prefixes(r)) {
        out.push_back({p.value, p.length});
    }
    return out;
}

} // namespace

LpmAclTables acl_build(const RuleSet& rules, const LpmAclOptions& options) {
    if (rules.size() > options.capacity) {
        throw AclCapacityError("rule count " + std::to_string(rules.size()) + " exceeds bitset capacity " +
                               std::to_string(options.capacity));
    }
    LpmAclTables t(options.max_tbl8_blocks);
    const std::size_t n = rules.size();
    std::vector<std::uint64_t> empty((n + 63) / 64, 0);
    for (auto& pool : t.pools_) {
        pool = BitsetTable(n);
        pool.append(empty.data());
    }
    for (const auto& r : rules) {
        t.ids_.push_back(r.id);
    }

    std::vector<std::vector<FieldPrefix>> src(n), dst(n), sport(n), dport(n);
    try {
        for (std::size_t i = 0; i < n; ++i) {
            src[i] = address_prefixes(rules[i].src, options.expansion_limit);
            dst[i] = address_prefixes(rules[i].dst, options.expansion_limit);
            sport[i] = port_prefixes(rules[i].sport);
            dport[i] = port_prefixes(rules[i].dport);
        }
        build_prefix_field<32>(t.src_, t.pools_[0], src);
        build_prefix_field<32>(t.dst_, t.pools_[1], dst);
        build_prefix_field<16>(t.sport_, t.pools_[2], sport);
        build_prefix_field<16>(t.dport_, t.pools_[3], dport);
    } catch (const ExpansionOverflow& e) {
        throw AclCapacityError(e.what());
    } catch (const Tbl8Exhausted& e) {
        throw AclCapacityError(e.what());
    }

    std::vector<std::uint64_t> bits(empty.size());
    for (unsigned v = 0; v < 256; ++v) {
        std::fill(bits.begin(), bits.end(), 0);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (rules[i].proto.matches(static_cast<std::uint8_t>(v))) {
                bits[i / 64] |= std::uint64_t{1} << (i % 64);
                any = true;
            }
        }
        t.proto_[v] = any ? t.pools_[4].append(bits.data()) : 0;
    }
    return t;
}

std::uint32_t LpmAclTables::bitset_index(AclField field, std::uint32_t value) const noexcept {
    switch (field) {
    case AclField::Src: return src_.find(value, 0);
    case AclField::Dst: return dst_.find(value, 0);
    case AclField::Sport: return sport_.find(value & 0xffff, 0);
    case AclField::Dport: return dport_.find(value & 0xffff, 0);
    case AclField::Proto: return proto_[value & 0xff];
    }
    return 0;
}

std::optional<std::size_t> LpmAclTables::first_match(const FiveTupleKey& key) const noexcept {
    const std::uint32_t i0 = src_.find(key.src, 0);
    const std::uint32_t i1 = dst_.find(key.dst, 0);
    const std::uint32_t i2 = sport_.find(key.sport, 0);
    const std::uint32_t i3 = dport_.find(key.dport, 0);
    const std::uint32_t i4 = proto_[key.proto];

    const std::uint64_t* s0 = pools_[0].summary(i0);
    const std::uint64_t* s1 = pools_[1].summary(i1);
    const std::uint64_t* s2 = pools_[2].summary(i2);
    const std::uint64_t* s3 = pools_[3].summary(i3);
    const std::uint64_t* s4 = pools_[4].summary(i4);
    const std::uint64_t* b0 = pools_[0].bits(i0);
    const std::uint64_t* b1 = pools_[1].bits(i1);
    const std::uint64_t* b2 = pools_[2].bits(i2);
    const std::uint64_t* b3 = pools_[3].bits(i3);
    const std::uint64_t* b4 = pools_[4].bits(i4);

    const std::size_t summary_words = pools_[0].summary_words();
    for (std::size_t sw = 0; sw < summary_words; ++sw) {
        std::uint64_t candidates = s0[sw] & s1[sw] & s2[sw] & s3[sw] & s4[sw];
        while (candidates != 0) {
            const std::size_t w = sw * 64 + static_cast<std::size_t>(std::countr_zero(candidates));
            const std::uint64_t hit = b0[w] & b1[w] & b2[w] & b3[w] & b4[w];
            if (hit != 0) {
                return w * 64 + static_cast<std::size_t>(std::countr_zero(hit));
            }
            candidates &= candidates - 1;
        }
    }
    return std::nullopt;
}

std::vector<std::size_t> LpmAclTables::field_matches(AclField field, std::uint32_t value) const {
    const auto& pool = pools_[static_cast<std::size_t>(field)];
    const std::uint64_t* bits = pool.bits(bitset_index(field, value));
    std::vector<std::size_t> out;
    for (std::size_t w = 0; w < pool.words(); ++w) {
        for (std::uint64_t b = bits[w]; b != 0; b &= b - 1) {
            out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(b)));
        }
    }
    return out;
}

std::size_t LpmAclTables::memory_bytes() const noexcept {
    std::size_t bytes = src_.memory_bytes() + dst_.memory_bytes() + sport_.memory_bytes() +
                        dport_.memory_bytes() + sizeof(proto_);
    for (const auto& p : pools_) {
        bytes += p.memory_bytes();
    }
    return bytes;
}

} // namespace netsieve
