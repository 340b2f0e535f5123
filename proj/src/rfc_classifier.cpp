#include "netsieve/rfc_classifier.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <map>
#include <sstream>
#include <unordered_map>

namespace netsieve {

std::string_view to_string(RfcChunk c) noexcept {
    switch (c) {
    case RfcChunk::SrcHi: return "src_hi";
    case RfcChunk::SrcLo: return "src_lo";
    case RfcChunk::DstHi: return "dst_hi";
    case RfcChunk::DstLo: return "dst_lo";
    case RfcChunk::Sport: return "sport";
    case RfcChunk::Dport: return "dport";
    case RfcChunk::Proto: return "proto";
    }
    return "?";
}

RfcTree RfcTree::standard() {
    RfcTree t;
    t.phases.push_back({{0, 1}, {2, 3}, {4, 5, 6}});
    t.phases.push_back({{0, 1, 2}});
    return t;
}

void RfcTree::validate() const {
    std::size_t upstream = kRfcChunkCount;
    for (const auto& phase : phases) {
        std::vector<int> used(upstream, 0);
        for (const auto& node : phase) {
            if (node.size() < 2 || node.size() > 3) {
                throw std::invalid_argument("reduction node must combine 2 or 3 tables");
            }
            for (std::size_t in : node) {
                if (in >= upstream || used[in]++ != 0) {
                    throw std::invalid_argument("reduction input out of range or reused");
                }
            }
        }
        if (std::count(used.begin(), used.end(), 0) != 0) {
            throw std::invalid_argument("reduction phase leaves an upstream table unused");
        }
        upstream = phase.size();
    }
    if (upstream != 1) {
        throw std::invalid_argument("reduction tree must end in a single table");
    }
}

namespace {

// The set of 16-bit chunk values one rule field accepts.
struct ChunkSet {
    bool is_range = false;
    std::uint16_t a = 0; // range lo, or fixed bits of a mask
    std::uint16_t b = 0; // range hi, or wildcard bits of a mask

    bool full() const noexcept { return is_range ? (a == 0 && b == 0xffff) : b == 0xffff; }
    bool contains(std::uint16_t v) const noexcept {
        return is_range ? (a <= v && v <= b) : static_cast<std::uint16_t>(v & ~b) == a;
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        if (is_range) {
            for (std::uint32_t v = a; v <= b; ++v) {
                fn(static_cast<std::uint16_t>(v));
            }
            return;
        }
        std::uint16_t sub = 0;
        do {
            fn(static_cast<std::uint16_t>(a | sub));
            sub = static_cast<std::uint16_t>((sub - b) & b);
        } while (sub != 0);
    }
    auto key() const noexcept { return std::tuple(is_range, a, b); }
};

ChunkSet chunk_set(const AclRule& r, RfcChunk c) {
    auto mask = [](std::uint32_t addr, std::uint32_t wc, int shift) {
        return ChunkSet{false, static_cast<std::uint16_t>(addr >> shift), static_cast<std::uint16_t>(wc >> shift)};
    };
    switch (c) {
    case RfcChunk::SrcHi: return mask(r.src.address, r.src.wildcard, 16);
    case RfcChunk::SrcLo: return mask(r.src.address, r.src.wildcard, 0);
    case RfcChunk::DstHi: return mask(r.dst.address, r.dst.wildcard, 16);
    case RfcChunk::DstLo: return mask(r.dst.address, r.dst.wildcard, 0);
    case RfcChunk::Sport: return {true, r.sport.lo, r.sport.hi};
    case RfcChunk::Dport: return {true, r.dport.lo, r.dport.hi};
    case RfcChunk::Proto:
        return r.proto.value ? ChunkSet{true, *r.proto.value, *r.proto.value} : ChunkSet{true, 0, 0xffff};
    }
    return {};
}

// Deduplicates rule bitsets and hands out dense class ids.
class BitsetPool {
public:
    BitsetPool(std::size_t words, std::size_t limit, std::string_view what)
        : words_(words), limit_(limit), what_(what) {}

    std::uint32_t intern(const std::uint64_t* bits) {
        const std::uint64_t h = hash(bits);
        auto [lo, hi] = index_.equal_range(h);
        for (auto it = lo; it != hi; ++it) {
            if (words_ == 0 || std::memcmp(at(it->second), bits, words_ * sizeof(std::uint64_t)) == 0) {
                return it->second;
            }
        }
        const std::uint32_t id = static_cast<std::uint32_t>(count_);
        if (++count_ > limit_) {
            throw RfcCapacityError(std::string(what_) + ": equivalence classes exceed " + std::to_string(limit_));
        }
        data_.insert(data_.end(), bits, bits + words_);
        index_.emplace(h, id);
        return id;
    }

    const std::uint64_t* at(std::size_t id) const noexcept { return data_.data() + id * words_; }
    std::size_t size() const noexcept { return count_; }

private:
    std::uint64_t hash(const std::uint64_t* bits) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        for (std::size_t i = 0; i < words_; ++i) {
            h ^= bits[i] + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return h;
    }

    std::size_t words_;
    std::size_t limit_;
    std::string_view what_;
    std::size_t count_ = 0;
    std::vector<std::uint64_t> data_;
    std::unordered_multimap<std::uint64_t, std::uint32_t> index_;
};

struct BuiltTable {
    RfcChunkTable table;
    BitsetPool classes;
};

BuiltTable build_phase0(const RuleSet& rules, RfcChunk chunk, std::size_t words, const RfcOptions& opt) {
    constexpr std::size_t kValues = 1u << 16;
    std::vector<ChunkSet> per_rule;
    per_rule.reserve(rules.size());
    std::map<std::tuple<bool, std::uint16_t, std::uint16_t>, ChunkSet> distinct;
    for (const auto& r : rules) {
        per_rule.push_back(chunk_set(r, chunk));
        if (!per_rule.back().full()) {
            distinct.emplace(per_rule.back().key(), per_rule.back());
        }
    }

    // Partition refinement: after processing every distinct set, two values
    // share a class iff they belong to exactly the same sets.
    std::vector<std::uint32_t> cls(kValues, 0);
    std::vector<std::uint32_t> size{static_cast<std::uint32_t>(kValues)};
    std::vector<std::uint32_t> hits{0};
    std::vector<std::uint32_t> remap{UINT32_MAX};
    std::vector<std::uint32_t> touched;
    for (const auto& [k, set] : distinct) {
        set.for_each([&](std::uint16_t v) {
            if (hits[cls[v]]++ == 0) {
                touched.push_back(cls[v]);
            }
        });
        set.for_each([&](std::uint16_t v) {
            const std::uint32_t c = cls[v];
            if (hits[c] == size[c]) {
                return;
            }
            if (remap[c] == UINT32_MAX) {
                remap[c] = static_cast<std::uint32_t>(size.size());
                size.push_back(0);
                hits.push_back(0);
                remap.push_back(UINT32_MAX);
            }
            cls[v] = remap[c];
            ++size[remap[c]];
        });
        for (std::uint32_t c : touched) {
            if (remap[c] != UINT32_MAX) {
                size[c] -= size[remap[c]];
            }
            hits[c] = 0;
            remap[c] = UINT32_MAX;
        }
        touched.clear();
    }

    BuiltTable out{{}, BitsetPool(words, opt.max_classes, to_string(chunk))};
    out.table.phase = 0;
    out.table.inputs = {static_cast<std::size_t>(chunk)};
    out.table.strides = {1};
    out.table.entries.resize(kValues);
    std::vector<std::uint32_t> canonical(size.size(), UINT32_MAX);
    std::vector<std::uint64_t> bits(words);
    for (std::size_t v = 0; v < kValues; ++v) {
        std::uint32_t& c = canonical[cls[v]];
        if (c == UINT32_MAX) {
            std::fill(bits.begin(), bits.end(), 0);
            for (std::size_t r = 0; r < per_rule.size(); ++r) {
                if (per_rule[r].contains(static_cast<std::uint16_t>(v))) {
                    bits[r / 64] |= std::uint64_t{1} << (r % 64);
                }
            }
            c = out.classes.intern(bits.data());
        }
        out.table.entries[v] = c;
    }
    out.table.classes = static_cast<std::uint32_t>(out.classes.size());
    return out;
}

BuiltTable combine(std::vector<const BuiltTable*> inputs, std::size_t phase,
                   std::vector<std::size_t> input_ids, std::size_t words, const RfcOptions& opt) {
    std::size_t entries = 1;
    for (const auto* in : inputs) {
        entries *= in->table.classes;
        if (entries > opt.max_table_entries) {
            throw RfcCapacityError("phase " + std::to_string(phase) + " table needs more than " +
                                   std::to_string(opt.max_table_entries) + " entries");
        }
    }
    std::vector<std::uint64_t> bits(words);
    auto intersect = [&](const std::uint64_t* x, const std::uint64_t* y) {
        for (std::size_t w = 0; w < words; ++w) {
            bits[w] = x[w] & y[w];
        }
        return bits.data();
    };

    BuiltTable out{{}, BitsetPool(words, opt.max_classes, "combine")};
    out.table.phase = phase;
    out.table.inputs = std::move(input_ids);
    out.table.entries.resize(entries);

    const std::size_t na = inputs[0]->table.classes;
    const std::size_t nb = inputs[1]->table.classes;
    if (inputs.size() == 2) {
        out.table.strides = {nb, 1};
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t b = 0; b < nb; ++b) {
                out.table.entries[a * nb + b] =
                    out.classes.intern(intersect(inputs[0]->classes.at(a), inputs[1]->classes.at(b)));
            }
        }
    } else {
        // Intern the pairwise intersections first so the third input is only
        // combined with distinct partial results.
        const std::size_t nc = inputs[2]->table.classes;
        out.table.strides = {nb * nc, nc, 1};
        BitsetPool partial(words, SIZE_MAX, "partial");
        std::vector<std::uint32_t> ab(na * nb);
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t b = 0; b < nb; ++b) {
                ab[a * nb + b] = partial.intern(intersect(inputs[0]->classes.at(a), inputs[1]->classes.at(b)));
            }
        }
        std::vector<std::uint32_t> abc(partial.size() * nc);
        for (std::size_t p = 0; p < partial.size(); ++p) {
            for (std::size_t c = 0; c < nc; ++c) {
                abc[p * nc + c] = out.classes.intern(intersect(partial.at(p), inputs[2]->classes.at(c)));
            }
        }
        for (std::size_t i = 0; i < na * nb; ++i) {
            std::copy_n(abc.begin() + static_cast<std::ptrdiff_t>(ab[i] * nc), nc,
                        out.table.entries.begin() + static_cast<std::ptrdiff_t>(i * nc));
        }
    }
    out.table.classes = static_cast<std::uint32_t>(out.classes.size());
    return out;
}

} // namespace

std::size_t RfcTables::memory_bytes() const noexcept {
    std::size_t bytes = final_.size() * sizeof(std::optional<RuleId>);
    for (const auto& phase : phases_) {
        for (const auto& t : phase) {
            bytes += t.entries.size() * sizeof(std::uint32_t);
        }
    }
    return bytes;
}

std::uint32_t RfcTables::final_class(const FiveTupleKey& key) const noexcept {
    std::array<std::uint32_t, kRfcChunkCount> cur{};
    std::array<std::uint32_t, kRfcChunkCount> next{};
    const auto& p0 = phases_[0];
    for (std::size_t i = 0; i < p0.size(); ++i) {
        cur[i] = p0[i].entries[chunk_value(key, static_cast<RfcChunk>(p0[i].inputs[0]))];
    }
    for (std::size_t p = 1; p < phases_.size(); ++p) {
        const auto& phase = phases_[p];
        for (std::size_t j = 0; j < phase.size(); ++j) {
            const RfcChunkTable& t = phase[j];
            std::size_t idx = 0;
            for (std::size_t k = 0; k < t.inputs.size(); ++k) {
                idx += cur[t.inputs[k]] * t.strides[k];
            }
            next[j] = t.entries[idx];
        }
        cur = next;
    }
    return cur[0];
}

std::string RfcTables::report_csv() const {
    std::ostringstream out;
    out << "phase,table,inputs,entries,classes,bytes\n";
    std::size_t tables = 0;
    for (const auto& phase : phases_) {
        for (std::size_t j = 0; j < phase.size(); ++j) {
            const auto& t = phase[j];
            out << t.phase << ',' << j << ',';
            if (t.phase == 0) {
                out << to_string(static_cast<RfcChunk>(t.inputs[0]));
            } else {
                for (std::size_t k = 0; k < t.inputs.size(); ++k) {
                    out << (k ? "+" : "") << t.inputs[k];
                }
            }
            out << ',' << t.entries.size() << ',' << t.classes << ','
                << t.entries.size() * sizeof(std::uint32_t) << '\n';
            ++tables;
        }
    }
    out << "final,0,class->rule," << final_.size() << ',' << final_.size() << ','
        << final_.size() * sizeof(std::optional<RuleId>) << '\n';
    out << "# rules=" << rule_count_ << " phases=" << phases_.size() << " tables=" << tables + 1
        << " accesses_per_lookup=" << accesses_ << " total_bytes=" << memory_bytes() << '\n';
    return out.str();
}

RfcTables rfc_build(const RuleSet& rules, const RfcOptions& options) {
    options.tree.validate();
    const std::size_t words = (rules.size() + 63) / 64;

    std::vector<BuiltTable> level;
    level.reserve(kRfcChunkCount);
    for (std::size_t c = 0; c < kRfcChunkCount; ++c) {
        level.push_back(build_phase0(rules, static_cast<RfcChunk>(c), words, options));
    }

    RfcTables out;
    out.rule_count_ = rules.size();
    auto keep = [&out](std::vector<BuiltTable>& built) {
        std::vector<RfcChunkTable> tables;
        for (auto& b : built) {
            tables.push_back(b.table);
        }
        out.phases_.push_back(std::move(tables));
    };
    keep(level);

    for (std::size_t p = 0; p < options.tree.phases.size(); ++p) {
        std::vector<BuiltTable> next;
        for (const auto& node : options.tree.phases[p]) {
            std::vector<const BuiltTable*> in;
            for (std::size_t i : node) {
                in.push_back(&level[i]);
            }
            next.push_back(combine(in, p + 1, node, words, options));
        }
        level = std::move(next);
        keep(level);
    }

    const BitsetPool& last = level.front().classes;
    out.final_.resize(last.size());
    for (std::size_t c = 0; c < last.size(); ++c) {
        const std::uint64_t* bits = last.at(c);
        for (std::size_t w = 0; w < words; ++w) {
            if (bits[w] != 0) {
                out.final_[c] = rules[w * 64 + static_cast<std::size_t>(std::countr_zero(bits[w]))].id;
                break;
            }
        }
    }

    unsigned tables = 1;
    for (const auto& phase : out.phases_) {
        tables += static_cast<unsigned>(phase.size());
    }
    out.accesses_ = tables;
    return out;
}

} // namespace netsieve
