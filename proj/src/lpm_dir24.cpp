#include "netsieve/lpm_dir24.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <string>

namespace netsieve {

template <unsigned KeyBits, unsigned FirstBits>
void TwoLevelLpm<KeyBits, FirstBits>::check(std::uint32_t key, unsigned length) const {
    if (length > KeyBits) {
        throw std::invalid_argument("prefix length " + std::to_string(length) + " exceeds " +
                                    std::to_string(KeyBits));
    }
    if (KeyBits < 32 && (std::uint64_t{key} >> KeyBits) != 0) {
        throw std::invalid_argument("key " + std::to_string(key) + " wider than " +
                                    std::to_string(KeyBits) + " bits");
    }
    if ((key & ~mask_of(length)) != 0) {
        throw std::invalid_argument("prefix has host bits set");
    }
}

template <unsigned KeyBits, unsigned FirstBits>
std::optional<std::pair<std::uint32_t, unsigned>>
TwoLevelLpm<KeyBits, FirstBits>::covering_below(std::uint32_t key, unsigned length) const {
    for (unsigned len = length; len-- > 0;) {
        auto it = live_.find(live_key(key & mask_of(len), len));
        if (it != live_.end()) {
            return std::pair{it->second, len};
        }
    }
    return std::nullopt;
}

template <unsigned KeyBits, unsigned FirstBits>
std::uint32_t TwoLevelLpm<KeyBits, FirstBits>::allocate_block() {
    std::uint32_t block = 0;
    if (!free_blocks_.empty()) {
        block = free_blocks_.back();
        free_blocks_.pop_back();
    } else {
        block = static_cast<std::uint32_t>(second_.size() / kBlockSize);
        second_.resize(second_.size() + kBlockSize, 0);
        second_depth_.resize(second_depth_.size() + kBlockSize, 0);
    }
    ++blocks_in_use_;
    return block;
}

template <unsigned KeyBits, unsigned FirstBits>
void TwoLevelLpm<KeyBits, FirstBits>::add(std::uint32_t key, unsigned length, std::uint32_t id) {
    check(key, length);
    if (id > kMaxId) {
        throw std::invalid_argument("id " + std::to_string(id) + " exceeds the 24-bit payload");
    }
    const std::uint32_t word = kValidBit | id;
    const auto depth = static_cast<std::uint8_t>(length);

    if (length <= FirstBits) {
        const std::size_t start = key >> kSecondBits;
        const std::size_t count = std::size_t{1} << (FirstBits - length);
        for (std::size_t slot = start; slot < start + count; ++slot) {
            const std::uint32_t e = first_[slot];
            if ((e & kExtBit) == 0) {
                if ((e & kValidBit) == 0 || first_depth_[slot] <= depth) {
                    first_[slot] = word;
                    first_depth_[slot] = depth;
                }
                continue;
            }
            const std::size_t base = (e & kPayloadMask) * kBlockSize;
            for (std::size_t i = base; i < base + kBlockSize; ++i) {
                if ((second_[i] & kValidBit) == 0 || second_depth_[i] <= depth) {
                    second_[i] = word;
                    second_depth_[i] = depth;
                }
            }
        }
        live_[live_key(key, length)] = id;
        return;
    }

    const std::uint32_t slot = key >> kSecondBits;
    std::uint32_t e = first_[slot];
    if ((e & kExtBit) == 0) {
        if (blocks_in_use_ >= max_blocks_) {
            throw Tbl8Exhausted("second-level pool exhausted (" + std::to_string(max_blocks_) + " blocks)");
        }
        const std::uint32_t block = allocate_block();
        // Back-fill with whatever the first level held so every slot of the
        // block answers with the covering shorter prefix.
        const std::size_t base = std::size_t{block} * kBlockSize;
        std::fill_n(second_.begin() + static_cast<std::ptrdiff_t>(base), kBlockSize, e);
        std::fill_n(second_depth_.begin() + static_cast<std::ptrdiff_t>(base), kBlockSize,
                    (e & kValidBit) != 0 ? first_depth_[slot] : std::uint8_t{0});
        e = kValidBit | kExtBit | block;
        first_[slot] = e;
    }
    const std::size_t base = (e & kPayloadMask) * kBlockSize;
    const std::size_t start = base + (key & (kBlockSize - 1));
    const std::size_t count = std::size_t{1} << (KeyBits - length);
    for (std::size_t i = start; i < start + count; ++i) {
        if ((second_[i] & kValidBit) == 0 || second_depth_[i] <= depth) {
            second_[i] = word;
            second_depth_[i] = depth;
        }
    }
    if (live_.insert_or_assign(live_key(key, length), id).second) {
        ++long_count_[slot];
    }
}

template <unsigned KeyBits, unsigned FirstBits>
void TwoLevelLpm<KeyBits, FirstBits>::remove(std::uint32_t key, unsigned length) {
    check(key, length);
    auto it = live_.find(live_key(key, length));
    if (it == live_.end()) {
        throw PrefixNotFound("prefix of length " + std::to_string(length) + " not present");
    }
    live_.erase(it);
    const auto depth = static_cast<std::uint8_t>(length);

    // Every slot this prefix won reverts to the longest remaining prefix that
    // covers it; that prefix is necessarily shorter and covers the whole range.
    const auto cover = covering_below(key, length);
    const std::uint32_t word = cover ? (kValidBit | cover->first) : 0u;
    const auto cover_depth = static_cast<std::uint8_t>(cover ? cover->second : 0u);

    auto revert = [&](std::uint32_t& entry, std::uint8_t& d) {
        if ((entry & kValidBit) != 0 && d == depth) {
            entry = word;
            d = cover_depth;
        }
    };

    if (length <= FirstBits) {
        const std::size_t start = key >> kSecondBits;
        const std::size_t count = std::size_t{1} << (FirstBits - length);
        for (std::size_t slot = start; slot < start + count; ++slot) {
            const std::uint32_t e = first_[slot];
            if ((e & kExtBit) == 0) {
                revert(first_[slot], first_depth_[slot]);
                continue;
            }
            const std::size_t base = (e & kPayloadMask) * kBlockSize;
            for (std::size_t i = base; i < base + kBlockSize; ++i) {
                revert(second_[i], second_depth_[i]);
            }
        }
        return;
    }

    const std::uint32_t slot = key >> kSecondBits;
    const std::uint32_t block = first_[slot] & kPayloadMask;
    const std::size_t base = std::size_t{block} * kBlockSize;
    const std::size_t start = base + (key & (kBlockSize - 1));
    const std::size_t count = std::size_t{1} << (KeyBits - length);
    for (std::size_t i = start; i < start + count; ++i) {
        revert(second_[i], second_depth_[i]);
    }
    auto lc = long_count_.find(slot);
    if (--lc->second == 0) {
        long_count_.erase(lc);
        // Only the shorter covering prefix is left; every entry of the block
        // now holds the same value, so fold it back into the first level.
        first_[slot] = second_[base];
        first_depth_[slot] = second_depth_[base];
        free_blocks_.push_back(block);
        --blocks_in_use_;
    }
}

template class TwoLevelLpm<32, 24>;
template class TwoLevelLpm<16, 8>;

namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        out.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    if (auto hash = s.find('#'); hash != std::string_view::npos) {
        s = s.substr(0, hash);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())) != 0) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())) != 0) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace

std::vector<Route> parse_routes(std::string_view text) {
    std::vector<Route> routes;
    const auto lines = lines_of(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const std::string_view line = trim(lines[n]);
        if (line.empty()) {
            continue;
        }
        const auto sp = line.find_first_of(" \t");
        if (sp == std::string_view::npos) {
            throw ParseError(n + 1, "expected '<ip>/<len> <id>'");
        }
        Route r;
        try {
            r.prefix = parse_prefix(line.substr(0, sp));
        } catch (const std::invalid_argument& e) {
            throw ParseError(n + 1, e.what());
        }
        const std::string_view id = trim(line.substr(sp + 1));
        auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), r.id);
        if (ec != std::errc{} || ptr != id.data() + id.size() || r.id > Dir24Tables::kMaxId) {
            throw ParseError(n + 1, "bad route id '" + std::string(id) + "'");
        }
        routes.push_back(r);
    }
    return routes;
}

std::vector<std::uint32_t> parse_addresses(std::string_view text) {
    std::vector<std::uint32_t> addrs;
    const auto lines = lines_of(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const std::string_view line = trim(lines[n]);
        if (line.empty()) {
            continue;
        }
        const auto a = parse_ipv4(line);
        if (!a) {
            throw ParseError(n + 1, "bad address '" + std::string(line) + "'");
        }
        addrs.push_back(*a);
    }
    return addrs;
}

RouteTableHandle::RouteTableHandle(std::size_t max_blocks)
    : current_(std::make_shared<const Dir24Tables>(max_blocks)) {}

std::shared_ptr<const Dir24Tables> RouteTableHandle::snapshot() const {
    std::lock_guard lock(ptr_mutex_);
    return current_;
}

} // namespace netsieve
