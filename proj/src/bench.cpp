#include "netsieve/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <thread>

#include "netsieve/lpm_acl.hpp"
#include "netsieve/rfc_classifier.hpp"

namespace netsieve {

std::string_view to_string(ClassifierKind k) noexcept {
    switch (k) {
    case ClassifierKind::Linear: return "linear";
    case ClassifierKind::Rfc: return "rfc";
    case ClassifierKind::LpmAcl: return "lpm-acl";
    case ClassifierKind::LpmRoute: return "lpm-route";
    }
    return "?";
}

std::optional<ClassifierKind> parse_classifier_kind(std::string_view s) noexcept {
    for (auto k : {ClassifierKind::Linear, ClassifierKind::Rfc, ClassifierKind::LpmAcl, ClassifierKind::LpmRoute}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

void BenchConfig::validate() const {
    if (kinds.empty() || rule_counts.empty()) {
        throw std::invalid_argument("nothing to benchmark");
    }
    if (threads < 1) {
        throw std::invalid_argument("threads must be at least 1");
    }
    if (!(warmup_seconds > 0.0) || !(measure_seconds > 0.0)) {
        throw std::invalid_argument("warmup and measure durations must be positive");
    }
    if (keys < 64) {
        throw std::invalid_argument("need at least 64 keys");
    }
    for (std::size_t n : rule_counts) {
        if (n == 0) {
            throw std::invalid_argument("rule count must be positive");
        }
    }
}

namespace {

using Clock = std::chrono::steady_clock;
constexpr std::size_t kBatch = 64;
constexpr std::uint32_t kNoMatch = 0xffffffffu;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// One classifier instance reduced to "key index -> result id" so the timing
// loop is shared. Lookup is a template parameter so the call inlines.
template <typename Lookup>
struct Subject {
    Lookup lookup;
    std::function<std::uint32_t(std::size_t)> reference;
    std::size_t key_count = 0;
    double accesses = -1.0;
    std::size_t memory = 0;
};

template <typename Lookup>
Subject<Lookup> subject(Lookup f, std::function<std::uint32_t(std::size_t)> ref, std::size_t keys) {
    return Subject<Lookup>{std::move(f), std::move(ref), keys};
}

std::uint32_t id_or_miss(std::optional<RuleId> r) { return r ? *r : kNoMatch; }

struct ThreadStats {
    std::size_t lookups = 0;
    std::vector<double> batch_ns;
    std::uint32_t sink = 0;
};

template <typename S>
ThreadStats measure(const S& s, std::size_t offset, double min_seconds, std::size_t min_lookups) {
    ThreadStats st;
    st.batch_ns.reserve(min_lookups / kBatch + 1024);
    std::size_t i = offset % s.key_count;
    const auto t0 = Clock::now();
    while (st.lookups < min_lookups || seconds_since(t0) < min_seconds) {
        const auto b0 = Clock::now();
        std::uint32_t acc = 0;
        for (std::size_t k = 0; k < kBatch; ++k) {
            acc += s.lookup(i);
            if (++i == s.key_count) {
                i = 0;
            }
        }
        const auto b1 = Clock::now();
        st.sink += acc;
        st.lookups += kBatch;
        st.batch_ns.push_back(std::chrono::duration<double, std::nano>(b1 - b0).count() / kBatch);
    }
    return st;
}

double percentile(std::vector<double>& v, double q) {
    if (v.empty()) {
        return 0.0;
    }
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

template <typename S>
BenchRow run_subject(const BenchConfig& cfg, ClassifierKind kind, std::size_t rules, const S& s) {
    BenchRow row;
    row.kind = kind;
    row.rules = rules;
    row.threads = cfg.threads;
    row.accesses_per_lookup = s.accesses;
    row.memory_bytes = s.memory;

    // Warmup: one full pass (checksum plus a 1% oracle sample), then spin
    // until the warmup time is used up.
    const auto w0 = Clock::now();
    for (std::size_t i = 0; i < s.key_count; ++i) {
        const std::uint32_t got = s.lookup(i);
        row.checksum = row.checksum * 1099511628211ULL + got;
        if (i % 100 == 0) {
            const std::uint32_t want = s.reference(i);
            ++row.oracle_checked;
            if (got != want) {
                throw OracleMismatch(std::string(to_string(kind)) + " with " + std::to_string(rules) +
                                     " rules disagrees with the reference on key " + std::to_string(i));
            }
        }
    }
    std::uint32_t sink = 0;
    for (std::size_t i = 0; seconds_since(w0) < cfg.warmup_seconds; i = (i + 1) % s.key_count) {
        sink += s.lookup(i);
    }

    const std::size_t per_thread = (cfg.min_lookups + cfg.threads - 1) / cfg.threads;
    std::vector<ThreadStats> stats(cfg.threads);
    const auto t0 = Clock::now();
    if (cfg.threads == 1) {
        stats[0] = measure(s, 0, cfg.measure_seconds, per_thread);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < cfg.threads; ++t) {
            pool.emplace_back([&, t] {
                stats[t] = measure(s, t * s.key_count / cfg.threads, cfg.measure_seconds, per_thread);
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    row.seconds = seconds_since(t0);

    std::vector<double> samples;
    double busy_ns = 0.0;
    for (auto& st : stats) {
        row.lookups += st.lookups;
        sink += st.sink;
        for (double ns : st.batch_ns) {
            busy_ns += ns * kBatch;
        }
        samples.insert(samples.end(), st.batch_ns.begin(), st.batch_ns.end());
    }
    row.lookups_per_second = static_cast<double>(row.lookups) / row.seconds;
    row.per_thread_lookups_per_second = row.lookups_per_second / cfg.threads;
    row.mean_ns = busy_ns / static_cast<double>(row.lookups);
    row.p50_ns = percentile(samples, 0.50);
    row.p99_ns = percentile(samples, 0.99);
    // keep the lookups observable
    if (sink == 0x5eed5eedu) {
        std::fputs("", stderr);
    }
    return row;
}

std::uint32_t brute_force_route(const std::vector<Route>& routes, std::uint32_t addr) {
    std::uint32_t best = kNoMatch;
    int best_len = -1;
    for (const auto& r : routes) {
        if (r.prefix.contains(addr) && static_cast<int>(r.prefix.length()) > best_len) {
            best_len = static_cast<int>(r.prefix.length());
            best = r.id;
        }
    }
    return best;
}

BenchRow bench_one(const BenchConfig& cfg, ClassifierKind kind, std::size_t n) {
    const std::uint64_t rule_seed = cfg.seed * 1000003ULL + n;
    const std::uint64_t key_seed = rule_seed ^ 0xabcdefULL;

    if (kind == ClassifierKind::LpmRoute) {
        const auto routes = synthetic_routes(n, rule_seed, cfg.shape.long_prefix_fraction);
        const auto addrs = synthetic_addresses(routes, cfg.keys, key_seed);
        auto table = std::make_shared<Dir24Tables>(std::size_t{1} << 16);
        for (const auto& r : routes) {
            lpm_add(*table, r.prefix, r.id);
        }
        auto s = subject([&addrs, t = table.get()](std::size_t i) { return t->lookup(addrs[i]).id.value_or(kNoMatch); },
                         [&](std::size_t i) { return brute_force_route(routes, addrs[i]); }, addrs.size());
        std::size_t reads = 0;
        for (std::uint32_t a : addrs) {
            reads += table->lookup(a).accesses;
        }
        s.accesses = static_cast<double>(reads) / static_cast<double>(addrs.size());
        s.memory = table->memory_bytes();
        return run_subject(cfg, kind, n, s);
    }

    const RuleSet rules = synthetic_rules(n, rule_seed, cfg.shape);
    const auto keys = synthetic_keys(rules, cfg.keys, key_seed);
    auto reference = [&](std::size_t i) { return id_or_miss(classify_linear(rules, keys[i])); };
    switch (kind) {
    case ClassifierKind::Linear: {
        auto s = subject(reference, reference, keys.size());
        s.memory = rules.size() * sizeof(AclRule);
        return run_subject(cfg, kind, n, s);
    }
    case ClassifierKind::Rfc: {
        const RfcTables t = rfc_build(rules);
        auto s = subject([&](std::size_t i) { return id_or_miss(t.classify(keys[i]).id); }, reference, keys.size());
        s.accesses = t.accesses_per_lookup();
        s.memory = t.memory_bytes();
        return run_subject(cfg, kind, n, s);
    }
    case ClassifierKind::LpmAcl: {
        const LpmAclTables t = acl_build(rules);
        auto s = subject([&](std::size_t i) { return id_or_miss(t.classify(keys[i])); }, reference, keys.size());
        s.memory = t.memory_bytes();
        return run_subject(cfg, kind, n, s);
    }
    case ClassifierKind::LpmRoute: break;
    }
    throw std::logic_error("unhandled classifier kind");
}

std::string fmt(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string config_header(const char* what, const BenchConfig& c) {
    std::string kinds;
    for (auto k : c.kinds) {
        kinds += (kinds.empty() ? "" : "+") + std::string(to_string(k));
    }
    std::string counts;
    for (auto n : c.rule_counts) {
        counts += (counts.empty() ? "" : "+") + std::to_string(n);
    }
    return std::string("# netsieve ") + what + " seed=" + std::to_string(c.seed) + " algo=" + kinds +
           " rules=" + counts + " keys=" + std::to_string(c.keys) + " threads=" + std::to_string(c.threads) +
           " warmup_s=" + fmt(c.warmup_seconds, 3) + " measure_s=" + fmt(c.measure_seconds, 3) +
           " min_lookups=" + std::to_string(c.min_lookups) + " batch=" + std::to_string(kBatch) + "\n";
}

std::string accesses_cell(double a) { return a < 0 ? "" : fmt(a, 4); }

} // namespace

BenchResult bench_throughput(const BenchConfig& config) {
    config.validate();
    BenchResult result;
    result.config = config;
    for (auto kind : config.kinds) {
        for (std::size_t n : config.rule_counts) {
            result.rows.push_back(bench_one(config, kind, n));
        }
    }
    return result;
}

BenchResult scaling_curve(const BenchConfig& config) {
    config.validate();
    const auto [lo, hi] = std::minmax_element(config.rule_counts.begin(), config.rule_counts.end());
    if (*hi < *lo * 100) {
        throw std::invalid_argument("scaling rule counts must span at least two decades");
    }
    BenchConfig sorted = config;
    std::sort(sorted.rule_counts.begin(), sorted.rule_counts.end());
    return bench_throughput(sorted);
}

std::string bench_csv(const BenchResult& r, bool mask_timing) {
    std::string out = config_header("bench", r.config);
    out += "algo,rules,threads,lookups,seconds,lookups_per_s,per_thread_lookups_per_s,mean_ns,p50_ns,p99_ns,"
           "accesses_per_lookup,memory_bytes,oracle_checked,checksum\n";
    for (const auto& row : r.rows) {
        auto t = [&](const std::string& s) { return mask_timing ? std::string("-") : s; };
        out += std::string(to_string(row.kind)) + "," + std::to_string(row.rules) + "," +
               std::to_string(row.threads) + "," + t(std::to_string(row.lookups)) + "," + t(fmt(row.seconds, 4)) +
               "," + t(fmt(row.lookups_per_second, 0)) + "," + t(fmt(row.per_thread_lookups_per_second, 0)) + "," +
               t(fmt(row.mean_ns, 2)) + "," + t(fmt(row.p50_ns, 2)) + "," + t(fmt(row.p99_ns, 2)) + "," +
               accesses_cell(row.accesses_per_lookup) + "," + std::to_string(row.memory_bytes) + "," +
               std::to_string(row.oracle_checked) + "," + std::to_string(row.checksum) + "\n";
    }
    return out;
}

std::string scaling_csv(const BenchResult& r, bool mask_timing) {
    std::string out = config_header("scaling", r.config);
    out += "algo,rules,mean_ns,p50_ns,p99_ns,accesses_per_lookup,memory_bytes\n";
    for (const auto& row : r.rows) {
        auto t = [&](double v) { return mask_timing ? std::string("-") : fmt(v, 2); };
        out += std::string(to_string(row.kind)) + "," + std::to_string(row.rules) + "," + t(row.mean_ns) + "," +
               t(row.p50_ns) + "," + t(row.p99_ns) + "," + accesses_cell(row.accesses_per_lookup) + "," +
               std::to_string(row.memory_bytes) + "\n";
    }
    // latency growth from the smallest to the largest rule count, per algo
    for (auto kind : r.config.kinds) {
        const BenchRow* first = nullptr;
        const BenchRow* last = nullptr;
        for (const auto& row : r.rows) {
            if (row.kind == kind) {
                first = first ? first : &row;
                last = &row;
            }
        }
        if (first && last && first != last) {
            out += "# " + std::string(to_string(kind)) + " latency_ratio_" + std::to_string(last->rules) + "_" +
                   std::to_string(first->rules) + "=" +
                   (mask_timing ? std::string("-") : fmt(last->mean_ns / first->mean_ns, 2)) + "\n";
        }
    }
    return out;
}

} // namespace netsieve
