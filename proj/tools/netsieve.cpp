// netsieve command-line front end.
//
// Exit status: 0 success, 1 infeasible balance or oracle disagreement,
// 2 bad input (unreadable file, parse error, invalid flag).

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "netsieve/balancer.hpp"
#include "netsieve/bench.hpp"
#include "netsieve/lpm_acl.hpp"
#include "netsieve/lpm_dir24.hpp"
#include "netsieve/rfc_classifier.hpp"
#include "netsieve/rule_model.hpp"
#include "netsieve/simulator.hpp"
#include "netsieve/workload.hpp"

using namespace netsieve;

namespace {

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write " + path);
    }
    out << text;
}

std::string id_cell(std::optional<RuleId> id) { return id ? std::to_string(*id) : "-"; }

void require_csv(const std::string& format) {
    if (format != "csv") {
        throw InputError("unsupported --format '" + format + "'");
    }
}

std::vector<ClassifierKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<ClassifierKind> out;
    for (const auto& n : names) {
        const auto k = parse_classifier_kind(n);
        if (!k) {
            throw InputError("unknown --algo '" + n + "'");
        }
        out.push_back(*k);
    }
    return out;
}

struct ClassifyArgs {
    std::string rules, keys, algo = "lpm-acl", out, format = "csv";
};

int run_classify(const ClassifyArgs& a) {
    require_csv(a.format);
    const RuleSet rules = parse_rules(read_file(a.rules));
    const auto keys = parse_keys(read_file(a.keys));
    const auto kind = parse_classifier_kind(a.algo);
    std::vector<std::optional<RuleId>> ids;
    ids.reserve(keys.size());
    if (kind == ClassifierKind::Linear) {
        for (const auto& k : keys) {
            ids.push_back(classify_linear(rules, k));
        }
    } else if (kind == ClassifierKind::Rfc) {
        const RfcTables t = rfc_build(rules);
        for (const auto& k : keys) {
            ids.push_back(rfc_classify(t, k).id);
        }
    } else if (kind == ClassifierKind::LpmAcl) {
        const LpmAclTables t = acl_build(rules);
        for (const auto& k : keys) {
            ids.push_back(acl_classify(t, k));
        }
    } else {
        throw InputError("classify supports --algo linear, rfc or lpm-acl");
    }
    std::map<RuleId, const AclRule*> by_id;
    for (const auto& r : rules) {
        by_id[r.id] = &r;
    }
    std::string out = "key,proto,src,dst,sport,dport,rule,action\n";
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto& k = keys[i];
        out += std::to_string(i) + "," + std::to_string(k.proto) + "," + format_ipv4(k.src) + "," +
               format_ipv4(k.dst) + "," + std::to_string(k.sport) + "," + std::to_string(k.dport) + "," +
               id_cell(ids[i]) + "," + (ids[i] ? std::string(to_string(by_id.at(*ids[i])->action)) : "-") + "\n";
    }
    emit(a.out, out);
    return 0;
}

struct RouteArgs {
    std::string routes, addrs, out, format = "csv";
    std::size_t max_blocks = std::size_t{1} << 16;
};

int run_route(const RouteArgs& a) {
    require_csv(a.format);
    const auto routes = parse_routes(read_file(a.routes));
    const auto addrs = parse_addresses(read_file(a.addrs));
    Dir24Tables t(a.max_blocks);
    for (const auto& r : routes) {
        lpm_add(t, r.prefix, r.id);
    }
    std::string out = "addr,id,accesses\n";
    for (std::uint32_t addr : addrs) {
        const auto r = lpm_lookup(t, addr);
        out += format_ipv4(addr) + "," + id_cell(r.id) + "," + std::to_string(r.accesses) + "\n";
    }
    emit(a.out, out);
    return 0;
}

struct BenchArgs {
    std::vector<std::string> algos;
    std::vector<std::size_t> rules;
    std::size_t keys = 65536;
    unsigned threads = 1;
    double warmup = 0.1;
    double measure = 0.5;
    std::size_t min_lookups = 1'000'000;
    std::uint64_t seed = 1;
    bool mask_timing = false;
    std::string out, format = "csv";
};

BenchConfig to_config(const BenchArgs& a) {
    BenchConfig c;
    if (!a.algos.empty()) {
        c.kinds = parse_kinds(a.algos);
    }
    if (!a.rules.empty()) {
        c.rule_counts = a.rules;
    }
    c.keys = a.keys;
    c.threads = a.threads;
    c.warmup_seconds = a.warmup;
    c.measure_seconds = a.measure;
    c.min_lookups = a.min_lookups;
    c.seed = a.seed;
    c.validate();
    return c;
}

struct BalanceArgs {
    std::string topology, out, summary, strategy = "min-load", format = "text";
};

RemovalOrder parse_strategy(const std::string& s) {
    if (s == "min-load") {
        return RemovalOrder::MinLoadFirst;
    }
    if (s == "max-load") {
        return RemovalOrder::MaxLoadFirst;
    }
    throw InputError("unknown --strategy '" + s + "'");
}

int run_balance(const BalanceArgs& a) {
    const Topology t = parse_topology(read_file(a.topology));
    const auto plan = balance(t.graph, t.controllers, t.current, {parse_strategy(a.strategy)});
    if (a.format == "csv") {
        emit(a.out, plan_summary_csv(plan));
    } else if (a.format == "text") {
        emit(a.out, format_plan(t.graph, plan));
    } else {
        throw InputError("unsupported --format '" + a.format + "'");
    }
    if (!a.summary.empty()) {
        emit(a.summary, plan_summary_csv(plan));
    }
    return 0;
}

struct SimulateArgs {
    std::string topology, out, csv, model = "constant", strategy = "min-load", format = "jsonl";
    std::size_t sensors = 0, controllers = 4, epochs = 10;
    double density = 0.2;
    Load load_lo = 1, load_hi = 10, capacity = 100;
    Load step = 1, spike = 10;
    double spike_probability = 0.1;
    std::uint64_t seed = 1;
    bool baseline = false;
};

int run_simulate(const SimulateArgs& a) {
    Topology t;
    if (!a.topology.empty()) {
        t = parse_topology(read_file(a.topology));
    } else if (a.sensors > 0) {
        t.graph = generate_topology({a.sensors, a.density, a.load_lo, a.load_hi, a.load_lo, a.load_hi, a.seed});
        for (ControllerId c = 0; c < a.controllers; ++c) {
            t.controllers.controllers.push_back({c, a.capacity});
        }
        t.controllers.validate();
    } else {
        throw InputError("simulate needs --topology or --sensors");
    }
    LoadModel m;
    if (a.model == "constant") {
        m.kind = LoadKind::Constant;
    } else if (a.model == "walk") {
        m.kind = LoadKind::RandomWalk;
    } else if (a.model == "spike") {
        m.kind = LoadKind::Spike;
    } else {
        throw InputError("unknown --model '" + a.model + "'");
    }
    m.step = a.step;
    m.spike_magnitude = a.spike;
    m.spike_probability = a.spike_probability;
    m.seed = a.seed;
    EpisodeOptions opt;
    opt.balance.order = parse_strategy(a.strategy);
    opt.from_scratch = a.baseline;
    const auto log = run_episode(t.graph, t.controllers, m, a.epochs, t.current, opt);
    if (a.format == "jsonl") {
        emit(a.out, episode_jsonl(t.graph, log));
    } else if (a.format == "csv") {
        emit(a.out, episode_csv(log));
    } else {
        throw InputError("unsupported --format '" + a.format + "'");
    }
    if (!a.csv.empty()) {
        emit(a.csv, episode_csv(log));
    }
    return 0;
}

struct GenerateArgs {
    std::string what, rules_file, routes_file, out;
    std::size_t count = 100;
    std::uint64_t seed = 1;
    double density = 0.2;
    std::size_t controllers = 4;
    Load capacity = 100, load_lo = 1, load_hi = 10;
};

int run_generate(const GenerateArgs& a) {
    std::string out;
    if (a.what == "rules") {
        out = serialize_rules(synthetic_rules(a.count, a.seed));
    } else if (a.what == "keys") {
        const RuleSet rules = a.rules_file.empty() ? RuleSet{} : parse_rules(read_file(a.rules_file));
        for (const auto& k : synthetic_keys(rules, a.count, a.seed)) {
            out += format_key(k) + "\n";
        }
    } else if (a.what == "routes") {
        for (const auto& r : synthetic_routes(a.count, a.seed)) {
            out += format_prefix(r.prefix) + " " + std::to_string(r.id) + "\n";
        }
    } else if (a.what == "addrs") {
        const auto routes = a.routes_file.empty() ? std::vector<Route>{} : parse_routes(read_file(a.routes_file));
        for (std::uint32_t addr : synthetic_addresses(routes, a.count, a.seed)) {
            out += format_ipv4(addr) + "\n";
        }
    } else if (a.what == "topology") {
        Topology t;
        t.graph = generate_topology({a.count, a.density, a.load_lo, a.load_hi, a.load_lo, a.load_hi, a.seed});
        for (ControllerId c = 0; c < a.controllers; ++c) {
            t.controllers.controllers.push_back({c, a.capacity});
        }
        out = serialize_topology(t);
    } else {
        throw InputError("generate: unknown kind '" + a.what + "'");
    }
    emit(a.out, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Packet classification and controller load balancing toolkit"};
    app.require_subcommand(1);

    ClassifyArgs ca;
    auto* classify = app.add_subcommand("classify", "Classify a key file against a rule file");
    classify->add_option("--rules", ca.rules, "rule file")->required();
    classify->add_option("--keys", ca.keys, "key file")->required();
    classify->add_option("--algo", ca.algo, "linear | rfc | lpm-acl");
    classify->add_option("--out", ca.out, "output CSV (default stdout)");
    classify->add_option("--format", ca.format, "csv");

    RouteArgs ra;
    auto* route = app.add_subcommand("route", "Longest-prefix lookup of addresses in a route file");
    route->add_option("--routes", ra.routes, "route file")->required();
    route->add_option("--addrs", ra.addrs, "address file")->required();
    route->add_option("--out", ra.out, "output CSV (default stdout)");
    route->add_option("--max-blocks", ra.max_blocks, "extension block pool size");
    route->add_option("--format", ra.format, "csv");

    BenchArgs ba;
    auto add_bench_flags = [&](CLI::App* sub) {
        sub->add_option("--algo", ba.algos, "linear, rfc, lpm-acl, lpm-route")->delimiter(',');
        sub->add_option("--rules", ba.rules, "rule counts")->delimiter(',');
        sub->add_option("--keys", ba.keys, "distinct keys per run");
        sub->add_option("--threads", ba.threads, "reader threads");
        sub->add_option("--warmup", ba.warmup, "warmup seconds");
        sub->add_option("--measure", ba.measure, "minimum measured seconds");
        sub->add_option("--min-lookups", ba.min_lookups, "minimum measured lookups");
        sub->add_option("--seed", ba.seed, "workload seed");
        sub->add_flag("--mask-timing", ba.mask_timing, "write measured columns as '-'");
        sub->add_option("--out", ba.out, "output CSV (default stdout)");
        sub->add_option("--format", ba.format, "csv");
    };
    auto* bench = app.add_subcommand("bench", "Throughput per classifier and rule count");
    add_bench_flags(bench);
    auto* scaling = app.add_subcommand("scaling", "Latency against rule count");
    add_bench_flags(scaling);

    std::string report_rules;
    std::size_t report_synthetic = 0;
    std::uint64_t report_seed = 1;
    std::string report_out;
    auto* report = app.add_subcommand("rfc-report", "Per-table class counts and memory of an RFC build");
    report->add_option("--rules", report_rules, "rule file");
    report->add_option("--synthetic", report_synthetic, "generate this many rules instead");
    report->add_option("--seed", report_seed, "seed for --synthetic");
    report->add_option("--out", report_out, "output CSV (default stdout)");

    BalanceArgs bl;
    auto* bal = app.add_subcommand("balance", "Partition sensors and assign controllers");
    bal->add_option("--topology", bl.topology, "topology file")->required();
    bal->add_option("--out", bl.out, "plan file (default stdout)");
    bal->add_option("--summary", bl.summary, "also write groups,migrations,max_group_load here");
    bal->add_option("--strategy", bl.strategy, "min-load | max-load");
    bal->add_option("--format", bl.format, "text | csv");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Rebalance over epochs of changing load");
    sim->add_option("--topology", sa.topology, "topology file");
    sim->add_option("--sensors", sa.sensors, "generate a topology of this many sensors");
    sim->add_option("--density", sa.density, "generated link density");
    sim->add_option("--controllers", sa.controllers, "generated controller count");
    sim->add_option("--capacity", sa.capacity, "generated controller capacity");
    sim->add_option("--load-min", sa.load_lo, "generated minimum load");
    sim->add_option("--load-max", sa.load_hi, "generated maximum load");
    sim->add_option("--model", sa.model, "constant | walk | spike");
    sim->add_option("--step", sa.step, "random-walk step");
    sim->add_option("--spike", sa.spike, "spike magnitude");
    sim->add_option("--spike-probability", sa.spike_probability, "per-sensor spike probability");
    sim->add_option("--epochs", sa.epochs, "epochs to run");
    sim->add_option("--seed", sa.seed, "topology and load seed");
    sim->add_option("--strategy", sa.strategy, "min-load | max-load");
    sim->add_flag("--baseline", sa.baseline, "rebalance from scratch each epoch (comparison only)");
    sim->add_option("--out", sa.out, "episode log (default stdout)");
    sim->add_option("--csv", sa.csv, "also write the per-epoch CSV summary here");
    sim->add_option("--format", sa.format, "jsonl | csv");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Write seeded synthetic input files");
    gen->add_option("kind", ga.what, "rules | keys | routes | addrs | topology")->required();
    gen->add_option("--count", ga.count, "items to generate");
    gen->add_option("--seed", ga.seed, "seed");
    gen->add_option("--rules", ga.rules_file, "rule file keys are drawn from");
    gen->add_option("--routes", ga.routes_file, "route file addresses are drawn from");
    gen->add_option("--density", ga.density, "topology link density");
    gen->add_option("--controllers", ga.controllers, "topology controller count");
    gen->add_option("--capacity", ga.capacity, "topology controller capacity");
    gen->add_option("--load-min", ga.load_lo, "topology minimum load");
    gen->add_option("--load-max", ga.load_hi, "topology maximum load");
    gen->add_option("--out", ga.out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*classify) {
            return run_classify(ca);
        }
        if (*route) {
            return run_route(ra);
        }
        if (*bench || *scaling) {
            require_csv(ba.format);
            const BenchConfig cfg = to_config(ba);
            if (*bench) {
                emit(ba.out, bench_csv(bench_throughput(cfg), ba.mask_timing));
            } else {
                emit(ba.out, scaling_csv(scaling_curve(cfg), ba.mask_timing));
            }
            return 0;
        }
        if (*report) {
            const RuleSet rules = report_rules.empty() ? synthetic_rules(report_synthetic, report_seed)
                                                       : parse_rules(read_file(report_rules));
            emit(report_out, rfc_build(rules).report_csv());
            return 0;
        }
        if (*bal) {
            return run_balance(bl);
        }
        if (*sim) {
            return run_simulate(sa);
        }
        if (*gen) {
            return run_generate(ga);
        }
    } catch (const BalanceInfeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 1;
    } catch (const OracleMismatch& e) {
        std::cerr << "oracle mismatch: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        // capacity ceilings and similar: the input is too large for the structure
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
