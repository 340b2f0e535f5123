#include "netsieve/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "json.hpp"

namespace netsieve {

namespace {

// Modulo draws rather than std distributions, whose output is not fixed by
// the standard, so logs match across standard libraries.
Load draw(std::mt19937_64& rng, Load lo, Load hi) {
    return lo + rng() % (hi - lo + 1);
}

double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, std::uint64_t epoch) {
    return std::mt19937_64(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
}

} // namespace

SensorGraph generate_topology(const TopologyParams& p) {
    if (p.sensors == 0) {
        throw std::invalid_argument("topology needs at least one sensor");
    }
    if (p.sensor_load_lo > p.sensor_load_hi || p.link_load_lo > p.link_load_hi) {
        throw std::invalid_argument("load range is empty");
    }
    std::mt19937_64 rng(p.seed);
    const std::size_t n = p.sensors;
    SensorGraph g;
    for (std::size_t i = 0; i < n; ++i) {
        g.add_sensor(static_cast<SensorId>(i), draw(rng, p.sensor_load_lo, p.sensor_load_hi));
    }
    std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t j = rng() % i;
        linked[i][j] = linked[j][i] = true;
        g.add_link(static_cast<SensorId>(j), static_cast<SensorId>(i), draw(rng, p.link_load_lo, p.link_load_hi));
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    const auto target = std::max<std::size_t>(n - 1, static_cast<std::size_t>(std::clamp(p.density, 0.0, 1.0) * pairs + 0.5));
    std::vector<std::pair<std::size_t, std::size_t>> spare;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!linked[a][b]) {
                spare.emplace_back(a, b);
            }
        }
    }
    for (std::size_t i = spare.size(); i > 1; --i) {
        std::swap(spare[i - 1], spare[rng() % i]);
    }
    const std::size_t extra = std::min(spare.size(), target - (n - 1));
    std::sort(spare.begin(), spare.begin() + static_cast<std::ptrdiff_t>(extra));
    for (std::size_t k = 0; k < extra; ++k) {
        g.add_link(static_cast<SensorId>(spare[k].first), static_cast<SensorId>(spare[k].second),
                   draw(rng, p.link_load_lo, p.link_load_hi));
    }
    return g;
}

SensorGraph evolve_loads(const SensorGraph& graph, const LoadModel& model, std::uint64_t epoch) {
    SensorGraph out = graph;
    auto rng = epoch_rng(model.seed, epoch);
    auto walk = [&](Load x) {
        if (model.step == 0) {
            return x;
        }
        const Load r = rng() % (2 * model.step + 1);
        return r >= model.step ? x + (r - model.step) : x - std::min(x, model.step - r);
    };
    switch (model.kind) {
    case LoadKind::Constant:
        break;
    case LoadKind::RandomWalk:
        for (std::size_t i = 0; i < out.sensors().size(); ++i) {
            out.set_sensor_load(i, walk(out.sensors()[i].load));
        }
        for (std::size_t l = 0; l < out.links().size(); ++l) {
            out.set_link_load(l, walk(out.links()[l].load));
        }
        break;
    case LoadKind::Spike:
        for (std::size_t i = 0; i < out.sensors().size(); ++i) {
            if (unit(rng) < model.spike_probability) {
                out.set_sensor_load(i, out.sensors()[i].load + model.spike_magnitude);
            }
        }
        break;
    }
    return out;
}

std::uint64_t graph_digest(const SensorGraph& graph) {
    Topology t;
    t.graph = graph;
    const std::string text = serialize_topology(t);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

double utilization(const AssignmentPlan& plan, const ControllerSet& cs) {
    double worst = 0.0;
    for (const auto& g : plan.groups) {
        for (const auto& c : cs.controllers) {
            if (c.id == g.controller) {
                worst = std::max(worst, static_cast<double>(g.load_halves) / (2.0 * static_cast<double>(c.capacity)));
            }
        }
    }
    return worst;
}

// The retained plan's groups re-priced at the new raw sensor loads.
AssignmentPlan reprice(const AssignmentPlan& plan, const SensorGraph& g) {
    AssignmentPlan out = plan;
    for (auto& grp : out.groups) {
        grp.load_halves = 0;
        for (SensorId s : grp.sensors) {
            grp.load_halves += 2 * g.sensors()[*g.index_of(s)].load;
        }
    }
    return out;
}

} // namespace

EpisodeLog run_episode(const SensorGraph& graph, const ControllerSet& controllers, const LoadModel& model,
                       std::size_t epochs, const CurrentAssignment& initial, const EpisodeOptions& options) {
    if (epochs == 0) {
        throw std::invalid_argument("episode needs at least one epoch");
    }
    EpisodeLog log;
    SensorGraph walked = graph;
    CurrentAssignment current = initial;
    std::optional<AssignmentPlan> in_force;
    for (std::uint64_t e = 1; e <= epochs; ++e) {
        const SensorGraph g = evolve_loads(model.kind == LoadKind::RandomWalk ? walked : graph, model, e);
        if (model.kind == LoadKind::RandomWalk) {
            walked = g;
        }
        EpochRecord rec;
        rec.epoch = e;
        rec.digest = graph_digest(g);
        try {
            AssignmentPlan plan = balance(g, controllers, options.from_scratch ? CurrentAssignment{} : current,
                                          options.balance);
            if (options.from_scratch) {
                derive_moves(plan, current);
            }
            rec.feasible = true;
            rec.migrations = plan.migrations;
            rec.max_utilization = utilization(plan, controllers);
            current = plan.as_current();
            in_force = plan;
            rec.plan = std::move(plan);
        } catch (const BalanceInfeasible& err) {
            rec.feasible = false;
            rec.error = err.what();
            if (in_force) {
                rec.plan = reprice(*in_force, g);
                rec.max_utilization = utilization(*rec.plan, controllers);
            }
        }
        log.epochs.push_back(std::move(rec));
    }
    return log;
}

std::string episode_jsonl(const SensorGraph& graph, const EpisodeLog& log) {
    std::string out;
    for (const auto& rec : log.epochs) {
        char digest[17];
        std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(rec.digest));
        nlohmann::ordered_json j;
        j["epoch"] = rec.epoch;
        j["digest"] = digest;
        j["feasible"] = rec.feasible;
        j["migrations"] = rec.migrations;
        j["max_utilization"] = rec.max_utilization;
        if (!rec.feasible) {
            j["error"] = rec.error;
        }
        if (rec.plan) {
            const auto& plan = *rec.plan;
            j["threshold"] = plan.threshold;
            auto groups = nlohmann::ordered_json::array();
            for (const auto& g : plan.groups) {
                nlohmann::ordered_json gj;
                gj["controller"] = g.controller;
                gj["load"] = format_halves(g.load_halves);
                gj["sensors"] = g.sensors;
                groups.push_back(gj);
            }
            j["groups"] = groups;
            auto cuts = nlohmann::ordered_json::array();
            for (std::size_t l : plan.removed_links) {
                cuts.push_back({graph.links()[l].a, graph.links()[l].b});
            }
            j["cut"] = cuts;
            if (rec.feasible) {
                auto moves = nlohmann::ordered_json::array();
                for (const auto& m : plan.moves) {
                    nlohmann::ordered_json mj;
                    mj["sensor"] = m.sensor;
                    mj["from"] = m.from ? nlohmann::ordered_json(*m.from) : nlohmann::ordered_json(nullptr);
                    mj["to"] = m.to;
                    moves.push_back(mj);
                }
                j["moves"] = moves;
            }
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string episode_csv(const EpisodeLog& log) {
    std::string out = "epoch,migrations,max_utilization,feasible\n";
    char buf[96];
    for (const auto& rec : log.epochs) {
        std::snprintf(buf, sizeof buf, "%llu,%zu,%.6f,%d\n", static_cast<unsigned long long>(rec.epoch),
                      rec.migrations, rec.max_utilization, rec.feasible ? 1 : 0);
        out += buf;
    }
    return out;
}

} // namespace netsieve
