#include "netsieve/balancer.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "netsieve/rule_model.hpp"

namespace netsieve {

void SensorGraph::add_sensor(SensorId id, Load load) {
    if (!index_.emplace(id, sensors_.size()).second) {
        throw std::invalid_argument("duplicate sensor " + std::to_string(id));
    }
    sensors_.push_back({id, load});
    incident_.emplace_back();
}

void SensorGraph::add_link(SensorId a, SensorId b, Load load) {
    if (a == b) {
        throw std::invalid_argument("self loop on sensor " + std::to_string(a));
    }
    if (a > b) {
        std::swap(a, b);
    }
    const auto ia = index_of(a);
    const auto ib = index_of(b);
    if (!ia || !ib) {
        throw std::invalid_argument("link " + std::to_string(a) + "-" + std::to_string(b) +
                                    " names an unknown sensor");
    }
    for (std::size_t l : incident_[*ia]) {
        if (links_[l].a == a && links_[l].b == b) {
            throw std::invalid_argument("duplicate link " + std::to_string(a) + "-" + std::to_string(b));
        }
    }
    incident_[*ia].push_back(links_.size());
    incident_[*ib].push_back(links_.size());
    link_ends_.emplace_back(*ia, *ib);
    links_.push_back({a, b, load});
}

std::optional<std::size_t> SensorGraph::index_of(SensorId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Load SensorGraph::total_sensor_load() const noexcept {
    Load t = 0;
    for (const auto& s : sensors_) {
        t += s.load;
    }
    return t;
}

bool SensorGraph::connected() const {
    if (sensors_.empty()) {
        return true;
    }
    std::vector<bool> seen(sensors_.size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        for (std::size_t l : incident_[x]) {
            const std::size_t y = link_ends_[l].first == x ? link_ends_[l].second : link_ends_[l].first;
            if (!seen[y]) {
                seen[y] = true;
                ++count;
                stack.push_back(y);
            }
        }
    }
    return count == sensors_.size();
}

void ControllerSet::validate() const {
    if (controllers.empty()) {
        throw std::invalid_argument("no controllers");
    }
    std::set<ControllerId> ids;
    for (const auto& c : controllers) {
        if (c.capacity == 0) {
            throw std::invalid_argument("controller " + std::to_string(c.id) + " has zero capacity");
        }
        if (!ids.insert(c.id).second) {
            throw std::invalid_argument("duplicate controller " + std::to_string(c.id));
        }
    }
}

Load ControllerSet::max_capacity() const noexcept {
    Load m = 0;
    for (const auto& c : controllers) {
        m = std::max(m, c.capacity);
    }
    return m;
}

Load ControllerSet::total_capacity() const noexcept {
    Load t = 0;
    for (const auto& c : controllers) {
        t += c.capacity;
    }
    return t;
}

Load LoadLedger::adjusted_total() const noexcept {
    return std::accumulate(adjusted.begin(), adjusted.end(), Load{0});
}

Load LoadLedger::buffered_total() const noexcept {
    return std::accumulate(buffered.begin(), buffered.end(), Load{0});
}

std::vector<std::size_t> Partition::removed_links() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < ledger.removed.size(); ++l) {
        if (ledger.removed[l]) {
            out.push_back(l);
        }
    }
    return out;
}

namespace {

std::size_t other_end(const SensorGraph& g, std::size_t link, std::size_t x) {
    const std::size_t a = g.endpoint_index(link, false);
    return a == x ? g.endpoint_index(link, true) : a;
}

// Component id per node over links not marked removed; ids follow the
// smallest node index of each component.
std::vector<std::size_t> label_components(const SensorGraph& g, const std::vector<bool>& removed,
                                          std::size_t& count) {
    constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> comp(g.size(), kUnset);
    count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (comp[s] != kUnset) {
            continue;
        }
        comp[s] = count;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t x = stack.back();
            stack.pop_back();
            for (std::size_t l : g.incidence()[x]) {
                if (removed[l]) {
                    continue;
                }
                const std::size_t y = other_end(g, l, x);
                if (comp[y] == kUnset) {
                    comp[y] = count;
                    stack.push_back(y);
                }
            }
        }
        ++count;
    }
    return comp;
}

std::vector<std::size_t> reachable(const SensorGraph& g, const std::vector<bool>& removed, std::size_t from) {
    std::vector<bool> seen(g.size(), false);
    std::vector<std::size_t> out{from};
    seen[from] = true;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t l : g.incidence()[out[i]]) {
            if (removed[l]) {
                continue;
            }
            const std::size_t y = other_end(g, l, out[i]);
            if (!seen[y]) {
                seen[y] = true;
                out.push_back(y);
            }
        }
    }
    return out;
}

void record(BalanceTrace* trace, TraceStep::Kind kind, std::size_t link, bool changed, const LoadLedger& ledger) {
    if (trace == nullptr) {
        return;
    }
    trace->steps.push_back({kind, link, changed, ledger.adjusted, ledger.buffered, ledger.removed});
}

void release_buffers(const SensorGraph& g, LoadLedger& ledger, const std::vector<std::size_t>& nodes) {
    for (std::size_t x : nodes) {
        ledger.adjusted[x] += ledger.buffered[x];
        ledger.buffered[x] = 0;
        for (std::size_t l : g.incidence()[x]) {
            if (ledger.removed[l]) {
                ledger.half_in_buffer[l][g.endpoint_index(l, false) == x ? 0 : 1] = false;
            }
        }
    }
}

Partition make_partition(const SensorGraph& g, LoadLedger ledger) {
    std::size_t count = 0;
    const auto comp = label_components(g, ledger.removed, count);
    Partition p;
    p.groups.resize(count);
    p.group_load.assign(count, 0);
    for (std::size_t s = 0; s < g.size(); ++s) {
        p.groups[comp[s]].push_back(s);
        p.group_load[comp[s]] += ledger.adjusted[s];
    }
    p.ledger = std::move(ledger);
    return p;
}

bool lighter(const Link& x, const Link& y) {
    return std::tie(x.load, x.a, x.b) < std::tie(y.load, y.a, y.b);
}

} // namespace

Stage1Result stage1_prune(const SensorGraph& graph, Load threshold, RemovalOrder order, BalanceTrace* trace) {
    if (threshold == 0) {
        throw std::invalid_argument("threshold must be positive");
    }
    const Load limit = 2 * threshold;
    LoadLedger ledger;
    ledger.adjusted.resize(graph.size());
    for (std::size_t s = 0; s < graph.size(); ++s) {
        ledger.adjusted[s] = 2 * graph.sensors()[s].load;
    }
    ledger.buffered.assign(graph.size(), 0);
    ledger.removed.assign(graph.links().size(), false);
    ledger.half_in_buffer.assign(graph.links().size(), {false, false});

    Stage1Result result;
    for (;;) {
        std::size_t count = 0;
        const auto comp = label_components(graph, ledger.removed, count);
        std::vector<Load> load(count, 0);
        for (std::size_t s = 0; s < graph.size(); ++s) {
            load[comp[s]] += ledger.adjusted[s];
        }

        std::optional<std::size_t> pick;
        for (std::size_t l = 0; l < graph.links().size(); ++l) {
            if (ledger.removed[l] || load[comp[graph.endpoint_index(l, false)]] <= limit) {
                continue;
            }
            if (!pick) {
                pick = l;
                continue;
            }
            const Link& cand = graph.links()[l];
            const Link& best = graph.links()[*pick];
            const bool better = order == RemovalOrder::MinLoadFirst
                                    ? lighter(cand, best)
                                    : (cand.load > best.load || (cand.load == best.load && lighter(cand, best)));
            if (better) {
                pick = l;
            }
        }
        if (!pick) {
            // Nothing left to cut inside an overloaded group: either all fit
            // or an overloaded group is a lone sensor.
            for (std::size_t s = 0; s < graph.size(); ++s) {
                if (load[comp[s]] > limit) {
                    throw BalanceInfeasible("sensor " + std::to_string(graph.sensors()[s].id) + " load " +
                                            format_halves(load[comp[s]]) + " exceeds threshold " +
                                            std::to_string(threshold));
                }
            }
            break;
        }

        const std::size_t l = *pick;
        const std::size_t u = graph.endpoint_index(l, false);
        const std::size_t v = graph.endpoint_index(l, true);
        const Load w = graph.links()[l].load; // half of it, in halves
        ledger.removed[l] = true;
        result.removal_order.push_back(l);
        const auto side_u = reachable(graph, ledger.removed, u);
        const bool split = std::find(side_u.begin(), side_u.end(), v) == side_u.end();
        if (split) {
            ledger.adjusted[u] += w;
            ledger.adjusted[v] += w;
            ledger.half_in_buffer[l] = {false, false};
            release_buffers(graph, ledger, side_u);
            release_buffers(graph, ledger, reachable(graph, ledger.removed, v));
        } else {
            ledger.buffered[u] += w;
            ledger.buffered[v] += w;
            ledger.half_in_buffer[l] = {true, true};
        }
        record(trace, TraceStep::Kind::Remove, l, split, ledger);
    }
    result.partition = make_partition(graph, std::move(ledger));
    return result;
}

Stage2Result stage2_merge(const SensorGraph& graph, const Partition& pruned, Load threshold, BalanceTrace* trace) {
    const Load limit = 2 * threshold;
    LoadLedger ledger = pruned.ledger;

    // Union-find over the stage-1 groups; restoring only ever joins them.
    std::vector<std::size_t> parent(graph.size());
    std::vector<Load> load(graph.size(), 0);
    for (std::size_t gi = 0; gi < pruned.groups.size(); ++gi) {
        const std::size_t root = pruned.groups[gi].front();
        for (std::size_t s : pruned.groups[gi]) {
            parent[s] = root;
        }
        load[root] = pruned.group_load[gi];
    }
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    std::vector<std::size_t> candidates = pruned.removed_links();
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
        return lighter(graph.links()[x], graph.links()[y]);
    });

    Stage2Result result;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t l : candidates) {
            if (!ledger.removed[l]) {
                continue;
            }
            const std::size_t ends[2] = {graph.endpoint_index(l, false), graph.endpoint_index(l, true)};
            const Load w = graph.links()[l].load;
            Load credited = 0;
            for (int e = 0; e < 2; ++e) {
                if (!ledger.half_in_buffer[l][e]) {
                    credited += w;
                }
            }
            const std::size_t ru = find(ends[0]);
            const std::size_t rv = find(ends[1]);
            const bool joins = ru != rv;
            if (joins && load[ru] + load[rv] - credited > limit) {
                continue;
            }
            for (int e = 0; e < 2; ++e) {
                if (ledger.half_in_buffer[l][e]) {
                    ledger.buffered[ends[e]] -= w;
                } else {
                    ledger.adjusted[ends[e]] -= w;
                }
            }
            ledger.removed[l] = false;
            ledger.half_in_buffer[l] = {false, false};
            if (joins) {
                parent[rv] = ru;
                load[ru] += load[rv];
            }
            load[ru] -= credited;
            result.restored.push_back(l);
            changed = true;
            record(trace, TraceStep::Kind::Restore, l, joins, ledger);
        }
    }
    result.partition = make_partition(graph, std::move(ledger));
    return result;
}

std::string_view to_string(Role r) noexcept {
    switch (r) {
    case Role::Master: return "master";
    case Role::Slave: return "slave";
    case Role::Equal: return "equal";
    }
    return "?";
}

CurrentAssignment AssignmentPlan::as_current() const {
    CurrentAssignment out;
    for (const auto& g : groups) {
        for (SensorId s : g.sensors) {
            out[s] = g.controller;
        }
    }
    return out;
}

namespace {

// Square min-cost assignment (Hungarian method with potentials). Returns the
// column chosen for each row.
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<std::int64_t>>& cost) {
    const std::size_t n = cost.size();
    constexpr auto kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            std::int64_t delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const std::int64_t cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) {
        row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

} // namespace

AssignmentPlan stage3_assign(const SensorGraph& graph, const Partition& partition, const ControllerSet& controllers,
                             const CurrentAssignment& current) {
    controllers.validate();
    struct Candidate {
        std::vector<SensorId> sensors;
        Load load = 0;
    };
    std::vector<Candidate> groups;
    for (std::size_t gi = 0; gi < partition.groups.size(); ++gi) {
        Candidate c;
        for (std::size_t s : partition.groups[gi]) {
            c.sensors.push_back(graph.sensors()[s].id);
        }
        std::sort(c.sensors.begin(), c.sensors.end());
        c.load = partition.group_load[gi];
        groups.push_back(std::move(c));
    }
    std::sort(groups.begin(), groups.end(), [](const Candidate& x, const Candidate& y) {
        if (x.load != y.load) {
            return x.load > y.load;
        }
        return x.sensors.front() < y.sensors.front();
    });
    std::vector<Controller> ctl = controllers.controllers;
    std::sort(ctl.begin(), ctl.end(), [](const Controller& x, const Controller& y) {
        return x.capacity != y.capacity ? x.capacity > y.capacity : x.id < y.id;
    });
    if (groups.size() > ctl.size()) {
        throw BalanceInfeasible(std::to_string(groups.size()) + " groups but only " + std::to_string(ctl.size()) +
                                " controllers");
    }

    // Cost = migrations dominating a 0/1 rank-mismatch penalty; pairs that
    // overflow a controller are priced out of reach of any fitting matching.
    const std::size_t n = ctl.size();
    const auto big = static_cast<std::int64_t>(n + 1);
    const auto unreachable = static_cast<std::int64_t>(graph.size() + 1) * big * static_cast<std::int64_t>(n + 1);
    std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n, 0));
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        for (std::size_t ci = 0; ci < n; ++ci) {
            if (groups[gi].load > 2 * ctl[ci].capacity) {
                cost[gi][ci] = unreachable;
                continue;
            }
            std::int64_t moved = 0;
            for (SensorId s : groups[gi].sensors) {
                auto it = current.find(s);
                moved += it != current.end() && it->second != ctl[ci].id ? 1 : 0;
            }
            cost[gi][ci] = moved * big + (gi == ci ? 0 : 1);
        }
    }
    const auto col = min_cost_assignment(cost);

    AssignmentPlan plan;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        if (cost[gi][col[gi]] >= unreachable) {
            throw BalanceInfeasible("no controller assignment fits every group");
        }
        plan.groups.push_back({groups[gi].sensors, groups[gi].load, ctl[col[gi]].id});
    }
    derive_moves(plan, current);
    plan.removed_links = partition.removed_links();
    return plan;
}

void derive_moves(AssignmentPlan& plan, const CurrentAssignment& current) {
    plan.moves.clear();
    plan.role_changes.clear();
    plan.migrations = 0;
    for (const auto& g : plan.groups) {
        for (SensorId s : g.sensors) {
            auto it = current.find(s);
            if (it != current.end() && it->second == g.controller) {
                continue;
            }
            Migration m{s, std::nullopt, g.controller};
            plan.role_changes.push_back({s, g.controller, Role::Master});
            if (it != current.end()) {
                m.from = it->second;
                ++plan.migrations;
                plan.role_changes.push_back({s, it->second, Role::Slave});
            }
            plan.moves.push_back(m);
        }
    }
}

AssignmentPlan balance(const SensorGraph& graph, const ControllerSet& controllers, const CurrentAssignment& current,
                       const BalanceOptions& options) {
    controllers.validate();
    if (graph.total_sensor_load() > controllers.total_capacity()) {
        throw BalanceInfeasible("total sensor load " + std::to_string(graph.total_sensor_load()) +
                                " exceeds total capacity " + std::to_string(controllers.total_capacity()));
    }
    std::set<Load, std::greater<>> thresholds;
    for (const auto& c : controllers.controllers) {
        thresholds.insert(c.capacity);
    }
    std::string last_error;
    for (Load t : thresholds) {
        try {
            const auto s1 = stage1_prune(graph, t, options.order);
            const auto s2 = stage2_merge(graph, s1.partition, t);
            AssignmentPlan plan = stage3_assign(graph, s2.partition, controllers, current);
            plan.threshold = t;
            return plan;
        } catch (const BalanceInfeasible& e) {
            last_error = e.what();
        }
    }
    throw BalanceInfeasible(last_error);
}

namespace {

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
    }
    return value;
}

} // namespace

Topology parse_topology(std::string_view text) {
    Topology t;
    std::vector<std::pair<std::size_t, std::pair<SensorId, ControllerId>>> assigns;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) {
            raw.resize(hash);
        }
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string w; ls >> w;) {
            tok.push_back(w);
        }
        if (tok.empty()) {
            continue;
        }
        auto need = [&](std::size_t n) {
            if (tok.size() != n) {
                throw ParseError(line, "'" + tok[0] + "' takes " + std::to_string(n - 1) + " fields");
            }
        };
        try {
            if (tok[0] == "controller") {
                need(3);
                t.controllers.controllers.push_back(
                    {parse_number<ControllerId>(tok[1], line, "controller id"),
                     parse_number<Load>(tok[2], line, "capacity")});
            } else if (tok[0] == "sensor") {
                need(3);
                t.graph.add_sensor(parse_number<SensorId>(tok[1], line, "sensor id"),
                                   parse_number<Load>(tok[2], line, "load"));
            } else if (tok[0] == "link") {
                need(4);
                t.graph.add_link(parse_number<SensorId>(tok[1], line, "sensor id"),
                                 parse_number<SensorId>(tok[2], line, "sensor id"),
                                 parse_number<Load>(tok[3], line, "load"));
            } else if (tok[0] == "assign") {
                need(3);
                assigns.push_back({line,
                                   {parse_number<SensorId>(tok[1], line, "sensor id"),
                                    parse_number<ControllerId>(tok[2], line, "controller id")}});
            } else {
                throw ParseError(line, "unknown record '" + tok[0] + "'");
            }
        } catch (const std::invalid_argument& e) {
            throw ParseError(line, e.what());
        }
    }
    try {
        t.controllers.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, e.what());
    }
    for (const auto& [at, a] : assigns) {
        if (!t.graph.index_of(a.first)) {
            throw ParseError(at, "assignment names unknown sensor " + std::to_string(a.first));
        }
        const auto& cs = t.controllers.controllers;
        if (std::none_of(cs.begin(), cs.end(), [&](const Controller& c) { return c.id == a.second; })) {
            throw ParseError(at, "assignment names unknown controller " + std::to_string(a.second));
        }
        if (!t.current.emplace(a.first, a.second).second) {
            throw ParseError(at, "sensor " + std::to_string(a.first) + " assigned twice");
        }
    }
    return t;
}

std::string serialize_topology(const Topology& t) {
    std::ostringstream out;
    for (const auto& c : t.controllers.controllers) {
        out << "controller " << c.id << ' ' << c.capacity << '\n';
    }
    for (const auto& s : t.graph.sensors()) {
        out << "sensor " << s.id << ' ' << s.load << '\n';
    }
    for (const auto& l : t.graph.links()) {
        out << "link " << l.a << ' ' << l.b << ' ' << l.load << '\n';
    }
    for (const auto& [s, c] : t.current) {
        out << "assign " << s << ' ' << c << '\n';
    }
    return out.str();
}

std::string format_halves(Load halves) {
    return std::to_string(halves / 2) + (halves % 2 != 0 ? ".5" : "");
}

std::string format_plan(const SensorGraph& graph, const AssignmentPlan& plan) {
    std::ostringstream out;
    out << "threshold " << plan.threshold << '\n';
    for (const auto& g : plan.groups) {
        out << "group controller=" << g.controller << " load=" << format_halves(g.load_halves) << " sensors=";
        for (std::size_t i = 0; i < g.sensors.size(); ++i) {
            out << (i == 0 ? "" : ",") << g.sensors[i];
        }
        out << '\n';
    }
    for (std::size_t l : plan.removed_links) {
        const Link& k = graph.links()[l];
        out << "cut " << k.a << ' ' << k.b << ' ' << k.load << '\n';
    }
    for (const auto& m : plan.moves) {
        out << "move " << m.sensor << ' ' << (m.from ? std::to_string(*m.from) : "-") << ' ' << m.to << '\n';
    }
    for (const auto& r : plan.role_changes) {
        out << "role " << r.sensor << ' ' << r.controller << ' ' << to_string(r.role) << '\n';
    }
    out << "migrations " << plan.migrations << '\n';
    return out.str();
}

std::string plan_summary_csv(const AssignmentPlan& plan) {
    Load max_load = 0;
    for (const auto& g : plan.groups) {
        max_load = std::max(max_load, g.load_halves);
    }
    return "groups,migrations,max_group_load\n" + std::to_string(plan.groups.size()) + "," +
           std::to_string(plan.migrations) + "," + format_halves(max_load) + "\n";
}

} // namespace netsieve
