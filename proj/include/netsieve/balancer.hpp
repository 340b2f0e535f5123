#pragma once

// Sensor-to-controller balancing. Sensors form an undirected graph whose
// nodes carry a Packet-In rate and whose links carry an inter-sensor flow
// rate. The graph is cut into connected groups that each fit a controller,
// then groups are matched to controllers so that as few sensors as possible
// change controller.
//
// All loads are integers. Cutting a link credits half of its load to each
// endpoint, so internal bookkeeping runs in doubled units ("halves") to stay
// exact; a group load of 25 halves prints as 12.5.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace netsieve {

using SensorId = std::uint32_t;
using ControllerId = std::uint32_t;
using Load = std::uint64_t;

class BalanceInfeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Sensor {
    SensorId id = 0;
    Load load = 0;
    bool operator==(const Sensor&) const = default;
};

/// Endpoints are stored with a < b.
struct Link {
    SensorId a = 0;
    SensorId b = 0;
    Load load = 0;
    bool operator==(const Link&) const = default;
};

class SensorGraph {
public:
    /// Throws std::invalid_argument on a duplicate id.
    void add_sensor(SensorId id, Load load);
    /// Throws std::invalid_argument on self loops, unknown endpoints or a
    /// duplicate link.
    void add_link(SensorId a, SensorId b, Load load);

    void set_sensor_load(std::size_t index, Load load) { sensors_.at(index).load = load; }
    void set_link_load(std::size_t index, Load load) { links_.at(index).load = load; }

    const std::vector<Sensor>& sensors() const noexcept { return sensors_; }
    const std::vector<Link>& links() const noexcept { return links_; }
    std::size_t size() const noexcept { return sensors_.size(); }
    std::optional<std::size_t> index_of(SensorId id) const;
    /// Per node index, the indices of incident links.
    const std::vector<std::vector<std::size_t>>& incidence() const noexcept { return incident_; }
    std::size_t endpoint_index(std::size_t link, bool second) const {
        return second ? link_ends_[link].second : link_ends_[link].first;
    }

    Load total_sensor_load() const noexcept;
    bool connected() const;

    bool operator==(const SensorGraph& o) const { return sensors_ == o.sensors_ && links_ == o.links_; }

private:
    std::vector<Sensor> sensors_;
    std::vector<Link> links_;
    std::map<SensorId, std::size_t> index_;
    std::vector<std::vector<std::size_t>> incident_;
    std::vector<std::pair<std::size_t, std::size_t>> link_ends_;
};

struct Controller {
    ControllerId id = 0;
    Load capacity = 0;
    bool operator==(const Controller&) const = default;
};

struct ControllerSet {
    std::vector<Controller> controllers;
    /// Requires at least one controller, positive capacities and unique ids.
    void validate() const;
    Load max_capacity() const noexcept;
    Load total_capacity() const noexcept;
};

/// Previous sensor -> controller mapping. Sensors absent from it are new.
using CurrentAssignment = std::map<SensorId, ControllerId>;

/// Per node (by index): the adjusted load and the buffer of halves not yet
/// released, both in halves. Per removed link: whether each endpoint's half
/// currently sits in the buffer.
struct LoadLedger {
    std::vector<Load> adjusted;
    std::vector<Load> buffered;
    std::vector<bool> removed;
    std::vector<std::array<bool, 2>> half_in_buffer;

    Load adjusted_total() const noexcept;
    Load buffered_total() const noexcept;
};

struct Partition {
    /// Node indices per group, each sorted; groups ordered by smallest member.
    std::vector<std::vector<std::size_t>> groups;
    /// In halves, parallel to groups.
    std::vector<Load> group_load;
    LoadLedger ledger;

    std::vector<std::size_t> removed_links() const;
};

enum class RemovalOrder : std::uint8_t {
    MinLoadFirst, // cut the lightest link of an overloaded group first
    MaxLoadFirst, // the numbered-procedure variant, kept for comparison
};

struct TraceStep {
    enum class Kind : std::uint8_t { Remove, Restore };
    Kind kind = Kind::Remove;
    std::size_t link = 0;
    /// Remove: the cut split a group. Restore: the link joined two groups.
    bool changed_groups = false;
    std::vector<Load> adjusted; // ledger snapshot after the step
    std::vector<Load> buffered;
    std::vector<bool> removed;
};

struct BalanceTrace {
    std::vector<TraceStep> steps;
};

struct Stage1Result {
    Partition partition;
    std::vector<std::size_t> removal_order; // link indices
};

/// Threshold is in original units. Throws BalanceInfeasible when a single
/// sensor's adjusted load exceeds it.
Stage1Result stage1_prune(const SensorGraph& graph, Load threshold,
                          RemovalOrder order = RemovalOrder::MinLoadFirst, BalanceTrace* trace = nullptr);

struct Stage2Result {
    Partition partition;
    std::vector<std::size_t> restored; // link indices in restore order
};

Stage2Result stage2_merge(const SensorGraph& graph, const Partition& pruned, Load threshold,
                          BalanceTrace* trace = nullptr);

enum class Role : std::uint8_t { Master, Slave, Equal };
std::string_view to_string(Role r) noexcept;

struct RoleChange {
    SensorId sensor = 0;
    ControllerId controller = 0;
    Role role = Role::Master;
    bool operator==(const RoleChange&) const = default;
};

struct Migration {
    SensorId sensor = 0;
    std::optional<ControllerId> from; // empty for a sensor with no previous controller
    ControllerId to = 0;
    bool operator==(const Migration&) const = default;
};

struct PlannedGroup {
    std::vector<SensorId> sensors; // ascending
    Load load_halves = 0;
    ControllerId controller = 0;
    bool operator==(const PlannedGroup&) const = default;
};

struct AssignmentPlan {
    /// Ordered by load descending, then smallest sensor id.
    std::vector<PlannedGroup> groups;
    /// Sensors whose controller changes, plus first attachments of new sensors.
    std::vector<Migration> moves;
    /// For each move: new controller to Master, then old controller to Slave.
    std::vector<RoleChange> role_changes;
    /// Moves of sensors that had a previous controller.
    std::size_t migrations = 0;
    std::vector<std::size_t> removed_links;
    Load threshold = 0;

    CurrentAssignment as_current() const;
    bool operator==(const AssignmentPlan&) const = default;
};

/// Matches groups to controllers, one group per controller at most, every
/// group fitting its controller's capacity. Minimises migrations; among equal
/// minima prefers pairing the i-th heaviest group with the i-th largest
/// controller. Throws BalanceInfeasible when no fitting matching exists.
AssignmentPlan stage3_assign(const SensorGraph& graph, const Partition& partition,
                             const ControllerSet& controllers, const CurrentAssignment& current = {});

/// Recomputes moves, role changes and the migration count of a plan
/// relative to a previous assignment.
void derive_moves(AssignmentPlan& plan, const CurrentAssignment& current);

struct BalanceOptions {
    RemovalOrder order = RemovalOrder::MinLoadFirst;
};

/// Stages 1 and 2 run against the largest capacity; if stage 3 cannot place
/// the groups the threshold drops to the next smaller distinct capacity.
AssignmentPlan balance(const SensorGraph& graph, const ControllerSet& controllers,
                       const CurrentAssignment& current = {}, const BalanceOptions& options = {});

struct Topology {
    SensorGraph graph;
    ControllerSet controllers;
    CurrentAssignment current;
};

/// Line format, '#' comments:
///   controller <id> <capacity>
///   sensor <id> <load>
///   link <a> <b> <load>
///   assign <sensor> <controller>
Topology parse_topology(std::string_view text);
std::string serialize_topology(const Topology& t);

/// Half-unit load as decimal text: 25 -> "12.5".
std::string format_halves(Load halves);

std::string format_plan(const SensorGraph& graph, const AssignmentPlan& plan);
/// groups,migrations,max_group_load
std::string plan_summary_csv(const AssignmentPlan& plan);

} // namespace netsieve
