#pragma once

// Epoch-driven load simulation around the balancer: generate a sensor
// topology, perturb its loads each epoch, rebalance against the previous
// assignment and log how many sensors had to change controller.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netsieve/balancer.hpp"

namespace netsieve {

struct TopologyParams {
    std::size_t sensors = 1;
    double density = 0.0; // fraction of all sensor pairs that are linked
    Load sensor_load_lo = 1;
    Load sensor_load_hi = 10;
    Load link_load_lo = 1;
    Load link_load_hi = 10;
    std::uint64_t seed = 0;
};

/// Random spanning tree plus extra links up to the requested density. A
/// density below what the tree already needs is raised to it. Sensor ids are
/// 0..n-1.
SensorGraph generate_topology(const TopologyParams& params);

enum class LoadKind : std::uint8_t { Constant, RandomWalk, Spike };

struct LoadModel {
    LoadKind kind = LoadKind::Constant;
    Load step = 0;            // random walk: each load moves by up to +-step
    Load spike_magnitude = 0; // spike: added to a sensor's load
    double spike_probability = 0.0;
    std::uint64_t seed = 0;
};

/// Pure in (graph, model, epoch). Loads never go below zero.
SensorGraph evolve_loads(const SensorGraph& graph, const LoadModel& model, std::uint64_t epoch);

/// FNV-1a over the graph's text form.
std::uint64_t graph_digest(const SensorGraph& graph);

struct EpochRecord {
    std::uint64_t epoch = 0;
    std::uint64_t digest = 0;
    bool feasible = false;
    std::string error;
    /// The assignment in force after the epoch: the new plan, or the
    /// previous one when balancing failed (absent if there never was one).
    std::optional<AssignmentPlan> plan;
    std::size_t migrations = 0;
    double max_utilization = 0.0;
};

struct EpisodeLog {
    std::vector<EpochRecord> epochs;
};

struct EpisodeOptions {
    BalanceOptions balance;
    /// Comparison baseline, not part of the balancing method: every epoch is
    /// balanced without knowledge of the previous assignment, and migrations
    /// are counted against it afterwards.
    bool from_scratch = false;
};

/// Random-walk loads accumulate from epoch to epoch; spikes are transient and
/// always applied to the starting loads; constant leaves them alone.
EpisodeLog run_episode(const SensorGraph& graph, const ControllerSet& controllers, const LoadModel& model,
                       std::size_t epochs, const CurrentAssignment& initial = {},
                       const EpisodeOptions& options = {});

/// One JSON object per epoch, newline separated.
std::string episode_jsonl(const SensorGraph& graph, const EpisodeLog& log);
/// epoch,migrations,max_utilization,feasible
std::string episode_csv(const EpisodeLog& log);

} // namespace netsieve
