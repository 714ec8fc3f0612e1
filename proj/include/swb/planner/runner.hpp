#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swb/engine/engine.hpp"
#include "swb/eval/metrics.hpp"
#include "swb/learning/optimize.hpp"
#include "swb/model/model.hpp"
#include "swb/model/params.hpp"
#include "swb/planner/planner.hpp"
#include "swb/world/detector.hpp"
#include "swb/world/env.hpp"
#include "swb/world/episode.hpp"

namespace swb::app {

/// Everything one run needs, as read from the JSON config document.
struct RunConfig {
  world::EnvConfig env;
  world::DetectorParams detector;
  engine::EngineConfig engine;
  model::ModelSpec spec;
  model::ModelParams params;
  planner::PlannerConfig planner;
  eval::EvalConfig eval;
  learning::TrainConfig train;
  int num_episodes = 1;
  /// generate mode: steps filtered before rolling out the rest of the episode.
  int condition_steps = 25;
  /// generate mode: futures simulated per particle.
  int samples_per_particle = 10;

  void validate() const;
};

/// Missing sections and keys keep their defaults. The model spec follows the
/// environment's geometry and palette. Throws ConfigError on bad input.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);

enum class Mode { kFilter, kGenerate, kPlan };

struct StepRecord {
  int t = 0;
  bool filtered = false;  // false for generated (unobserved) steps
  double log_sum_w = 0.0;
  double ess = 0.0;
  double kde = 0.0;
  std::optional<double> kde_invisible;  // only objects that are currently invisible
  eval::MotCounts mot;
  int action = -1;
  double reward = 0.0;
  int num_invisible = 0;
};

struct EpisodeReport {
  std::uint64_t seed = 0;
  Mode mode = Mode::kFilter;
  std::vector<StepRecord> steps;
  double total_reward = 0.0;
  double elbo = 0.0;  // over filtered steps
  eval::MotCounts mot_total;
  int simulated_futures_per_step = 0;  // plan mode
};

/// Seeds for the separate random consumers of one run.
struct RunSeeds {
  std::uint64_t env, engine, planner;
  static RunSeeds from(std::uint64_t seed);
};

/// Closed loop: simulate, detect, update the belief and, in plan mode, act.
/// When `trace` is given, one JSON line per step is written to it.
EpisodeReport run_episode(Mode mode, const RunConfig& cfg, std::uint64_t seed, std::ostream* trace = nullptr);

/// Filters a recorded episode and scores the belief against its ground truth.
EpisodeReport filter_recorded(const world::Episode& episode, const RunConfig& cfg, std::uint64_t seed,
                              std::ostream* trace = nullptr);

/// The ground truth as a single, certain particle.
model::Belief<double> oracle_belief(const std::vector<world::GroundTruthObject>& objects, int t, int num_files,
                                    const world::EnvConfig& env, const model::ModelSpec& spec);

nlohmann::json step_trace_json(const engine::StepTrace& trace, const model::Belief<double>& belief);

}  // namespace swb::app
