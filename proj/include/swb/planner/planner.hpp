#pragma once

#include <cstdint>
#include <vector>

#include "swb/engine/engine.hpp"
#include "swb/model/model.hpp"
#include "swb/world/env.hpp"

namespace swb::planner {

struct PlannerConfig {
  /// Simulated steps per rollout; 0 turns the planner into a uniform random policy.
  int depth = 1;
  int total_rollouts = 900;
  double gamma = 1.0;
  engine::ExecPolicy exec = engine::ExecPolicy::kParallel;

  void validate() const;
};

struct ActionScores {
  std::vector<double> mean;      // per action
  std::vector<double> variance;  // per action, of one rollout's return
  int rollouts_per_action = 0;
  int simulated_futures = 0;
};

/// Game reward the model expects for `action` in an imagined scene: +1 / -1
/// per active, invisible file on the selected leaf edge by color class.
double particle_reward(const model::Particle<double>& p, const world::GameAction& action,
                       const world::LaneGeometry& geo, int palette_size);

/// Monte Carlo estimate of each first action's discounted return. Rollout j
/// of every action shares its start particle and simulated future, since the
/// game's actions do not change the world.
ActionScores score_actions(const model::Belief<double>& belief, const model::Model<double>& m,
                           const PlannerConfig& cfg, std::uint64_t seed);

/// Argmax of the action scores, lowest index on ties.
world::GameAction plan_action(const model::Belief<double>& belief, const model::Model<double>& m,
                              const PlannerConfig& cfg, std::uint64_t seed);

}  // namespace swb::planner
