#include "swb/planner/planner.hpp"

#include <cmath>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"

namespace swb::planner {

using world::GameAction;

namespace {
constexpr std::uint64_t kRandomPolicyTag = 0xA11;
constexpr std::uint64_t kFutureActionTag = 0xA12;
}  // namespace

void PlannerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("planner: " + msg); };
  if (depth < 0) fail("depth must be >= 0");
  if (total_rollouts < GameAction::kCount) fail("total_rollouts must be at least the number of actions");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
}

double particle_reward(const model::Particle<double>& p, const GameAction& action, const world::LaneGeometry& geo,
                       int palette_size) {
  if (action.is_noop()) return 0.0;
  double r = 0.0;
  for (const auto& f : p.files) {
    if (!f.active() || f.visible) continue;
    const auto edge = geo.leaf_edge(f.state.position.x, f.state.lane_phase);
    if (!edge || *edge != action.edge_index) continue;
    r += world::color_class(f.state.color, palette_size) == 0 ? 1.0 : -1.0;
  }
  return r;
}

ActionScores score_actions(const model::Belief<double>& belief, const model::Model<double>& m,
                           const PlannerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.depth < 1) throw ConfigError("planner: scoring needs depth >= 1");
  const int A = GameAction::kCount;
  const int per_action = cfg.total_rollouts / A;
  const auto rollouts = engine::rollout_prior(belief, cfg.depth, m, seed, per_action, cfg.exec);
  std::vector<std::vector<double>> ret(static_cast<std::size_t>(per_action), std::vector<double>(A, 0.0));
  const auto& geo = m.spec.geometry;
  auto run = [&](int j) {
    const auto& ro = rollouts[static_cast<std::size_t>(j)];
    for (int a = 0; a < A; ++a) {
      Rng rng = Rng::stream(seed, {kFutureActionTag, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(a)});
      double g = 0.0;
      double discount = 1.0;
      for (int d = 0; d < cfg.depth; ++d) {
        const GameAction act{d == 0 ? a : rng.uniform_int(0, A - 1)};
        g += discount * particle_reward(ro.states[static_cast<std::size_t>(d)], act, geo, m.spec.palette_size);
        discount *= cfg.gamma;
      }
      ret[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] = g;
    }
  };
  if (cfg.exec == engine::ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < per_action; ++j) run(j);
  } else {
    for (int j = 0; j < per_action; ++j) run(j);
  }
  ActionScores s;
  s.rollouts_per_action = per_action;
  s.simulated_futures = per_action * A;
  s.mean.assign(A, 0.0);
  s.variance.assign(A, 0.0);
  for (int a = 0; a < A; ++a) {
    double sum = 0.0, sq = 0.0;
    for (int j = 0; j < per_action; ++j) {
      const double g = ret[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
      sum += g;
      sq += g * g;
    }
    const double mean = sum / per_action;
    s.mean[static_cast<std::size_t>(a)] = mean;
    s.variance[static_cast<std::size_t>(a)] = per_action > 1 ? (sq - per_action * mean * mean) / (per_action - 1) : 0.0;
  }
  return s;
}

GameAction plan_action(const model::Belief<double>& belief, const model::Model<double>& m, const PlannerConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  if (cfg.depth == 0) {
    Rng rng = Rng::stream(seed, {kRandomPolicyTag});
    return GameAction{rng.uniform_int(0, GameAction::kCount - 1)};
  }
  const auto s = score_actions(belief, m, cfg, seed);
  int best = 0;
  for (int a = 1; a < GameAction::kCount; ++a) {
    if (s.mean[static_cast<std::size_t>(a)] > s.mean[static_cast<std::size_t>(best)]) best = a;
  }
  return GameAction{best};
}

}  // namespace swb::planner
