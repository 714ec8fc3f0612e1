#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "swb/core/rng.hpp"
#include "swb/core/vec2.hpp"
#include "swb/world/lane_geometry.hpp"

namespace swb::world {

struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// Branching-sprites environment settings. Speed is implied by the lane
/// geometry: one row of 1 / (levels * branch_interval) per step.
struct EnvConfig {
  int num_objects = 2;
  int levels = 3;
  int branch_interval = 10;
  int color_period = 5;
  int palette_size = 6;
  IntRange visible_range{15, 30};
  IntRange invisible_range{15, 20};
  int episode_length = 50;
  std::uint64_t seed = 0;

  LaneGeometry geometry() const { return {levels, branch_interval}; }
  double speed() const { return geometry().speed(); }
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// Game variant: invisibility drawn from [25, 40].
  static EnvConfig game();
  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct GroundTruthObject {
  int gt_id = 0;
  Vec2 position;
  Vec2 velocity;
  int color_index = 0;
  std::array<int, 2> color_pair{0, 0};
  bool visible = true;
  std::vector<int> branch_path;
  int lane_phase = 0;
  int visibility_timer = 0;

  int color() const { return color_pair[static_cast<std::size_t>(color_index)]; }
  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

/// 8 leaf edges plus a no-op.
struct GameAction {
  static constexpr int kNoOp = 8;
  static constexpr int kCount = 9;
  int edge_index = kNoOp;

  bool is_noop() const { return edge_index == kNoOp; }
  friend bool operator==(const GameAction&, const GameAction&) = default;
};

struct EnvState {
  EnvConfig config;
  int t = 0;
  std::vector<GroundTruthObject> objects;
  Rng rng{0};

  bool finished() const { return t >= config.episode_length - 1; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct EnvStep {
  EnvState state;
  std::vector<GroundTruthObject> objects;
  double reward = 0.0;
};

EnvState init_episode(const EnvConfig& config, std::uint64_t seed);

/// Advances every object by one step, then scores the action against the new
/// state. Throws ContractError when the episode is already finished.
EnvStep step_env(const EnvState& state, std::optional<GameAction> action);

/// Color class of a palette symbol: the lower half pays, the upper half costs.
int color_class(int symbol, int palette_size);

/// +1 / -1 per invisible object on the selected leaf edge, by color class.
double game_reward(const std::vector<GroundTruthObject>& objects, const GameAction& action,
                   const LaneGeometry& geometry, int palette_size);

}  // namespace swb::world
