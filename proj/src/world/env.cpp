#include "swb/world/env.hpp"

#include <cmath>
#include <string>

#include "swb/core/error.hpp"

namespace swb::world {
namespace {

int draw(Rng& rng, const IntRange& r) { return rng.uniform_int(r.lo, r.hi); }

double wrap_unit(double d) {
  if (d < -0.5) return d + 1.0;
  if (d > 0.5) return d - 1.0;
  return d;
}

}  // namespace

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("env: " + msg); };
  if (num_objects < 1) fail("at least one object required");
  if (levels < 1 || levels > 10) fail("levels must be in [1, 10]");
  if (branch_interval < 1) fail("branch_interval must be >= 1");
  if (color_period < 1) fail("color_period must be >= 1");
  if (palette_size < 2 || palette_size % 2 != 0) fail("palette_size must be even and >= 2");
  if (visible_range.lo < 1 || visible_range.hi < visible_range.lo) fail("visible_range must be a nonempty range of positive integers");
  if (invisible_range.lo < 1 || invisible_range.hi < invisible_range.lo) fail("invisible_range must be a nonempty range of positive integers");
  if (episode_length < 1) fail("episode_length must be >= 1");
}

EnvConfig EnvConfig::game() {
  EnvConfig c;
  c.invisible_range = {25, 40};
  c.episode_length = 100;
  return c;
}

int color_class(int symbol, int palette_size) { return symbol < palette_size / 2 ? 0 : 1; }

EnvState init_episode(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  EnvState s;
  s.config = config;
  s.t = 0;
  s.rng = Rng(seed);
  const LaneGeometry geo = config.geometry();
  const int half = config.palette_size / 2;
  for (int i = 0; i < config.num_objects; ++i) {
    GroundTruthObject o;
    o.gt_id = i + 1;
    const int seg = s.rng.uniform_int(0, config.levels - 1);
    o.lane_phase = seg * config.branch_interval;
    for (int b = 0; b <= seg; ++b) o.branch_path.push_back(s.rng.uniform_int(0, 1));
    o.position = geo.position(o.lane_phase, o.branch_path);
    o.velocity = {0.0, geo.speed()};
    o.color_pair = {s.rng.uniform_int(0, half - 1), s.rng.uniform_int(half, config.palette_size - 1)};
    o.color_index = s.rng.uniform_int(0, 1);
    o.visible = true;
    o.visibility_timer = draw(s.rng, config.visible_range);
    s.objects.push_back(std::move(o));
  }
  return s;
}

EnvStep step_env(const EnvState& state, std::optional<GameAction> action) {
  if (state.finished()) throw ContractError("step_env: episode already finished");
  if (action && (action->edge_index < 0 || action->edge_index >= GameAction::kCount)) {
    throw ContractError("step_env: action out of range");
  }
  EnvStep out{state, {}, 0.0};
  EnvState& s = out.state;
  const EnvConfig& cfg = s.config;
  const LaneGeometry geo = cfg.geometry();
  s.t += 1;
  for (auto& o : s.objects) {
    const Vec2 prev = o.position;
    o.lane_phase = geo.next_phase(o.lane_phase);
    if (o.lane_phase == 0) o.branch_path.clear();
    if (geo.is_node_phase(o.lane_phase)) o.branch_path.push_back(s.rng.uniform_int(0, 1));
    o.position = geo.position(o.lane_phase, o.branch_path);
    o.velocity = {o.position.x - prev.x, wrap_unit(o.position.y - prev.y)};
    if (s.t % cfg.color_period == 0) o.color_index ^= 1;
    if (--o.visibility_timer == 0) {
      o.visible = !o.visible;
      o.visibility_timer = draw(s.rng, o.visible ? cfg.visible_range : cfg.invisible_range);
    }
  }
  if (action) out.reward = game_reward(s.objects, *action, geo, cfg.palette_size);
  out.objects = s.objects;
  return out;
}

double game_reward(const std::vector<GroundTruthObject>& objects, const GameAction& action,
                   const LaneGeometry& geometry, int palette_size) {
  if (action.is_noop()) return 0.0;
  double r = 0.0;
  for (const auto& o : objects) {
    if (o.visible) continue;
    const auto edge = geometry.leaf_edge(o.position.x, o.lane_phase);
    if (!edge || *edge != action.edge_index) continue;
    r += color_class(o.color(), palette_size) == 0 ? 1.0 : -1.0;
  }
  return r;
}

}  // namespace swb::world
