#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "stats.hpp"
#include "swb/core/error.hpp"
#include "swb/world/detector.hpp"
#include "swb/world/env.hpp"
#include "swb/world/episode.hpp"

using namespace swb;
using namespace swb::world;

TEST_CASE("init_episode starts every object visible") {
  EnvConfig cfg;
  cfg.num_objects = 2;
  const auto s = init_episode(cfg, 7);
  REQUIRE(s.objects.size() == 2);
  for (const auto& o : s.objects) CHECK(o.visible);
  CHECK(s.t == 0);
}

TEST_CASE("init_episode is deterministic per seed") {
  EnvConfig cfg;
  CHECK(init_episode(cfg, 7) == init_episode(cfg, 7));
  CHECK_FALSE(init_episode(cfg, 7) == init_episode(cfg, 8));
}

TEST_CASE("degenerate configs are rejected") {
  EnvConfig cfg;
  cfg.num_objects = 0;
  CHECK_THROWS_WITH_AS(init_episode(cfg, 1), doctest::Contains("at least one object required"), ConfigError);
  cfg = {};
  cfg.palette_size = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.visible_range = {3, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("color flips every color_period steps") {
  EnvConfig cfg;
  auto s = init_episode(cfg, 3);
  const int start = s.objects[0].color_index;
  for (int t = 1; t <= 12; ++t) {
    const int before = s.objects[0].color_index;
    s = step_env(s, std::nullopt).state;
    // the step that takes color phase 4 to 5 flips
    CHECK((s.objects[0].color_index != before) == (t % cfg.color_period == 0));
  }
  CHECK(s.objects[0].color_index == start);  // two flips by t = 12
}

TEST_CASE("no-op scores zero") {
  EnvConfig cfg = EnvConfig::game();
  auto s = init_episode(cfg, 5);
  for (int t = 0; t < 40; ++t) {
    const auto st = step_env(s, GameAction{});
    CHECK(st.reward == 0.0);
    s = st.state;
  }
}

TEST_CASE("stepping past the end is a contract violation") {
  EnvConfig cfg;
  cfg.episode_length = 2;
  auto s = init_episode(cfg, 1);
  s = step_env(s, std::nullopt).state;
  CHECK(s.finished());
  CHECK_THROWS_AS(step_env(s, std::nullopt), ContractError);
  CHECK_THROWS_AS(step_env(init_episode(cfg, 1), GameAction{9}), ContractError);
}

TEST_CASE("branch bits are fair coins") {
  EnvConfig cfg;
  cfg.num_objects = 10;
  cfg.episode_length = 110000;
  auto s = init_episode(cfg, 11);
  const auto geo = cfg.geometry();
  long ones = 0, events = 0;
  while (events < 100000) {
    s = step_env(s, std::nullopt).state;
    for (const auto& o : s.objects) {
      if (!geo.is_node_phase(o.lane_phase)) continue;
      ones += o.branch_path.back();
      ++events;
    }
  }
  const double p = static_cast<double>(ones) / static_cast<double>(events);
  CHECK(std::abs(p - 0.5) < 0.01);
}

TEST_CASE("objects move one row per step along their lane") {
  EnvConfig cfg;
  cfg.num_objects = 4;
  cfg.episode_length = 400;
  auto s = init_episode(cfg, 9);
  const auto geo = cfg.geometry();
  while (!s.finished()) {
    const auto prev = s.objects;
    s = step_env(s, std::nullopt).state;
    for (std::size_t j = 0; j < prev.size(); ++j) {
      const auto& o = s.objects[j];
      CHECK(o.lane_phase == geo.next_phase(prev[j].lane_phase));
      CHECK(o.position == geo.position(o.lane_phase, o.branch_path));
      if (o.lane_phase != 0) CHECK(std::abs(o.velocity.y - geo.speed()) < 1e-12);
      CHECK(o.position.x >= 0.0);
      CHECK(o.position.x <= 1.0);
    }
  }
}

TEST_CASE("visibility runs stay inside their configured ranges") {
  EnvConfig cfg;
  cfg.num_objects = 3;
  cfg.episode_length = 3000;
  auto s = init_episode(cfg, 21);
  std::vector<int> run(3, 1);
  while (!s.finished()) {
    const auto prev = s.objects;
    s = step_env(s, std::nullopt).state;
    for (std::size_t j = 0; j < 3; ++j) {
      if (s.objects[j].visible == prev[j].visible) {
        ++run[j];
        continue;
      }
      const auto& r = prev[j].visible ? cfg.visible_range : cfg.invisible_range;
      CHECK(run[j] >= r.lo);
      CHECK(run[j] <= r.hi);
      run[j] = 1;
    }
  }
}

TEST_CASE("game reward pays by color class on the chosen leaf edge") {
  EnvConfig cfg = EnvConfig::game();
  const auto geo = cfg.geometry();
  GroundTruthObject o;
  o.visible = false;
  o.lane_phase = 25;
  o.branch_path = {1, 0, 1};
  o.position = geo.position(o.lane_phase, o.branch_path);
  const int edge = *geo.leaf_edge(o.position.x, o.lane_phase);
  CHECK(edge == 5);
  o.color_pair = {1, 4};
  o.color_index = 0;
  CHECK(game_reward({o}, GameAction{edge}, geo, cfg.palette_size) == 1.0);
  o.color_index = 1;
  CHECK(game_reward({o}, GameAction{edge}, geo, cfg.palette_size) == -1.0);
  CHECK(game_reward({o}, GameAction{(edge + 1) % 8}, geo, cfg.palette_size) == 0.0);
  o.visible = true;
  CHECK(game_reward({o}, GameAction{edge}, geo, cfg.palette_size) == 0.0);
}

TEST_CASE("lane geometry places nodes at dyadic midpoints") {
  LaneGeometry geo{3, 10};
  CHECK(geo.position(0, std::vector<int>{0}) == Vec2{0.5, 0.0});
  const std::vector<int> left{0, 0};
  CHECK(geo.position(10, left).x == doctest::Approx(0.25));
  const std::vector<int> rl{1, 0, 1};
  CHECK(geo.position(20, rl).x == doctest::Approx(0.625));
  CHECK(geo.phase_from_y(0.5) == 15);
  CHECK_FALSE(geo.leaf_edge(0.1, 10).has_value());
  CHECK_THROWS_AS(geo.position(10, std::vector<int>{0}), ContractError);
}

namespace {
GroundTruthObject centered(int id, bool visible) {
  GroundTruthObject o;
  o.gt_id = id;
  o.position = {0.5, 0.5};
  o.color_pair = {0, 3};
  o.visible = visible;
  return o;
}
}  // namespace

TEST_CASE("detector with nothing visible yields only the null slot") {
  Rng rng(1);
  DetectorParams det;
  const auto slots = detect_slots({centered(1, false), centered(2, false)}, det, 6, rng);
  REQUIRE(slots.size() == 5);
  CHECK(slots[0].is_null);
  CHECK(count_detections(slots) == 0);
  for (std::size_t i = 1; i < slots.size(); ++i) CHECK(slots[i].is_padding());
}

TEST_CASE("noiseless detector reports exact positions and symbols") {
  Rng rng(2);
  DetectorParams det;
  det.position_noise = 0.0;
  auto a = centered(1, true);
  a.position = {0.2, 0.7};
  const auto slots = detect_slots({a}, det, 6, rng);
  CHECK(slots[1].position == a.position);
  CHECK(slots[1].appearance[0] == 1.0);
  CHECK(slots[1].presence >= det.presence_min);
}

TEST_CASE("detector position noise has the configured RMS") {
  Rng rng(3);
  DetectorParams det;
  det.position_noise = 0.02;
  double ss = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto slots = detect_slots({centered(1, true)}, det, 6, rng);
    const double dx = slots[1].position.x - 0.5, dy = slots[1].position.y - 0.5;
    ss += dx * dx + dy * dy;
  }
  const double rms = std::sqrt(ss / n);
  CHECK(std::abs(rms / (0.02 * std::sqrt(2.0)) - 1.0) < 0.02);
}

TEST_CASE("detector keeps the M most present objects") {
  Rng rng(4);
  DetectorParams det;
  det.max_slots = 2;
  std::vector<GroundTruthObject> objs;
  for (int i = 0; i < 5; ++i) objs.push_back(centered(i + 1, true));
  const auto slots = detect_slots(objs, det, 6, rng);
  CHECK(slots.size() == 3);
  CHECK(count_detections(slots) == 2);
}

TEST_CASE("episodes round-trip through JSON lines") {
  EnvConfig cfg;
  cfg.episode_length = 12;
  DetectorParams det;
  det.appearance_flip = 0.1;
  const auto a = simulate_episode(cfg, det, 5);
  const auto b = simulate_episode(cfg, det, 6);
  CHECK(a.steps.size() == 12);
  std::stringstream ss;
  write_episode_jsonl(ss, a);
  write_episode_jsonl(ss, b);
  const auto back = read_episodes_jsonl(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].env == a.env);
  CHECK(back[0].detector == a.detector);
  REQUIRE(back[1].steps.size() == b.steps.size());
  for (std::size_t t = 0; t < b.steps.size(); ++t) {
    CHECK(back[1].steps[t].objects == b.steps[t].objects);
    CHECK(back[1].steps[t].slots == b.steps[t].slots);
  }
}

TEST_CASE("env config JSON rejects an inconsistent speed") {
  nlohmann::json j = EnvConfig{};
  CHECK(j.get<EnvConfig>() == EnvConfig{});
  j["speed"] = 0.5;
  CHECK_THROWS_AS(j.get<EnvConfig>(), ConfigError);
}

TEST_CASE("simulated detections match the recorded objects") {
  EnvConfig cfg;
  const auto ep = simulate_episode(cfg, DetectorParams{}, 13);
  for (const auto& st : ep.steps) {
    int vis = 0;
    for (const auto& o : st.objects) vis += o.visible;
    CHECK(count_detections(st.slots) == std::min(vis, 4));
  }
}
