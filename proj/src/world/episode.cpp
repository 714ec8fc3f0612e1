#include "swb/world/episode.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "swb/core/error.hpp"

namespace swb::world {

using nlohmann::json;

namespace {
constexpr std::uint64_t kDetectorTag = 0xD37EC7;
}

Rng detector_stream(std::uint64_t seed, int t) {
  return Rng::stream(seed, {kDetectorTag, static_cast<std::uint64_t>(t)});
}

Episode simulate_episode(const EnvConfig& env, const DetectorParams& det, std::uint64_t seed) {
  det.validate(env.palette_size);
  Episode ep{env, det, seed, {}};
  EnvState state = init_episode(env, seed);
  auto record = [&](const std::vector<GroundTruthObject>& objs, int t) {
    Rng rng = detector_stream(seed, t);
    ep.steps.push_back({t, objs, detect_slots(objs, det, env.palette_size, rng), std::nullopt, 0.0});
  };
  record(state.objects, 0);
  while (!state.finished()) {
    EnvStep next = step_env(state, std::nullopt);
    state = std::move(next.state);
    record(state.objects, state.t);
  }
  return ep;
}

void to_json(json& j, const IntRange& r) { j = json::array({r.lo, r.hi}); }
void from_json(const json& j, IntRange& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be a two-element array");
  r.lo = j.at(0).get<int>();
  r.hi = j.at(1).get<int>();
}

void to_json(json& j, const EnvConfig& c) {
  j = json{{"num_objects", c.num_objects},     {"levels", c.levels},
           {"branch_interval", c.branch_interval}, {"color_period", c.color_period},
           {"palette_size", c.palette_size},   {"visible_range", c.visible_range},
           {"invisible_range", c.invisible_range}, {"episode_length", c.episode_length},
           {"speed", c.speed()},               {"seed", c.seed}};
}

void from_json(const json& j, EnvConfig& c) {
  c.num_objects = j.value("num_objects", c.num_objects);
  c.levels = j.value("levels", c.levels);
  c.branch_interval = j.value("branch_interval", c.branch_interval);
  c.color_period = j.value("color_period", c.color_period);
  c.palette_size = j.value("palette_size", c.palette_size);
  if (j.contains("visible_range")) c.visible_range = j.at("visible_range").get<IntRange>();
  if (j.contains("invisible_range")) c.invisible_range = j.at("invisible_range").get<IntRange>();
  c.episode_length = j.value("episode_length", c.episode_length);
  c.seed = j.value("seed", c.seed);
  if (j.contains("speed")) {
    // Speed is implied by the lane tree; an explicit value must agree with it.
    const double s = j.at("speed").get<double>();
    if (std::abs(s - c.speed()) > 1e-12) {
      throw ConfigError("env: speed must equal 1 / (levels * branch_interval)");
    }
  }
}

void to_json(json& j, const DetectorParams& d) {
  j = json{{"max_slots", d.max_slots},
           {"position_noise", d.position_noise},
           {"appearance_flip", d.appearance_flip},
           {"presence_min", d.presence_min}};
}

void from_json(const json& j, DetectorParams& d) {
  d.max_slots = j.value("max_slots", d.max_slots);
  d.position_noise = j.value("position_noise", d.position_noise);
  d.appearance_flip = j.value("appearance_flip", d.appearance_flip);
  d.presence_min = j.value("presence_min", d.presence_min);
}

void to_json(json& j, const GroundTruthObject& o) {
  j = json{{"gt_id", o.gt_id},
           {"position", {o.position.x, o.position.y}},
           {"velocity", {o.velocity.x, o.velocity.y}},
           {"color_index", o.color_index},
           {"color_pair", o.color_pair},
           {"visible", o.visible},
           {"branch_path", o.branch_path},
           {"lane_phase", o.lane_phase},
           {"visibility_timer", o.visibility_timer}};
}

void from_json(const json& j, GroundTruthObject& o) {
  o.gt_id = j.at("gt_id").get<int>();
  o.position = {j.at("position").at(0).get<double>(), j.at("position").at(1).get<double>()};
  o.velocity = {j.at("velocity").at(0).get<double>(), j.at("velocity").at(1).get<double>()};
  o.color_index = j.at("color_index").get<int>();
  o.color_pair = j.at("color_pair").get<std::array<int, 2>>();
  o.visible = j.at("visible").get<bool>();
  o.branch_path = j.at("branch_path").get<std::vector<int>>();
  o.lane_phase = j.at("lane_phase").get<int>();
  o.visibility_timer = j.value("visibility_timer", 0);
}

void to_json(json& j, const Slot& s) {
  j = json{{"position", {s.position.x, s.position.y}},
           {"appearance", s.appearance},
           {"presence", s.presence},
           {"is_null", s.is_null}};
}

void from_json(const json& j, Slot& s) {
  s.position = {j.at("position").at(0).get<double>(), j.at("position").at(1).get<double>()};
  s.appearance = j.at("appearance").get<std::vector<double>>();
  s.presence = j.at("presence").get<double>();
  s.is_null = j.at("is_null").get<bool>();
}

void to_json(json& j, const EpisodeStep& s) {
  j = json{{"t", s.t}, {"objects", s.objects}, {"slots", s.slots}, {"reward", s.reward}};
  j["action"] = s.action ? json(s.action->edge_index) : json(nullptr);
}

void from_json(const json& j, EpisodeStep& s) {
  s.t = j.at("t").get<int>();
  s.objects = j.at("objects").get<std::vector<GroundTruthObject>>();
  s.slots = j.at("slots").get<SlotSet>();
  s.reward = j.value("reward", 0.0);
  s.action.reset();
  if (j.contains("action") && !j.at("action").is_null()) s.action = GameAction{j.at("action").get<int>()};
}

void write_episode_jsonl(std::ostream& out, const Episode& episode) {
  json header{{"record", "episode"},
              {"seed", episode.seed},
              {"env", episode.env},
              {"detector", episode.detector},
              {"num_steps", episode.steps.size()}};
  out << header.dump() << '\n';
  for (const auto& s : episode.steps) {
    json j = s;
    j["record"] = "step";
    out << j.dump() << '\n';
  }
}

std::vector<Episode> read_episodes_jsonl(std::istream& in) {
  std::vector<Episode> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("episode file line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string kind = j.value("record", "");
    if (kind == "episode") {
      Episode ep;
      ep.seed = j.value("seed", std::uint64_t{0});
      ep.env = j.at("env").get<EnvConfig>();
      ep.detector = j.at("detector").get<DetectorParams>();
      out.push_back(std::move(ep));
    } else if (kind == "step") {
      if (out.empty()) throw ConfigError("episode file: step record before episode header");
      out.back().steps.push_back(j.get<EpisodeStep>());
    }
  }
  return out;
}

}  // namespace swb::world
