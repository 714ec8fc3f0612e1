#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swb/world/detector.hpp"
#include "swb/world/env.hpp"

namespace swb::world {

/// One recorded time step: ground truth after the step, what the detector saw,
/// and the action that was scored against it.
struct EpisodeStep {
  int t = 0;
  std::vector<GroundTruthObject> objects;
  SlotSet slots;
  std::optional<GameAction> action;
  double reward = 0.0;
};

struct Episode {
  EnvConfig env;
  DetectorParams detector;
  std::uint64_t seed = 0;
  std::vector<EpisodeStep> steps;
};

/// Detector randomness is drawn from its own stream so that env dynamics do
/// not depend on detector settings.
Rng detector_stream(std::uint64_t seed, int t);

/// Passive rollout: no actions, one record per time step (episode_length records).
Episode simulate_episode(const EnvConfig& env, const DetectorParams& det, std::uint64_t seed);

void to_json(nlohmann::json& j, const IntRange& r);
void from_json(const nlohmann::json& j, IntRange& r);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);
void to_json(nlohmann::json& j, const DetectorParams& d);
void from_json(const nlohmann::json& j, DetectorParams& d);
void to_json(nlohmann::json& j, const GroundTruthObject& o);
void from_json(const nlohmann::json& j, GroundTruthObject& o);
void to_json(nlohmann::json& j, const Slot& s);
void from_json(const nlohmann::json& j, Slot& s);
void to_json(nlohmann::json& j, const EpisodeStep& s);
void from_json(const nlohmann::json& j, EpisodeStep& s);

/// JSON-lines: a header record with the configuration, then one record per step.
void write_episode_jsonl(std::ostream& out, const Episode& episode);
/// Reads every episode from a JSON-lines stream (several may be concatenated).
std::vector<Episode> read_episodes_jsonl(std::istream& in);

}  // namespace swb::world
