#include "swb/planner/runner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"

namespace swb::app {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEnvTag = 0xE1;
constexpr std::uint64_t kEngineTag = 0xE2;
constexpr std::uint64_t kPlannerTag = 0xE3;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

double ess_of(const std::vector<double>& w) {
  double s = 0.0;
  for (double x : w) s += x * x;
  return s > 0.0 ? 1.0 / s : 0.0;
}

/// Source of (ground truth, slots) for time t, or false once exhausted.
using StepSource = std::function<bool(int t, std::vector<world::GroundTruthObject>& objects, world::SlotSet& slots)>;

struct FilterLoop {
  const RunConfig& cfg;
  model::Model<double> m;
  model::Belief<double> belief;
  eval::MotTracker tracker;
  std::uint64_t engine_seed;

  FilterLoop(const RunConfig& c, std::uint64_t seed)
      : cfg(c),
        m(model::make_model<double>(c.spec, c.params)),
        belief(engine::init_belief<double>(c.engine.num_particles, c.engine.num_files, c.spec)),
        tracker(c.eval.gate),
        engine_seed(seed) {}

  StepRecord update(int t, const std::vector<world::GroundTruthObject>& objects, const world::SlotSet& slots,
                    std::ostream* trace) {
    auto step = engine::step_belief(belief, slots, m, cfg.engine, engine_seed, t);
    belief = std::move(step.belief);
    StepRecord r;
    r.t = t;
    r.filtered = true;
    r.log_sum_w = step.trace.log_sum_w;
    r.ess = ess_of(step.trace.pre_weights);
    r.mot = tracker.step(belief, step.trace.ancestors, objects);
    const auto& assign = tracker.assignments();
    r.kde = eval::kde_loglik(belief, objects, cfg.eval.bandwidth, assign);
    std::vector<char> hidden(objects.size(), 0);
    for (std::size_t j = 0; j < objects.size(); ++j) {
      hidden[j] = objects[j].visible ? 0 : 1;
      r.num_invisible += hidden[j];
    }
    if (r.num_invisible > 0) {
      // std::vector<bool> has no contiguous storage for a span
      std::unique_ptr<bool[]> flags(new bool[objects.size()]);
      for (std::size_t j = 0; j < objects.size(); ++j) flags[j] = hidden[j] != 0;
      r.kde_invisible = eval::kde_loglik(belief, objects, cfg.eval.bandwidth, assign,
                                         std::span<const bool>(flags.get(), objects.size()));
    }
    if (trace) {
      json j = step_trace_json(step.trace, belief);
      j["record"] = "step";
      *trace << j.dump() << '\n';
    }
    return r;
  }
};

void add_totals(EpisodeReport& rep) {
  rep.total_reward = 0.0;
  rep.mot_total = {};
  rep.elbo = 0.0;
  int filtered = 0;
  for (const auto& s : rep.steps) {
    rep.total_reward += s.reward;
    rep.mot_total += s.mot;
    if (s.filtered) {
      rep.elbo += s.log_sum_w;
      ++filtered;
    }
  }
  if (filtered > 0) rep.elbo /= filtered;
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  detector.validate(env.palette_size);
  engine.validate();
  spec.validate();
  params.validate();
  planner.validate();
  eval.validate();
  train.validate();
  if (params.dims() != spec.dims()) throw ConfigError("model: parameter dimensions do not match the environment");
  if (num_episodes < 1) throw ConfigError("run: num_episodes must be >= 1");
  if (condition_steps < 1 || condition_steps >= env.episode_length) {
    throw ConfigError("run: condition_steps must be in [1, episode_length)");
  }
  if (samples_per_particle < 1) throw ConfigError("run: samples_per_particle must be >= 1");
}

RunConfig config_from_json(const json& j) {
  check_keys(j, {"env", "detector", "engine", "model", "planner", "eval", "train", "run"}, "config");
  RunConfig c;
  try {
    if (j.contains("env")) {
      check_keys(j["env"], {"num_objects", "levels", "branch_interval", "color_period", "palette_size",
                            "visible_range", "invisible_range", "episode_length", "speed", "seed"},
                 "env");
      c.env = j["env"].get<world::EnvConfig>();
    }
    if (j.contains("detector")) {
      check_keys(j["detector"], {"max_slots", "position_noise", "appearance_flip", "presence_min"}, "detector");
      c.detector = j["detector"].get<world::DetectorParams>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (j.contains("engine")) {
    const auto& e = j["engine"];
    check_keys(e, {"num_particles", "num_files", "alpha", "ess_threshold", "delete_after_invisible", "proposal",
                   "stop_gradient_imagination", "parallel"},
               "engine");
    read(e, "num_particles", c.engine.num_particles);
    read(e, "num_files", c.engine.num_files);
    read(e, "alpha", c.engine.alpha);
    read(e, "ess_threshold", c.engine.ess_threshold);
    read(e, "delete_after_invisible", c.engine.delete_after_invisible);
    read(e, "stop_gradient_imagination", c.engine.stop_gradient_imagination);
    std::string proposal = "learned";
    read(e, "proposal", proposal);
    if (proposal == "learned") {
      c.engine.proposal = engine::ProposalMode::kLearned;
    } else if (proposal == "prior") {
      c.engine.proposal = engine::ProposalMode::kPrior;
    } else {
      throw ConfigError("engine: proposal must be \"learned\" or \"prior\"");
    }
    bool parallel = true;
    read(e, "parallel", parallel);
    c.engine.exec = parallel ? engine::ExecPolicy::kParallel : engine::ExecPolicy::kSerial;
  }
  c.spec = model::ModelSpec::from_env(c.env);
  json params_json = json::object();
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"summary_dim", "appearance_smoothing", "color_mixture", "null_visibility",
                   "interaction_bandwidth", "params"},
               "model");
    read(m, "summary_dim", c.spec.summary_dim);
    read(m, "appearance_smoothing", c.spec.appearance_smoothing);
    read(m, "color_mixture", c.spec.color_mixture);
    read(m, "null_visibility", c.spec.null_visibility);
    read(m, "interaction_bandwidth", c.spec.interaction_bandwidth);
    if (m.contains("params")) params_json = m["params"];
  }
  if (!params_json.is_object()) throw ConfigError("model.params: expected a JSON object");
  params_json["summary_dim"] = c.spec.summary_dim;
  params_json["palette_size"] = c.spec.palette_size;
  c.params = model::ModelParams::from_json(params_json);
  if (j.contains("planner")) {
    const auto& p = j["planner"];
    check_keys(p, {"depth", "total_rollouts", "gamma", "parallel"}, "planner");
    read(p, "depth", c.planner.depth);
    read(p, "total_rollouts", c.planner.total_rollouts);
    read(p, "gamma", c.planner.gamma);
    bool parallel = true;
    read(p, "parallel", parallel);
    c.planner.exec = parallel ? engine::ExecPolicy::kParallel : engine::ExecPolicy::kSerial;
  }
  if (j.contains("eval")) {
    check_keys(j["eval"], {"bandwidth", "gate"}, "eval");
    read(j["eval"], "bandwidth", c.eval.bandwidth);
    read(j["eval"], "gate", c.eval.gate);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, {"lr", "beta1", "beta2", "steps", "num_particles", "num_mc", "fixed_seeds", "trainable",
                   "reinforce", "use_baseline", "baseline_decay"},
               "train");
    read(t, "lr", c.train.lr);
    read(t, "beta1", c.train.beta1);
    read(t, "beta2", c.train.beta2);
    read(t, "steps", c.train.steps);
    read(t, "num_particles", c.train.num_particles);
    read(t, "num_mc", c.train.num_mc);
    read(t, "fixed_seeds", c.train.fixed_seeds);
    read(t, "trainable", c.train.trainable);
    read(t, "reinforce", c.train.grad.reinforce);
    read(t, "use_baseline", c.train.grad.use_baseline);
    read(t, "baseline_decay", c.train.grad.baseline_decay);
  }
  if (j.contains("run")) {
    check_keys(j["run"], {"num_episodes", "condition_steps", "samples_per_particle"}, "run");
    read(j["run"], "num_episodes", c.num_episodes);
    read(j["run"], "condition_steps", c.condition_steps);
    read(j["run"], "samples_per_particle", c.samples_per_particle);
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["env"] = c.env;
  j["detector"] = c.detector;
  j["engine"] = {{"num_particles", c.engine.num_particles},
                 {"num_files", c.engine.num_files},
                 {"alpha", c.engine.alpha},
                 {"ess_threshold", c.engine.ess_threshold},
                 {"delete_after_invisible", c.engine.delete_after_invisible},
                 {"proposal", c.engine.proposal == engine::ProposalMode::kLearned ? "learned" : "prior"},
                 {"stop_gradient_imagination", c.engine.stop_gradient_imagination},
                 {"parallel", c.engine.exec == engine::ExecPolicy::kParallel}};
  json params = c.params.to_json();
  params.erase("summary_dim");
  params.erase("palette_size");
  j["model"] = {{"summary_dim", c.spec.summary_dim},
                {"appearance_smoothing", c.spec.appearance_smoothing},
                {"color_mixture", c.spec.color_mixture},
                {"null_visibility", c.spec.null_visibility},
                {"interaction_bandwidth", c.spec.interaction_bandwidth},
                {"params", params}};
  j["planner"] = {{"depth", c.planner.depth},
                  {"total_rollouts", c.planner.total_rollouts},
                  {"gamma", c.planner.gamma},
                  {"parallel", c.planner.exec == engine::ExecPolicy::kParallel}};
  j["eval"] = {{"bandwidth", c.eval.bandwidth}, {"gate", c.eval.gate}};
  j["train"] = {{"lr", c.train.lr},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"steps", c.train.steps},
                {"num_particles", c.train.num_particles},
                {"num_mc", c.train.num_mc},
                {"fixed_seeds", c.train.fixed_seeds},
                {"trainable", c.train.trainable},
                {"reinforce", c.train.grad.reinforce},
                {"use_baseline", c.train.grad.use_baseline},
                {"baseline_decay", c.train.grad.baseline_decay}};
  j["run"] = {{"num_episodes", c.num_episodes},
              {"condition_steps", c.condition_steps},
              {"samples_per_particle", c.samples_per_particle}};
  return j;
}

RunSeeds RunSeeds::from(std::uint64_t seed) {
  return {Rng::derive_seed(seed, {kEnvTag}), Rng::derive_seed(seed, {kEngineTag}),
          Rng::derive_seed(seed, {kPlannerTag})};
}

json step_trace_json(const engine::StepTrace& trace, const model::Belief<double>& belief) {
  json j;
  j["t"] = trace.t;
  j["log_sum_w"] = trace.log_sum_w;
  j["pre_weights"] = trace.pre_weights;
  j["ancestors"] = trace.ancestors;
  j["corrected"] = trace.corrected;
  j["resampled"] = trace.resampled;
  json parts = json::array();
  for (std::size_t k = 0; k < trace.particles.size(); ++k) {
    const auto& pt = trace.particles[k];
    json files = json::array();
    for (const auto& f : pt.files) {
      files.push_back({{"id", f.id},
                       {"match", f.match},
                       {"visible", f.visible},
                       {"discovered", f.discovered},
                       {"log_q", f.log_q_match + f.log_q_vis + f.log_q_state},
                       {"log_p", f.log_p_match + f.log_p_vis + f.log_p_state}});
    }
    parts.push_back({{"obs_loglik", pt.obs_loglik}, {"log_weight", pt.log_weight}, {"files", files}});
  }
  j["particles"] = parts;
  json beliefs = json::array();
  for (const auto& p : belief.particles) {
    json files = json::array();
    for (const auto& f : p.files) {
      if (!f.active()) continue;
      files.push_back({{"id", *f.id},
                       {"visible", f.visible},
                       {"position", {f.state.position.x, f.state.position.y}},
                       {"color", f.state.color}});
    }
    beliefs.push_back(files);
  }
  j["belief"] = beliefs;
  return j;
}

model::Belief<double> oracle_belief(const std::vector<world::GroundTruthObject>& objects, int t, int num_files,
                                    const world::EnvConfig& env, const model::ModelSpec& spec) {
  auto b = engine::init_belief<double>(1, std::max<int>(num_files, static_cast<int>(objects.size())), spec);
  auto& p = b.particles[0];
  const auto geo = env.geometry();
  for (std::size_t j = 0; j < objects.size(); ++j) {
    const auto& o = objects[j];
    auto& f = p.files[j];
    f.id = o.gt_id;
    f.visible = o.visible;
    auto& s = f.state;
    s.position = o.position;
    s.velocity = o.velocity;
    s.color = o.color();
    s.partner = o.color_pair[static_cast<std::size_t>(1 - o.color_index)];
    s.color_age = t % env.color_period;
    s.appearance = model::color_appearance(s.color, spec);
    s.lane_phase = o.lane_phase;
    s.branch = model::needs_branch(o.lane_phase, geo) || o.branch_path.empty() ? -1 : o.branch_path.back();
    s.track_count = t + 1;
    p.next_id = std::max(p.next_id, o.gt_id + 1);
  }
  return b;
}

namespace {

EpisodeReport filter_loop(Mode mode, const RunConfig& cfg, std::uint64_t seed, const StepSource& source,
                          std::ostream* trace) {
  const RunSeeds seeds = RunSeeds::from(seed);
  FilterLoop loop(cfg, seeds.engine);
  EpisodeReport rep;
  rep.seed = seed;
  rep.mode = mode;
  std::vector<world::GroundTruthObject> objects;
  world::SlotSet slots;
  for (int t = 0; source(t, objects, slots); ++t) {
    rep.steps.push_back(loop.update(t, objects, slots, trace));
  }
  add_totals(rep);
  return rep;
}

}  // namespace

EpisodeReport filter_recorded(const world::Episode& episode, const RunConfig& cfg, std::uint64_t seed,
                              std::ostream* trace) {
  auto source = [&](int t, std::vector<world::GroundTruthObject>& objects, world::SlotSet& slots) {
    if (t >= static_cast<int>(episode.steps.size())) return false;
    objects = episode.steps[static_cast<std::size_t>(t)].objects;
    slots = episode.steps[static_cast<std::size_t>(t)].slots;
    return true;
  };
  return filter_loop(Mode::kFilter, cfg, seed, source, trace);
}

EpisodeReport run_episode(Mode mode, const RunConfig& cfg, std::uint64_t seed, std::ostream* trace) {
  cfg.validate();
  const RunSeeds seeds = RunSeeds::from(seed);
  world::EnvState state = world::init_episode(cfg.env, seeds.env);
  auto detect = [&](int t) {
    Rng rng = world::detector_stream(seeds.env, t);
    return world::detect_slots(state.objects, cfg.detector, cfg.env.palette_size, rng);
  };

  if (mode == Mode::kFilter) {
    auto source = [&](int t, std::vector<world::GroundTruthObject>& objects, world::SlotSet& slots) {
      if (t > 0) {
        if (state.finished()) return false;
        state = world::step_env(state, std::nullopt).state;
      }
      objects = state.objects;
      slots = detect(t);
      return true;
    };
    return filter_loop(mode, cfg, seed, source, trace);
  }

  FilterLoop loop(cfg, seeds.engine);
  EpisodeReport rep;
  rep.seed = seed;
  rep.mode = mode;
  if (mode == Mode::kPlan) {
    for (int t = 0;; ++t) {
      StepRecord r = loop.update(t, state.objects, detect(t), trace);
      if (state.finished()) {
        rep.steps.push_back(r);
        break;
      }
      const auto action = planner::plan_action(loop.belief, loop.m, cfg.planner, Rng::derive_seed(seeds.planner, {static_cast<std::uint64_t>(t)}));
      auto next = world::step_env(state, action);
      r.action = action.edge_index;
      r.reward = next.reward;
      state = std::move(next.state);
      rep.steps.push_back(r);
    }
    rep.simulated_futures_per_step =
        cfg.planner.depth == 0 ? 0 : (cfg.planner.total_rollouts / world::GameAction::kCount) * world::GameAction::kCount;
    add_totals(rep);
    return rep;
  }

  // Generation: condition on a prefix, then predict the rest from the prior alone.
  for (int t = 0; t < cfg.condition_steps; ++t) {
    if (t > 0) state = world::step_env(state, std::nullopt).state;
    rep.steps.push_back(loop.update(t, state.objects, detect(t), trace));
  }
  const int depth = cfg.env.episode_length - cfg.condition_steps;
  const int R = cfg.samples_per_particle * cfg.engine.num_particles;
  const auto rollouts = engine::rollout_prior(loop.belief, depth, loop.m, Rng::derive_seed(seeds.engine, {0x6E}), R,
                                              cfg.engine.exec);
  for (int d = 0; d < depth; ++d) {
    state = world::step_env(state, std::nullopt).state;
    model::Belief<double> future;
    for (const auto& ro : rollouts) future.particles.push_back(ro.states[static_cast<std::size_t>(d)]);
    future.log_weights.assign(rollouts.size(), -std::log(static_cast<double>(rollouts.size())));
    StepRecord r;
    r.t = state.t;
    r.kde = eval::kde_loglik(future, state.objects, cfg.eval.bandwidth, cfg.eval.gate);
    for (const auto& o : state.objects) r.num_invisible += o.visible ? 0 : 1;
    if (trace) {
      *trace << json{{"record", "generate"}, {"t", r.t}, {"kde", r.kde}}.dump() << '\n';
    }
    rep.steps.push_back(r);
  }
  add_totals(rep);
  return rep;
}

}  // namespace swb::app
