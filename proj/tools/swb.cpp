// Experiment runner: simulate, filter, generate, train, plan and eval-mot.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"
#include "swb/learning/elbo.hpp"
#include "swb/learning/optimize.hpp"
#include "swb/planner/runner.hpp"
#include "swb/world/episode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace swb;

namespace {

struct Options {
  std::string config_path;
  std::string params_path;
  std::string data_path;
  std::string out_params;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int episodes = 0;
  int particles = 0;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

app::RunConfig load_config(const Options& o) {
  json j = o.config_path.empty() ? json::object() : read_json_file(o.config_path);
  if (!o.params_path.empty()) {
    json p = read_json_file(o.params_path);
    p.erase("schema");
    p.erase("summary_dim");
    p.erase("palette_size");
    j["model"]["params"] = p;
  }
  if (o.episodes > 0) j["run"]["num_episodes"] = o.episodes;
  if (o.particles > 0) j["engine"]["num_particles"] = o.particles;
  return app::config_from_json(j);
}

std::uint64_t episode_seed(std::uint64_t seed, int i) {
  return Rng::derive_seed(seed, {0xC11, static_cast<std::uint64_t>(i)});
}

std::string num(double x) { return fmt::format("{:.17g}", x); }

class Outputs {
 public:
  Outputs(const Options& o, const app::RunConfig& cfg) : dir_(o.out_dir) {
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.json") << config_to_json(cfg).dump(2) << '\n';
    trace_.open(dir_ / "trace.jsonl");
    csv_.open(dir_ / "metrics.csv");
    csv_ << "t,metric,value,K,seed\n";
  }

  std::ostream& trace() { return trace_; }

  void metric(int t, const std::string& name, double value, int k, std::uint64_t seed) {
    csv_ << t << ',' << name << ',' << num(value) << ',' << k << ',' << seed << '\n';
  }

  void summary(const json& j) { std::ofstream(dir_ / "summary.json") << j.dump(2) << '\n'; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::ofstream trace_;
  std::ofstream csv_;
};

json mot_json(const eval::MotCounts& m) {
  return {{"fp", m.fp}, {"miss", m.miss}, {"switch", m.switches}, {"migrate", m.migrate}, {"ascend", m.ascend}};
}

void emit_steps(Outputs& out, const app::EpisodeReport& rep, int k, bool with_mot) {
  for (const auto& s : rep.steps) {
    out.metric(s.t, "kde_loglik", s.kde, k, rep.seed);
    if (s.kde_invisible) out.metric(s.t, "kde_loglik_invisible", *s.kde_invisible, k, rep.seed);
    if (s.action >= 0) {
      out.metric(s.t, "action", s.action, k, rep.seed);
      out.metric(s.t, "reward", s.reward, k, rep.seed);
    }
    if (!with_mot) continue;
    out.metric(s.t, "log_sum_w", s.log_sum_w, k, rep.seed);
    out.metric(s.t, "ess", s.ess, k, rep.seed);
    out.metric(s.t, "fp", s.mot.fp, k, rep.seed);
    out.metric(s.t, "miss", s.mot.miss, k, rep.seed);
    out.metric(s.t, "switch", s.mot.switches, k, rep.seed);
    out.metric(s.t, "migrate", s.mot.migrate, k, rep.seed);
    out.metric(s.t, "ascend", s.mot.ascend, k, rep.seed);
  }
}

std::vector<world::Episode> load_or_simulate(const Options& o, const app::RunConfig& cfg) {
  if (!o.data_path.empty()) {
    std::ifstream in(o.data_path);
    if (!in) throw ConfigError("cannot open " + o.data_path);
    return world::read_episodes_jsonl(in);
  }
  std::vector<world::Episode> eps;
  for (int i = 0; i < cfg.num_episodes; ++i) {
    eps.push_back(world::simulate_episode(cfg.env, cfg.detector, episode_seed(o.seed, i)));
  }
  return eps;
}

void cmd_simulate(const Options& o) {
  const auto cfg = load_config(o);
  Outputs out(o, cfg);
  int visible_steps = 0, total = 0;
  for (int i = 0; i < cfg.num_episodes; ++i) {
    const auto ep = world::simulate_episode(cfg.env, cfg.detector, episode_seed(o.seed, i));
    world::write_episode_jsonl(out.trace(), ep);
    for (const auto& s : ep.steps) {
      int vis = 0;
      for (const auto& obj : s.objects) vis += obj.visible ? 1 : 0;
      out.metric(s.t, "num_visible", vis, 0, ep.seed);
      visible_steps += vis;
      total += static_cast<int>(s.objects.size());
    }
  }
  out.summary({{"command", "simulate"},
               {"episodes", cfg.num_episodes},
               {"visible_fraction", total > 0 ? static_cast<double>(visible_steps) / total : 0.0}});
}

void cmd_filter_like(const Options& o, app::Mode mode, const std::string& name) {
  const auto cfg = load_config(o);
  Outputs out(o, cfg);
  const int k = cfg.engine.num_particles;
  std::vector<app::EpisodeReport> reports;
  if (mode == app::Mode::kFilter && !o.data_path.empty()) {
    for (const auto& ep : load_or_simulate(o, cfg)) {
      reports.push_back(app::filter_recorded(ep, cfg, ep.seed, &out.trace()));
      emit_steps(out, reports.back(), k, true);
    }
  } else {
    for (int i = 0; i < cfg.num_episodes; ++i) {
      out.trace() << json{{"record", "episode"}, {"index", i}, {"seed", episode_seed(o.seed, i)}}.dump() << '\n';
      reports.push_back(app::run_episode(mode, cfg, episode_seed(o.seed, i), &out.trace()));
      emit_steps(out, reports.back(), k, mode != app::Mode::kGenerate);
    }
  }
  double kde = 0.0, kde_inv = 0.0, elbo = 0.0, reward = 0.0;
  int n = 0, n_inv = 0;
  eval::MotCounts mot;
  for (const auto& r : reports) {
    elbo += r.elbo;
    reward += r.total_reward;
    mot += r.mot_total;
    for (const auto& s : r.steps) {
      kde += s.kde;
      ++n;
      if (s.kde_invisible) {
        kde_inv += *s.kde_invisible;
        ++n_inv;
      }
    }
  }
  const double m = static_cast<double>(reports.size());
  json summary{{"command", name},
               {"episodes", reports.size()},
               {"num_particles", k},
               {"mean_kde_loglik", n > 0 ? kde / n : 0.0},
               {"mean_kde_loglik_invisible", n_inv > 0 ? kde_inv / n_inv : 0.0}};
  summary["mean_elbo"] = elbo / m;
  if (mode != app::Mode::kGenerate) summary["mot"] = mot_json(mot);
  if (mode == app::Mode::kPlan) {
    summary["mean_reward"] = reward / m;
    summary["simulated_futures_per_step"] = reports.empty() ? 0 : reports.front().simulated_futures_per_step;
  }
  out.summary(summary);
}

void cmd_eval_mot(const Options& o) {
  const auto cfg = load_config(o);
  Outputs out(o, cfg);
  const int k = cfg.engine.num_particles;
  eval::MotCounts total;
  const auto eps = load_or_simulate(o, cfg);
  for (const auto& ep : eps) {
    const auto rep = app::filter_recorded(ep, cfg, ep.seed, nullptr);
    out.trace() << json{{"record", "episode"}, {"seed", ep.seed}, {"mot", mot_json(rep.mot_total)}}.dump() << '\n';
    for (const auto& s : rep.steps) {
      out.metric(s.t, "fp", s.mot.fp, k, ep.seed);
      out.metric(s.t, "miss", s.mot.miss, k, ep.seed);
      out.metric(s.t, "switch", s.mot.switches, k, ep.seed);
      out.metric(s.t, "migrate", s.mot.migrate, k, ep.seed);
      out.metric(s.t, "ascend", s.mot.ascend, k, ep.seed);
    }
    total += rep.mot_total;
  }
  const double n = std::max<double>(1.0, static_cast<double>(eps.size()));
  eval::MotCounts mean{total.fp / n, total.miss / n, total.switches / n, total.migrate / n, total.ascend / n};
  out.summary({{"command", "eval-mot"},
               {"episodes", eps.size()},
               {"num_particles", k},
               {"mot_total", mot_json(total)},
               {"mot_per_episode", mot_json(mean)}});
}

void cmd_train(const Options& o) {
  const auto cfg = load_config(o);
  Outputs out(o, cfg);
  std::vector<learning::SlotSequence> data;
  for (const auto& ep : load_or_simulate(o, cfg)) data.push_back(learning::slots_of(ep));
  auto engine_cfg = cfg.engine;
  engine_cfg.num_particles = cfg.train.num_particles;
  const auto res = learning::optimize(cfg.params, cfg.spec, data, engine_cfg, cfg.train, o.seed);
  const auto smoothed = learning::smooth(res.elbo_curve, 50);
  for (std::size_t i = 0; i < res.elbo_curve.size(); ++i) {
    const int step = static_cast<int>(i);
    out.metric(step, "elbo", res.elbo_curve[i], engine_cfg.num_particles, o.seed);
    out.metric(step, "elbo_smoothed", smoothed[i], engine_cfg.num_particles, o.seed);
    json values;
    for (std::size_t j = 0; j < res.trained.size(); ++j) {
      values[res.params.entry_name(res.trained[j])] = res.trajectory[i][j];
    }
    out.trace() << json{{"record", "train_step"}, {"step", step}, {"elbo", res.elbo_curve[i]}, {"params", values}}.dump()
                << '\n';
  }
  const fs::path params_path = o.out_params.empty() ? out.dir() / "params.json" : fs::path(o.out_params);
  std::ofstream(params_path) << res.params.to_json().dump(2) << '\n';
  out.summary({{"command", "train"},
               {"episodes", data.size()},
               {"steps_run", res.steps_run},
               {"diverged", res.diverged},
               {"final_elbo", res.elbo_curve.empty() ? 0.0 : res.elbo_curve.back()},
               {"params", params_path.string()}});
  if (res.diverged) throw NumericalError("training diverged; last finite parameters written");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Structured world belief experiments"};
  cli.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config document")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--params", o.params_path, "model parameter JSON, overrides model.params")
        ->check(CLI::ExistingFile);
    sub->add_option("--episodes", o.episodes, "overrides run.num_episodes");
    sub->add_option("--particles", o.particles, "overrides engine.num_particles");
  };
  auto* simulate = cli.add_subcommand("simulate", "generate episodes (JSONL)");
  auto* filter = cli.add_subcommand("filter", "filter simulated or recorded episodes");
  auto* generate = cli.add_subcommand("generate", "condition, then roll out the prior");
  auto* train = cli.add_subcommand("train", "fit parameters by ELBO ascent");
  auto* plan = cli.add_subcommand("plan", "play the game with the belief planner");
  auto* eval_mot = cli.add_subcommand("eval-mot", "MOT counts on simulated or recorded episodes");
  for (auto* s : {simulate, filter, generate, train, plan, eval_mot}) common(s);
  for (auto* s : {filter, train, eval_mot}) s->add_option("--data", o.data_path, "episodes JSONL")->check(CLI::ExistingFile);
  train->add_option("--out-params", o.out_params, "where to write the trained parameters");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) cmd_simulate(o);
    if (*filter) cmd_filter_like(o, app::Mode::kFilter, "filter");
    if (*generate) cmd_filter_like(o, app::Mode::kGenerate, "generate");
    if (*plan) cmd_filter_like(o, app::Mode::kPlan, "plan");
    if (*train) cmd_train(o);
    if (*eval_mot) cmd_eval_mot(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
