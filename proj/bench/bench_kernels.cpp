// Serial against OpenMP execution of the particle-parallel kernels.
// Arg(0) is serial, Arg(1) parallel.
#include <benchmark/benchmark.h>

#include "swb/engine/engine.hpp"
#include "swb/learning/elbo.hpp"
#include "swb/world/episode.hpp"

using namespace swb;

namespace {

engine::ExecPolicy policy(const benchmark::State& state) {
  return state.range(0) == 0 ? engine::ExecPolicy::kSerial : engine::ExecPolicy::kParallel;
}

world::Episode episode(int length) {
  world::EnvConfig env;
  env.episode_length = length;
  return world::simulate_episode(env, world::DetectorParams{}, 17);
}

void BM_StepBelief(benchmark::State& state) {
  const auto ep = episode(30);
  const auto spec = model::ModelSpec::from_env(world::EnvConfig{});
  const auto m = model::make_model<double>(spec, model::ModelParams{});
  engine::EngineConfig cfg;
  cfg.num_particles = 64;
  cfg.exec = policy(state);
  for (auto _ : state) {
    auto b = engine::init_belief<double>(cfg.num_particles, cfg.num_files, spec);
    for (const auto& st : ep.steps) b = engine::step_belief(b, st.slots, m, cfg, 3, st.t).belief;
    benchmark::DoNotOptimize(b.log_weights.data());
  }
}
BENCHMARK(BM_StepBelief)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RolloutPrior(benchmark::State& state) {
  const auto ep = episode(20);
  const auto spec = model::ModelSpec::from_env(world::EnvConfig{});
  const auto m = model::make_model<double>(spec, model::ModelParams{});
  engine::EngineConfig cfg;
  cfg.num_particles = 10;
  auto b = engine::init_belief<double>(cfg.num_particles, cfg.num_files, spec);
  for (const auto& st : ep.steps) b = engine::step_belief(b, st.slots, m, cfg, 3, st.t).belief;
  for (auto _ : state) {
    auto r = engine::rollout_prior(b, 5, m, 4, 900, policy(state));
    benchmark::DoNotOptimize(r.data());
  }
}
BENCHMARK(BM_RolloutPrior)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GradElbo(benchmark::State& state) {
  const auto seq = learning::slots_of(episode(20));
  const auto spec = model::ModelSpec::from_env(world::EnvConfig{});
  const model::ModelParams params;
  engine::EngineConfig cfg;
  cfg.num_particles = 4;
  cfg.exec = engine::ExecPolicy::kSerial;
  learning::GradConfig g;
  g.num_mc = 16;
  g.exec = policy(state);
  for (auto _ : state) {
    auto est = learning::grad_elbo(params, spec, seq, cfg, g, 5);
    benchmark::DoNotOptimize(est.gradient.data());
  }
}
BENCHMARK(BM_GradElbo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
