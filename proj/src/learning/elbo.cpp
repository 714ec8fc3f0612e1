#include "swb/learning/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"

namespace swb::learning {

using engine::EngineConfig;
using model::ModelParams;
using model::ModelSpec;

namespace {
constexpr std::uint64_t kReplicateTag = 0x4E9;
constexpr std::uint64_t kPilotTag = 0x9170;
}  // namespace

SlotSequence slots_of(const world::Episode& episode) {
  SlotSequence out;
  out.reserve(episode.steps.size());
  for (const auto& s : episode.steps) out.push_back(s.slots);
  return out;
}

template <class S>
ElboRun<S> run_elbo(const SlotSequence& episode, const model::Model<S>& m, const EngineConfig& cfg,
                    std::uint64_t seed, bool keep_steps) {
  if (episode.empty()) throw ConfigError("elbo: episode has no steps");
  auto belief = engine::init_belief<S>(cfg.num_particles, cfg.num_files, m.spec);
  ElboRun<S> out;
  out.elbo = S(0.0);
  out.score = S(0.0);
  for (std::size_t t = 0; t < episode.size(); ++t) {
    auto step = engine::step_belief(belief, episode[t], m, cfg, seed, static_cast<int>(t));
    out.elbo += step.log_sum_w;
    out.score += step.score;
    out.trace.log_sum_w.push_back(value(step.log_sum_w));
    if (keep_steps) out.trace.steps.push_back(std::move(step.trace));
    belief = std::move(step.belief);
  }
  out.elbo = out.elbo / static_cast<double>(episode.size());
  out.trace.elbo = value(out.elbo);
  return out;
}

template ElboRun<double> run_elbo<double>(const SlotSequence&, const model::Model<double>&, const EngineConfig&,
                                          std::uint64_t, bool);
template ElboRun<Dual> run_elbo<Dual>(const SlotSequence&, const model::Model<Dual>&, const EngineConfig&,
                                      std::uint64_t, bool);

double elbo(const SlotSequence& episode, const ModelSpec& spec, const ModelParams& params, const EngineConfig& cfg,
            std::uint64_t seed, ElboTrace* trace) {
  const auto m = model::make_model<double>(spec, params);
  auto run = run_elbo(episode, m, cfg, seed, trace != nullptr);
  if (trace) *trace = std::move(run.trace);
  return run.elbo;
}

std::uint64_t replicate_seed(std::uint64_t seed, int r) {
  return Rng::derive_seed(seed, {kReplicateTag, static_cast<std::uint64_t>(r)});
}

std::vector<std::size_t> default_mask(const ModelParams& params) {
  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i >= ModelParams::kRnnWeights && i < ModelParams::kRnnWeights + params.rnn_size()) continue;
    mask.push_back(i);
  }
  return mask;
}

std::vector<std::size_t> mask_from_names(const ModelParams& params, const std::vector<std::string>& names) {
  if (names.empty()) return default_mask(params);
  std::vector<std::size_t> mask;
  for (const auto& n : names) {
    bool block = false;
    for (const auto& b : params.blocks()) {
      if (b.name != n) continue;
      for (std::size_t i = 0; i < b.size; ++i) mask.push_back(b.offset + i);
      block = true;
    }
    if (!block) mask.push_back(params.index(n));
  }
  std::sort(mask.begin(), mask.end());
  mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  return mask;
}

ReplicateGrad replicate_grad(const SlotSequence& episode, const ModelSpec& spec, const ModelParams& params,
                             const EngineConfig& cfg, std::span<const std::size_t> mask, std::uint64_t seed) {
  ReplicateGrad out;
  out.pathwise.assign(mask.size(), 0.0);
  out.score.assign(mask.size(), 0.0);
  if (mask.empty()) {
    out.elbo = elbo(episode, spec, params, cfg, seed);
    return out;
  }
  // Each pass differentiates up to kTangentSize entries; the same seed makes
  // every pass draw identical samples.
  for (std::size_t lo = 0; lo < mask.size(); lo += kTangentSize) {
    const std::size_t n = std::min(kTangentSize, mask.size() - lo);
    const auto m = model::make_model<Dual>(spec, params, mask.subspan(lo, n));
    const auto run = run_elbo(episode, m, cfg, seed);
    out.elbo = run.elbo.v;
    for (std::size_t j = 0; j < n; ++j) {
      out.pathwise[lo + j] = run.elbo.d[j];
      out.score[lo + j] = run.score.d[j];
    }
  }
  return out;
}

GradEstimate grad_elbo(const ModelParams& params, const ModelSpec& spec, const SlotSequence& episode,
                       const EngineConfig& cfg, const GradConfig& gcfg, std::uint64_t seed) {
  if (gcfg.num_mc < 1) throw ConfigError("grad_elbo: num_mc must be >= 1");
  if (!(gcfg.baseline_decay >= 0.0 && gcfg.baseline_decay < 1.0)) {
    throw ConfigError("grad_elbo: baseline_decay must be in [0, 1)");
  }
  const auto mask = gcfg.mask.empty() ? default_mask(params) : gcfg.mask;
  for (std::size_t i : mask) {
    if (i >= params.size()) throw ConfigError("grad_elbo: mask index out of range");
  }
  EngineConfig inner = cfg;
  inner.exec = engine::ExecPolicy::kSerial;

  const int R = gcfg.num_mc;
  std::vector<ReplicateGrad> reps(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
  auto run = [&](int r) {
    try {
      reps[static_cast<std::size_t>(r)] = replicate_grad(episode, spec, params, inner, mask, replicate_seed(seed, r));
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  };
  if (gcfg.exec == engine::ExecPolicy::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < R; ++r) run(r);
  } else {
    for (int r = 0; r < R; ++r) run(r);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double baseline = 0.0;
  if (gcfg.reinforce && gcfg.use_baseline) {
    baseline = elbo(episode, spec, params, inner, Rng::derive_seed(seed, {kPilotTag}));
  }
  const auto c = combine_replicates(reps, gcfg, baseline);
  GradEstimate est;
  est.mask = mask;
  est.num_samples = R;
  est.mean_elbo = c.mean_elbo;
  est.baseline = c.baseline;
  est.gradient.assign(params.size(), 0.0);
  est.std_error.assign(params.size(), 0.0);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    est.gradient[mask[j]] = c.mean[j];
    est.std_error[mask[j]] = c.std_error[j];
  }
  return est;
}

CombinedGrad combine_replicates(std::span<const ReplicateGrad> reps, const GradConfig& gcfg,
                                double initial_baseline) {
  if (reps.empty()) throw ConfigError("combine_replicates: no replicates");
  const std::size_t D = reps.front().pathwise.size();
  const double R = static_cast<double>(reps.size());
  double baseline = initial_baseline;
  std::vector<double> sum(D, 0.0), sq(D, 0.0);
  double elbo_sum = 0.0;
  for (const auto& rep : reps) {
    if (rep.pathwise.size() != D || (gcfg.reinforce && rep.score.size() != D)) {
      throw ContractError("combine_replicates: replicate sizes differ");
    }
    const double signal = rep.elbo - (gcfg.use_baseline ? baseline : 0.0);
    for (std::size_t j = 0; j < D; ++j) {
      double g = rep.pathwise[j];
      if (gcfg.reinforce) g += signal * rep.score[j];
      sum[j] += g;
      sq[j] += g * g;
    }
    elbo_sum += rep.elbo;
    if (gcfg.use_baseline) baseline = gcfg.baseline_decay * baseline + (1.0 - gcfg.baseline_decay) * rep.elbo;
  }
  CombinedGrad out;
  out.mean.resize(D);
  out.std_error.assign(D, 0.0);
  for (std::size_t j = 0; j < D; ++j) {
    out.mean[j] = sum[j] / R;
    if (reps.size() > 1) {
      const double var = std::max(0.0, (sq[j] - R * out.mean[j] * out.mean[j]) / (R - 1.0));
      out.std_error[j] = std::sqrt(var / R);
    }
  }
  out.mean_elbo = elbo_sum / R;
  out.baseline = baseline;
  return out;
}

std::vector<double> finite_diff_grad(const ModelParams& params, const ModelSpec& spec, const SlotSequence& episode,
                                     const EngineConfig& cfg, double eps, std::uint64_t seed,
                                     std::span<const std::size_t> mask) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: eps must be > 0");
  std::vector<double> g(params.size(), 0.0);
  const auto idx = mask.empty() ? default_mask(params) : std::vector<std::size_t>(mask.begin(), mask.end());
  for (std::size_t i : idx) {
    ModelParams hi = params, lo = params;
    hi[i] += eps;
    lo[i] -= eps;
    g[i] = (elbo(episode, spec, hi, cfg, seed) - elbo(episode, spec, lo, cfg, seed)) / (2.0 * eps);
  }
  return g;
}

}  // namespace swb::learning
