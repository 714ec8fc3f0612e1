#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swb/engine/engine.hpp"
#include "swb/model/model.hpp"
#include "swb/world/detector.hpp"
#include "swb/world/episode.hpp"

namespace swb::learning {

/// The observation stream of one episode.
using SlotSequence = std::vector<world::SlotSet>;

SlotSequence slots_of(const world::Episode& episode);

struct ElboTrace {
  std::vector<double> log_sum_w;  // per step
  std::vector<engine::StepTrace> steps;  // filled when requested
  double elbo = 0.0;
};

template <class S>
struct ElboRun {
  S elbo{};
  S score{};  // Σ log q over every discrete draw of the run
  ElboTrace trace;
};

/// Filters the whole episode and returns (1/T) Σ_t log Σ_k w_t^k.
template <class S>
ElboRun<S> run_elbo(const SlotSequence& episode, const model::Model<S>& m, const engine::EngineConfig& cfg,
                    std::uint64_t seed, bool keep_steps = false);

double elbo(const SlotSequence& episode, const model::ModelSpec& spec, const model::ModelParams& params,
            const engine::EngineConfig& cfg, std::uint64_t seed, ElboTrace* trace = nullptr);

struct GradConfig {
  int num_mc = 100;
  /// Parameter indices to differentiate; empty means every entry outside the
  /// recurrent weights (which never reach a density).
  std::vector<std::size_t> mask;
  bool reinforce = true;
  bool use_baseline = true;
  double baseline_decay = 0.99;
  engine::ExecPolicy exec = engine::ExecPolicy::kParallel;
};

struct GradEstimate {
  std::vector<double> gradient;  // aligned with ModelParams, zero outside the mask
  std::vector<double> std_error;
  std::vector<std::size_t> mask;
  int num_samples = 0;
  double mean_elbo = 0.0;
  double baseline = 0.0;  // baseline after the last replicate
};

/// Seed used by replicate r of grad_elbo, so oracles can reproduce it.
std::uint64_t replicate_seed(std::uint64_t seed, int r);

std::vector<std::size_t> default_mask(const model::ModelParams& params);
std::vector<std::size_t> mask_from_names(const model::ModelParams& params, const std::vector<std::string>& names);

/// One replicate: the ELBO value, its pathwise derivative and the derivative
/// of the summed discrete log q, over the masked entries.
struct ReplicateGrad {
  double elbo = 0.0;
  std::vector<double> pathwise;
  std::vector<double> score;
};

ReplicateGrad replicate_grad(const SlotSequence& episode, const model::ModelSpec& spec,
                             const model::ModelParams& params, const engine::EngineConfig& cfg,
                             std::span<const std::size_t> mask, std::uint64_t seed);

struct CombinedGrad {
  std::vector<double> mean;
  std::vector<double> std_error;
  double mean_elbo = 0.0;
  double baseline = 0.0;
};

/// Per-replicate gradient pathwise + (elbo - b) * score, averaged. The
/// baseline b starts at `initial_baseline` and is an EMA of the replicates
/// before the current one, so it never depends on the sample it scales.
CombinedGrad combine_replicates(std::span<const ReplicateGrad> reps, const GradConfig& gcfg,
                                double initial_baseline);

/// Pathwise derivatives for Gaussian latents plus score-function terms for the
/// discrete draws, with the episode ELBO minus an EMA baseline as the learning
/// signal. Replicates run in parallel; the baseline is applied in replicate
/// order afterwards, so the result does not depend on scheduling.
GradEstimate grad_elbo(const model::ModelParams& params, const model::ModelSpec& spec, const SlotSequence& episode,
                       const engine::EngineConfig& cfg, const GradConfig& gcfg, std::uint64_t seed);

/// Central differences of elbo() with the same seed on both sides.
std::vector<double> finite_diff_grad(const model::ModelParams& params, const model::ModelSpec& spec,
                                     const SlotSequence& episode, const engine::EngineConfig& cfg, double eps,
                                     std::uint64_t seed, std::span<const std::size_t> mask);

}  // namespace swb::learning
