#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swb/learning/elbo.hpp"

namespace swb::learning {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps = 100;
  int num_particles = 10;
  int num_mc = 1;  // replicates per episode per step
  /// Reuse the same filter seeds at every step (common random numbers).
  bool fixed_seeds = false;
  std::vector<std::string> trainable;  // parameter names; empty means the default mask
  GradConfig grad;

  void validate() const;
};

struct TrainResult {
  model::ModelParams params;
  std::vector<double> elbo_curve;  // mean ELBO over the dataset at each step, before the update
  std::vector<std::size_t> trained;  // flat indices of the trained entries
  std::vector<std::vector<double>> trajectory;  // their values at each step, before the update
  bool diverged = false;
  int steps_run = 0;
};

/// Adam ascent on the mean ELBO of the dataset. A non-finite loss or gradient
/// stops training and returns the last finite parameters.
TrainResult optimize(const model::ModelParams& init, const model::ModelSpec& spec,
                     const std::vector<SlotSequence>& dataset, const engine::EngineConfig& engine_cfg,
                     const TrainConfig& cfg, std::uint64_t seed);

/// Moving average with a trailing window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& xs, int window);

}  // namespace swb::learning
