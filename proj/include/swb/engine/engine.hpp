#pragma once

#include <cstdint>
#include <vector>

#include "swb/core/rng.hpp"
#include "swb/model/model.hpp"
#include "swb/model/types.hpp"
#include "swb/world/detector.hpp"

namespace swb::engine {

using model::Belief;
using model::Model;
using model::ObjectFile;
using model::Particle;

enum class ProposalMode { kLearned, kPrior };
enum class ExecPolicy { kSerial, kParallel };

struct EngineConfig {
  int num_particles = 10;
  int num_files = 4;
  double alpha = 0.6;
  /// Resample only when ESS / K falls below this; 0 resamples every step.
  double ess_threshold = 0.0;
  /// Ablation: a file invisible for this many steps is deleted. 0 disables.
  int delete_after_invisible = 0;
  ProposalMode proposal = ProposalMode::kLearned;
  /// Imagined (prior-driven) states carry no derivatives when set.
  bool stop_gradient_imagination = false;
  ExecPolicy exec = ExecPolicy::kParallel;

  void validate() const;
};

struct FileTrace {
  int match = 0;
  double log_q_match = 0.0, log_p_match = 0.0;
  bool visible = false;
  double log_q_vis = 0.0, log_p_vis = 0.0;
  double log_q_state = 0.0, log_p_state = 0.0;
  bool discovered = false;
  bool deleted = false;
  int id = -1;
};

struct ParticleTrace {
  std::vector<FileTrace> files;
  double obs_loglik = 0.0;
  double log_weight = 0.0;  // log w_t^k before normalization
};

/// Everything sampled and evaluated in one belief update. Ancestors are
/// 0-based indices into the pre-resampling particles.
struct StepTrace {
  int t = 0;
  std::vector<ParticleTrace> particles;
  std::vector<double> prev_log_weights;
  std::vector<double> pre_weights;     // w̄, normalized
  std::vector<int> ancestors;
  std::vector<double> corrected_raw;   // w̄_a / q_R(a) before normalization
  std::vector<double> corrected;       // normalized, carried to the next step
  double log_sum_w = 0.0;
  bool resampled = true;
};

template <class S>
Belief<S> init_belief(int K, int N, const model::ModelSpec& spec);

template <class S>
struct MatchDraw {
  std::vector<int> matches;
  std::vector<double> probs;  // q of each chosen head, used to rank claimants
  std::vector<S> log_q;
  std::vector<S> log_p;
};

/// Draws every file's slot. Each file samples independently from its softmax
/// (or from the uniform prior over active heads when `mode` is kPrior).
template <class S>
MatchDraw<S> sample_matches(std::span<const ObjectFile<S>> files, const world::SlotSet& slots, const Model<S>& m,
                            ProposalMode mode, Rng& rng);

template <class S>
struct FileUpdate {
  ObjectFile<S> file;
  S log_q_vis{}, log_p_vis{};
  S log_q_state{}, log_p_state{};
  S log_q_discrete{};  // log q of the discrete draws, for score-function gradients
  bool discovered = false;
  bool deleted = false;
};

/// Visibility then state for one file given its match. Draw order: one
/// visibility uniform (skipped for an inactive file matched to null), then the
/// state sampler's draws.
template <class S>
FileUpdate<S> update_file(const ObjectFile<S>& file, const world::SlotSet& slots, int match, const Model<S>& m,
                          const EngineConfig& cfg, int& next_id, Rng& rng);

/// log w_t^k = log w̃_{t-1}^k + increment^k. Throws NumericalError on collapse.
template <class S>
std::vector<S> update_weights(const std::vector<S>& prev_log_weights, const std::vector<S>& increments);

template <class S>
struct SoftResample {
  std::vector<int> ancestors;
  std::vector<S> log_corrected_raw;
  std::vector<S> log_corrected;  // normalized
};

/// Ancestors a^k ~ q_R = α w̄ + (1 - α) / K, corrected weight w̄_a / q_R(a).
template <class S>
SoftResample<S> soft_resample_weights(const std::vector<S>& log_wbar, double alpha, Rng& rng);

template <class S>
struct ResampledBelief {
  Belief<S> belief;
  std::vector<int> ancestors;
  std::vector<double> corrected_raw;
};

template <class S>
ResampledBelief<S> soft_resample(const Belief<S>& belief, double alpha, Rng& rng);

template <class S>
struct StepResult {
  Belief<S> belief;
  StepTrace trace;
  S log_sum_w{};
  S score{};  // Σ log q over discrete draws, excluding ancestors
};

/// One filtering step. Particle k draws from Rng::stream(seed, {t, k});
/// resampling draws from its own stream. Serial and parallel execution give
/// identical results.
template <class S>
StepResult<S> step_belief(const Belief<S>& belief, const world::SlotSet& slots, const Model<S>& m,
                          const EngineConfig& cfg, std::uint64_t seed, int t);

Rng particle_stream(std::uint64_t seed, int t, int k);
Rng resample_stream(std::uint64_t seed, int t);

struct Rollout {
  int start = 0;
  std::vector<Particle<double>> states;  // one per simulated step
};

/// Futures under the dynamics prior only. Start particles are drawn from the
/// weights; rollout r uses its own stream, so results do not depend on threads.
std::vector<Rollout> rollout_prior(const Belief<double>& belief, int depth, const Model<double>& m,
                                   std::uint64_t seed, int num_rollouts, ExecPolicy exec = ExecPolicy::kParallel);

/// Advances one particle by the dynamics prior.
Particle<double> prior_step(const Particle<double>& p, const Model<double>& m, Rng& rng);

}  // namespace swb::engine
