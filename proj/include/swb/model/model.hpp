#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "swb/core/rng.hpp"
#include "swb/model/params.hpp"
#include "swb/model/types.hpp"
#include "swb/world/detector.hpp"
#include "swb/world/env.hpp"
#include "swb/world/lane_geometry.hpp"

namespace swb::model {

inline constexpr int kInteractionDim = 3;

/// Fixed structure the model shares with the world: lane tree, palette and a
/// few constants that are not trained.
struct ModelSpec {
  world::LaneGeometry geometry;
  int palette_size = 6;
  int summary_dim = 16;
  double appearance_smoothing = 0.01;  // ε_a in (1 - ε_a) onehot + ε_a / P
  double color_mixture = 1e-3;         // uniform mass mixed into color transitions and proposals
  double null_visibility = 0.005;      // visibility posterior after a null match
  double interaction_bandwidth = 0.05;

  static ModelSpec from_env(const world::EnvConfig& env);
  ModelDims dims() const { return {summary_dim, palette_size}; }
  void validate() const;
};

/// Parameters mapped to the quantities the densities use.
template <class S>
struct ModelTheta {
  S sigma_prior, sigma_post, blend_logit, sigma_obs;
  S stay_logit, return_logit, presence_weight, visibility_bias, discovery_logit;
  std::array<S, kNumColorPeriods> log_period;
  S branch_logit, temperature;
  std::array<S, kNumMatchWeights> match_w;
  S miss_penalty, clutter_penalty;
};

template <class S>
struct Model {
  ModelSpec spec;
  ModelTheta<S> th;
  std::vector<double> rnn;  // summary_dim x rnn_input_dim, row-major
};

/// Builds a model from raw parameters. For S = Dual, entry tangent[j] of the
/// parameter vector is seeded as derivative direction j.
template <class S>
Model<S> make_model(const ModelSpec& spec, const ModelParams& params,
                    std::span<const std::size_t> tangent = {});

// ---------------------------------------------------------------- dynamics

/// Probability vector over palette symbols for the next color.
template <class S>
std::vector<S> color_transition(const ObjectState<S>& s, const Model<S>& m);

/// True when the move out of `phase` starts a new segment and draws a branch bit.
bool needs_branch(int phase, const world::LaneGeometry& geo);

/// Direction of travel on the current segment; falls back to the lane nearest
/// the position when the file never saw the branch being taken.
template <class S>
int current_branch(const ObjectState<S>& s, const world::LaneGeometry& geo);

/// Mean of the next position given the branch bit used on this move.
template <class S>
Vec2T<S> motion_mean(const ObjectState<S>& s, int branch, const world::LaneGeometry& geo);

/// Where the object is expected next, averaging over an undecided branch.
template <class S>
Vec2T<S> predicted_position(const ObjectState<S>& s, const world::LaneGeometry& geo);

std::vector<double> color_appearance(int color, const ModelSpec& spec);

/// A sampled state together with the log-probability of its discrete draws.
template <class S>
struct StateDraw {
  ObjectState<S> state;
  S log_density{};
  S log_discrete{};
};

/// Samples z' ~ p(z' | z). Draw order: branch bit (node phases only), color,
/// x noise, y noise.
template <class S>
StateDraw<S> sample_state_prior(const ObjectState<S>& prev, const Model<S>& m, Rng& rng);

/// log p(next | prev) for a state produced by any of the samplers.
template <class S>
S log_state_prior(const ObjectState<S>& prev, const ObjectState<S>& next, const Model<S>& m);

template <class S>
S visibility_prior_logit(bool prev_visible, const Model<S>& m);

/// Advances a file with the generative model only: visibility from the
/// two-state chain, then the state. Inactive files pass through with log_p 0.
template <class S>
std::pair<ObjectFile<S>, S> dynamics_prior(const ObjectFile<S>& file, const Model<S>& m, Rng& rng);

// --------------------------------------------------------------- proposals

/// Samples the state of a file that is visible and matched to a non-null
/// slot. Draw order: branch bit (node phases only), color, x noise, y noise.
/// log_density is log q.
template <class S>
StateDraw<S> posterior_proposal(const ObjectFile<S>& file, const world::Slot& slot, const Model<S>& m,
                                Rng& rng);

/// State of a newly discovered object. Draw order: color, x noise, y noise.
template <class S>
StateDraw<S> discovery_proposal(const world::Slot& slot, const Model<S>& m, Rng& rng);

/// Discovery drawn from the prior instead: color, uniform x, uniform y.
template <class S>
StateDraw<S> discovery_prior_sample(const Model<S>& m, Rng& rng);

/// log p of a discovered state (flat position prior, uniform color).
template <class S>
S log_discovery_prior(const Model<S>& m);

/// Bernoulli logit of q(z^vis = 1). A null match pins it near zero.
template <class S>
S visibility_posterior_logit(const world::Slot& slot, const Model<S>& m);

template <class S>
S visibility_posterior(const ObjectFile<S>& file, const world::Slot& slot, const Model<S>& m);

// ------------------------------------------------------------ recurrence

/// h' = tanh(W [h, position, velocity, appearance, visible, 1]).
template <class S>
std::vector<double> rnn_update(const std::vector<double>& h, const ObjectState<S>& z, bool visible,
                               std::span<const double> weights, int summary_dim);

// -------------------------------------------------------------- matching

template <class S>
std::array<S, kInteractionDim> interaction_feature(const ObjectFile<S>& file, const world::Slot& slot,
                                                   const ModelSpec& spec);

/// Sum of pairwise features over files; permutation invariant.
template <class S>
std::array<S, kInteractionDim> interaction_summary(std::span<const ObjectFile<S>> files, const world::Slot& slot,
                                                   const ModelSpec& spec);

/// Logits over the M + 1 heads. `inactive_rank` is the position of this file
/// among the inactive files of its particle (ignored for active files): the
/// r-th inactive file prefers the r-th detection.
template <class S>
std::vector<S> match_logits(const ObjectFile<S>& file, const world::SlotSet& slots,
                            std::span<const std::array<S, kInteractionDim>> summaries, const Model<S>& m,
                            int inactive_rank = 0);

/// Number of heads that can be matched: the null slot plus every detection.
int active_heads(const world::SlotSet& slots);

/// log p of one observed slot under a file's state.
template <class S>
S slot_loglik(const ObjectState<S>& state, const world::Slot& slot, const Model<S>& m);

/// Slot evidence: each claimed slot is explained by its most confident visible
/// claimant; other claimants and visible null matches pay the miss penalty;
/// unclaimed detections pay the clutter penalty.
template <class S>
S observation_loglik(std::span<const ObjectFile<S>> files, const world::SlotSet& slots,
                     std::span<const int> matches, std::span<const double> match_probs, const Model<S>& m);

}  // namespace swb::model
