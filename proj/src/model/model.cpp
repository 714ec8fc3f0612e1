#include "swb/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <type_traits>

#include "swb/core/error.hpp"
#include "swb/core/scalar_math.hpp"

namespace swb::model {

using world::LaneGeometry;
using world::Slot;
using world::SlotSet;

namespace {

template <class S>
S log_normal2(const Vec2T<S>& x, const Vec2T<S>& mean, const S& sigma) {
  return log_normal(x.x, mean.x, sigma) + log_normal(x.y, mean.y, sigma);
}

template <class S>
std::vector<double> values_of(const std::vector<S>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const S& x : xs) out.push_back(value(x));
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) s += a[i] * b[i];
  return s;
}

/// Proposal over colors: the slot's appearance mixed with a little uniform mass.
std::vector<double> color_proposal(const Slot& slot, const ModelSpec& spec) {
  const double eta = spec.color_mixture;
  const double u = eta / spec.palette_size;
  std::vector<double> q(static_cast<std::size_t>(spec.palette_size), u);
  for (std::size_t i = 0; i < q.size() && i < slot.appearance.size(); ++i) q[i] += (1.0 - eta) * slot.appearance[i];
  return q;
}

/// Fills the bookkeeping of `next` after a move out of `prev`.
template <class S>
void finish_move(const ObjectState<S>& prev, ObjectState<S>& next, int branch, int color,
                 const Vec2T<S>& mean, const Vec2T<S>& eps, const ModelSpec& spec) {
  const LaneGeometry& geo = spec.geometry;
  next.velocity = mean - prev.position;
  next.dynamics_noise = eps;
  next.lane_phase = geo.next_phase(prev.lane_phase);
  next.branch = geo.wraps_after(prev.lane_phase) ? -1 : branch;
  if (color == prev.color) {
    next.color = prev.color;
    next.partner = prev.partner;
    next.color_age = prev.color_age + 1;
  } else {
    next.color = color;
    next.partner = prev.color;
    next.color_age = 0;
  }
  next.appearance = color_appearance(next.color, spec);
}

template <class S>
ObjectState<S> discovered_state(const Vec2T<S>& pos, const Vec2T<S>& eps, int color, const ModelSpec& spec) {
  const LaneGeometry& geo = spec.geometry;
  ObjectState<S> s;
  s.position = pos;
  s.dynamics_noise = eps;
  s.lane_phase = geo.phase_from_y(std::clamp(value(pos.y), 0.0, 1.0));
  s.branch = geo.is_node_phase(s.lane_phase) ? -1 : (geo.snapped_velocity(value(pos.x), s.lane_phase) > 0.0 ? 1 : 0);
  const double vx = s.branch < 0 ? 0.0 : geo.branch_velocity(geo.segment_of(s.lane_phase), s.branch == 1);
  s.velocity = {S(vx), S(geo.speed())};
  s.color = color;
  s.partner = -1;
  s.color_age = 0;
  s.track_count = 1;
  s.appearance = color_appearance(color, spec);
  return s;
}

}  // namespace

// ------------------------------------------------------------------ setup

ModelSpec ModelSpec::from_env(const world::EnvConfig& env) {
  ModelSpec s;
  s.geometry = env.geometry();
  s.palette_size = env.palette_size;
  return s;
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
  if (geometry.levels < 1 || geometry.branch_interval < 1) fail("lane geometry must be positive");
  if (palette_size < 2) fail("palette_size must be >= 2");
  if (summary_dim < 1) fail("summary_dim must be >= 1");
  if (!(appearance_smoothing >= 0.0 && appearance_smoothing < 1.0)) fail("appearance_smoothing must be in [0, 1)");
  if (!(color_mixture > 0.0 && color_mixture < 1.0)) fail("color_mixture must be in (0, 1)");
  if (!(null_visibility > 0.0 && null_visibility < 1.0)) fail("null_visibility must be in (0, 1)");
  if (!(interaction_bandwidth > 0.0)) fail("interaction_bandwidth must be > 0");
}

template <class S>
Model<S> make_model(const ModelSpec& spec, const ModelParams& params, std::span<const std::size_t> tangent) {
  spec.validate();
  params.validate();
  if (params.dims() != spec.dims()) throw ConfigError("model: parameter dimensions do not match the model spec");
  if (tangent.size() > kTangentSize) throw ContractError("make_model: too many tangent directions");
  std::vector<S> v;
  v.reserve(params.size());
  for (double x : params.values()) v.emplace_back(x);
  if constexpr (std::is_same_v<S, Dual>) {
    for (std::size_t j = 0; j < tangent.size(); ++j) v[tangent[j]] = Dual::variable(params[tangent[j]], j);
  }
  Model<S> m;
  m.spec = spec;
  auto& th = m.th;
  th.sigma_prior = softplus(v[ModelParams::kPositionNoisePrior]);
  th.sigma_post = softplus(v[ModelParams::kPositionNoisePost]);
  th.blend_logit = v[ModelParams::kProposalBlendLogit];
  th.sigma_obs = softplus(v[ModelParams::kObservationNoise]);
  th.stay_logit = v[ModelParams::kVisibilityStayLogit];
  th.return_logit = v[ModelParams::kVisibilityReturnLogit];
  th.presence_weight = softplus(v[ModelParams::kVisibilityPresenceWeight]);
  th.visibility_bias = v[ModelParams::kVisibilityBias];
  th.discovery_logit = v[ModelParams::kDiscoveryLogit];
  std::vector<S> period(v.begin() + ModelParams::kColorPeriodLogits,
                        v.begin() + ModelParams::kColorPeriodLogits + kNumColorPeriods);
  const auto lp = log_softmax(period);
  std::copy(lp.begin(), lp.end(), th.log_period.begin());
  th.branch_logit = v[ModelParams::kBranchProbLogit];
  th.temperature = v[ModelParams::kMatchTemperature];
  for (int i = 0; i < kNumMatchWeights; ++i) th.match_w[i] = v[ModelParams::kMatchFeatureWeights + i];
  th.miss_penalty = v[params.miss_index()];
  th.clutter_penalty = v[params.clutter_index()];
  const auto rnn = params.values().subspan(ModelParams::kRnnWeights, params.rnn_size());
  m.rnn.assign(rnn.begin(), rnn.end());
  return m;
}

// --------------------------------------------------------------- dynamics

std::vector<double> color_appearance(int color, const ModelSpec& spec) {
  const double eps = spec.appearance_smoothing;
  std::vector<double> a(static_cast<std::size_t>(spec.palette_size), eps / spec.palette_size);
  a[static_cast<std::size_t>(color)] += 1.0 - eps;
  return a;
}

template <class S>
std::vector<S> color_transition(const ObjectState<S>& s, const Model<S>& m) {
  const int P = m.spec.palette_size;
  const double eta = m.spec.color_mixture;
  // Hazard of ending the current color run after `run` steps, from the
  // distribution over run lengths.
  const int idx = s.color_age + 1 - kMinColorPeriod;
  S h(0.0);
  if (idx >= kNumColorPeriods) {
    h = S(1.0);
  } else if (idx >= 0) {
    std::vector<S> tail(m.th.log_period.begin() + idx, m.th.log_period.end());
    h = exp(m.th.log_period[static_cast<std::size_t>(idx)] - logsumexp(tail));
  }
  std::vector<S> probs(static_cast<std::size_t>(P), S(eta / P));
  probs[static_cast<std::size_t>(s.color)] += (1.0 - eta) * (1.0 - h);
  if (s.partner >= 0) {
    probs[static_cast<std::size_t>(s.partner)] += (1.0 - eta) * h;
  } else {
    for (int c = 0; c < P; ++c) {
      if (c != s.color) probs[static_cast<std::size_t>(c)] += (1.0 - eta) * h / static_cast<double>(P - 1);
    }
  }
  return probs;
}

bool needs_branch(int phase, const LaneGeometry& geo) {
  return geo.is_node_phase(phase) && !geo.wraps_after(phase);
}

template <class S>
int current_branch(const ObjectState<S>& s, const LaneGeometry& geo) {
  if (s.branch >= 0) return s.branch;
  return geo.snapped_velocity(value(s.position.x), s.lane_phase) > 0.0 ? 1 : 0;
}

template <class S>
Vec2T<S> motion_mean(const ObjectState<S>& s, int branch, const LaneGeometry& geo) {
  if (geo.wraps_after(s.lane_phase)) return {S(0.5), s.position.y + (geo.speed() - 1.0)};
  const int seg = geo.segment_of(s.lane_phase);
  return {s.position.x + geo.branch_velocity(seg, branch == 1), s.position.y + geo.speed()};
}

template <class S>
Vec2T<S> predicted_position(const ObjectState<S>& s, const LaneGeometry& geo) {
  if (geo.wraps_after(s.lane_phase)) return motion_mean(s, 0, geo);
  if (needs_branch(s.lane_phase, geo)) return {s.position.x, s.position.y + geo.speed()};
  return motion_mean(s, current_branch(s, geo), geo);
}

template <class S>
StateDraw<S> sample_state_prior(const ObjectState<S>& prev, const Model<S>& m, Rng& rng) {
  const LaneGeometry& geo = m.spec.geometry;
  StateDraw<S> out;
  out.log_discrete = S(0.0);
  int branch = 0;
  if (needs_branch(prev.lane_phase, geo)) {
    branch = rng.bernoulli(value(sigmoid(m.th.branch_logit))) ? 1 : 0;
    out.log_discrete += log_bernoulli(branch == 1, m.th.branch_logit);
  } else {
    branch = current_branch(prev, geo);
  }
  const auto probs = color_transition(prev, m);
  const int color = rng.categorical(values_of(probs));
  out.log_discrete += log(probs[static_cast<std::size_t>(color)]);
  const Vec2T<S> eps{S(rng.normal()), S(rng.normal())};
  const Vec2T<S> mean = motion_mean(prev, branch, geo);
  out.state = prev;
  out.state.position = mean + m.th.sigma_prior * eps;
  finish_move(prev, out.state, branch, color, mean, eps, m.spec);
  out.log_density = out.log_discrete + log_normal2(out.state.position, mean, m.th.sigma_prior);
  return out;
}

template <class S>
S log_state_prior(const ObjectState<S>& prev, const ObjectState<S>& next, const Model<S>& m) {
  const LaneGeometry& geo = m.spec.geometry;
  S lp(0.0);
  int branch = 0;
  if (needs_branch(prev.lane_phase, geo)) {
    branch = next.branch;
    if (branch < 0) return S(kNegInf);
    lp += log_bernoulli(branch == 1, m.th.branch_logit);
  } else {
    branch = current_branch(prev, geo);
  }
  const auto probs = color_transition(prev, m);
  lp += log(probs[static_cast<std::size_t>(next.color)]);
  lp += log_normal2(next.position, motion_mean(prev, branch, geo), m.th.sigma_prior);
  return lp;
}

template <class S>
S visibility_prior_logit(bool prev_visible, const Model<S>& m) {
  return prev_visible ? m.th.stay_logit : m.th.return_logit;
}

template <class S>
std::pair<ObjectFile<S>, S> dynamics_prior(const ObjectFile<S>& file, const Model<S>& m, Rng& rng) {
  if (!file.active()) return {file, S(0.0)};
  const S vlogit = visibility_prior_logit(file.visible, m);
  const bool vis = rng.bernoulli(value(sigmoid(vlogit)));
  auto draw = sample_state_prior(file.state, m, rng);
  ObjectFile<S> next = file;
  next.visible = vis;
  next.state = std::move(draw.state);
  next.invisible_steps = vis ? 0 : file.invisible_steps + 1;
  next.summary = rnn_update(file.summary, next.state, vis, m.rnn, m.spec.summary_dim);
  return {std::move(next), log_bernoulli(vis, vlogit) + draw.log_density};
}

// -------------------------------------------------------------- proposals

template <class S>
StateDraw<S> posterior_proposal(const ObjectFile<S>& file, const Slot& slot, const Model<S>& m, Rng& rng) {
  if (slot.is_null || slot.is_padding()) throw ContractError("posterior_proposal: slot must be a detection");
  const LaneGeometry& geo = m.spec.geometry;
  const ObjectState<S>& prev = file.state;
  const Vec2T<S> u{S(slot.position.x), S(slot.position.y)};
  StateDraw<S> out;
  out.log_discrete = S(0.0);
  int branch = 0;
  if (needs_branch(prev.lane_phase, geo)) {
    // Which child the slot looks closer to, under observation plus proposal noise.
    const S var = m.th.sigma_obs * m.th.sigma_obs + m.th.sigma_post * m.th.sigma_post;
    const S l0 = -squared_norm(u - motion_mean(prev, 0, geo)) / (2.0 * var);
    const S l1 = -squared_norm(u - motion_mean(prev, 1, geo)) / (2.0 * var);
    const S q_logit = l1 - l0;
    branch = rng.bernoulli(value(sigmoid(q_logit))) ? 1 : 0;
    out.log_discrete += log_bernoulli(branch == 1, q_logit);
  } else {
    branch = current_branch(prev, geo);
  }
  const auto q_color = color_proposal(slot, m.spec);
  const int color = rng.categorical(q_color);
  out.log_discrete += std::log(q_color[static_cast<std::size_t>(color)]);

  const Vec2T<S> eps{S(rng.normal()), S(rng.normal())};
  const Vec2T<S> mean = motion_mean(prev, branch, geo);
  const double track_gain = 1.0 / (prev.track_count + 1.0);
  const S lambda = std::max(value(sigmoid(m.th.blend_logit)), track_gain) == track_gain
                       ? S(track_gain)
                       : sigmoid(m.th.blend_logit);
  const S sigma = sqrt(m.th.sigma_post * m.th.sigma_post + track_gain * m.th.sigma_obs * m.th.sigma_obs);
  const Vec2T<S> center = (1.0 - lambda) * mean + lambda * u;
  out.state = prev;
  out.state.position = center + sigma * eps;
  finish_move(prev, out.state, branch, color, mean, eps, m.spec);
  out.state.track_count = prev.track_count + 1;
  out.log_density = out.log_discrete + log_normal2(out.state.position, center, sigma);
  return out;
}

template <class S>
StateDraw<S> discovery_proposal(const Slot& slot, const Model<S>& m, Rng& rng) {
  if (slot.is_null || slot.is_padding()) throw ContractError("discovery_proposal: slot must be a detection");
  StateDraw<S> out;
  const auto q_color = color_proposal(slot, m.spec);
  const int color = rng.categorical(q_color);
  out.log_discrete = S(std::log(q_color[static_cast<std::size_t>(color)]));
  const Vec2T<S> eps{S(rng.normal()), S(rng.normal())};
  const Vec2T<S> u{S(slot.position.x), S(slot.position.y)};
  const Vec2T<S> pos = u + m.th.sigma_obs * eps;
  out.state = discovered_state(pos, eps, color, m.spec);
  out.log_density = out.log_discrete + log_normal2(pos, u, m.th.sigma_obs);
  return out;
}

template <class S>
StateDraw<S> discovery_prior_sample(const Model<S>& m, Rng& rng) {
  const std::vector<double> flat(static_cast<std::size_t>(m.spec.palette_size), 1.0);
  const int color = rng.categorical(flat);
  const double x = rng.uniform();
  const double y = rng.uniform();
  StateDraw<S> out;
  out.state = discovered_state(Vec2T<S>{S(x), S(y)}, Vec2T<S>{}, color, m.spec);
  out.log_discrete = log_discovery_prior(m);
  out.log_density = out.log_discrete;
  return out;
}

template <class S>
S log_discovery_prior(const Model<S>& m) {
  return S(-std::log(static_cast<double>(m.spec.palette_size)));
}

template <class S>
S visibility_posterior_logit(const Slot& slot, const Model<S>& m) {
  if (slot.is_null) return S(logit(m.spec.null_visibility));
  return m.th.presence_weight * slot.presence + m.th.visibility_bias;
}

template <class S>
S visibility_posterior(const ObjectFile<S>&, const Slot& slot, const Model<S>& m) {
  return sigmoid(visibility_posterior_logit(slot, m));
}

// ------------------------------------------------------------- recurrence

template <class S>
std::vector<double> rnn_update(const std::vector<double>& h, const ObjectState<S>& z, bool visible,
                               std::span<const double> weights, int summary_dim) {
  const auto H = static_cast<std::size_t>(summary_dim);
  if (h.size() != H) throw ConfigError("rnn_update: summary has dimension " + std::to_string(h.size()) +
                                       ", expected " + std::to_string(H));
  std::vector<double> x(h);
  x.push_back(value(z.position.x));
  x.push_back(value(z.position.y));
  x.push_back(value(z.velocity.x));
  x.push_back(value(z.velocity.y));
  x.insert(x.end(), z.appearance.begin(), z.appearance.end());
  x.push_back(visible ? 1.0 : 0.0);
  x.push_back(1.0);
  if (weights.size() != H * x.size()) {
    throw ConfigError("rnn_update: weight matrix does not match summary and feature dimensions");
  }
  std::vector<double> out(H);
  for (std::size_t i = 0; i < H; ++i) {
    const double* row = weights.data() + i * x.size();
    out[i] = std::tanh(std::inner_product(x.begin(), x.end(), row, 0.0));
  }
  return out;
}

// --------------------------------------------------------------- matching

template <class S>
std::array<S, kInteractionDim> interaction_feature(const ObjectFile<S>& file, const Slot& slot,
                                                   const ModelSpec& spec) {
  std::array<S, kInteractionDim> f{S(0.0), S(0.0), S(0.0)};
  if (!file.active()) return f;
  const Vec2T<S> u{S(slot.position.x), S(slot.position.y)};
  const S d2 = squared_norm(predicted_position(file.state, spec.geometry) - u);
  const double bw = spec.interaction_bandwidth;
  const S k = exp(-d2 / (2.0 * bw * bw));
  f[0] = k;
  f[1] = k * dot(file.state.appearance, slot.appearance);
  f[2] = S(1.0);
  return f;
}

template <class S>
std::array<S, kInteractionDim> interaction_summary(std::span<const ObjectFile<S>> files, const Slot& slot,
                                                   const ModelSpec& spec) {
  std::array<S, kInteractionDim> sum{S(0.0), S(0.0), S(0.0)};
  for (const auto& f : files) {
    const auto g = interaction_feature(f, slot, spec);
    for (int i = 0; i < kInteractionDim; ++i) sum[i] += g[i];
  }
  return sum;
}

int active_heads(const SlotSet& slots) {
  int a = 0;
  for (const auto& s : slots) a += s.is_padding() ? 0 : 1;
  return a;
}

template <class S>
std::vector<S> match_logits(const ObjectFile<S>& file, const SlotSet& slots,
                            std::span<const std::array<S, kInteractionDim>> summaries, const Model<S>& m,
                            int inactive_rank) {
  if (summaries.size() != slots.size()) throw ContractError("match_logits: one summary per slot required");
  const auto& w = m.th.match_w;
  const S& T = m.th.temperature;
  std::vector<S> logits;
  logits.reserve(slots.size());
  const Vec2T<S> pred = file.active() ? predicted_position(file.state, m.spec.geometry) : Vec2T<S>{};
  const auto self = [&](const Slot& slot) { return interaction_feature(file, slot, m.spec)[0]; };
  int ordinal = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Slot& s = slots[i];
    if (s.is_null) {
      logits.push_back(T * w[kWeightNull]);
      continue;
    }
    if (s.is_padding()) {
      logits.push_back(S(kNegInf));
      continue;
    }
    const S crowd = summaries[i][0];
    if (file.active()) {
      const Vec2T<S> u{S(s.position.x), S(s.position.y)};
      const S score = -w[kWeightDistance] * squared_norm(pred - u) +
                      w[kWeightAppearance] * dot(file.state.appearance, s.appearance) -
                      w[kWeightCompetition] * (crowd - self(s));
      logits.push_back(T * score);
    } else {
      const double pref = ordinal == inactive_rank ? 1.0 : -1.0;
      logits.push_back(T * (w[kWeightDiscovery] * pref - w[kWeightCompetition] * crowd));
    }
    ++ordinal;
  }
  return logits;
}

template <class S>
S slot_loglik(const ObjectState<S>& state, const Slot& slot, const Model<S>& m) {
  const Vec2T<S> u{S(slot.position.x), S(slot.position.y)};
  const double app = dot(state.appearance, slot.appearance);
  if (!(app > 0.0)) return S(kNegInf);
  return log_normal2(u, state.position, m.th.sigma_obs) + std::log(app);
}

template <class S>
S observation_loglik(std::span<const ObjectFile<S>> files, const SlotSet& slots, std::span<const int> matches,
                     std::span<const double> match_probs, const Model<S>& m) {
  if (matches.size() != files.size() || match_probs.size() != files.size()) {
    throw ContractError("observation_loglik: one match per file required");
  }
  S total(0.0);
  std::vector<int> winner(slots.size(), -1);
  for (std::size_t n = 0; n < files.size(); ++n) {
    if (!files[n].active() || !files[n].visible) continue;
    const int mi = matches[n];
    if (mi <= 0) {
      total += m.th.miss_penalty;
      continue;
    }
    int& wi = winner[static_cast<std::size_t>(mi)];
    if (wi < 0) {
      wi = static_cast<int>(n);
    } else if (match_probs[n] > match_probs[static_cast<std::size_t>(wi)]) {
      total += m.th.miss_penalty;
      wi = static_cast<int>(n);
    } else {
      total += m.th.miss_penalty;
    }
  }
  for (std::size_t i = 1; i < slots.size(); ++i) {
    if (slots[i].is_padding()) continue;
    const int wi = winner[i];
    if (wi < 0) {
      total += m.th.clutter_penalty;
    } else {
      total += slot_loglik(files[static_cast<std::size_t>(wi)].state, slots[i], m);
    }
  }
  return total;
}

#define SWB_INSTANTIATE_MODEL(S)                                                                            \
  template Model<S> make_model<S>(const ModelSpec&, const ModelParams&, std::span<const std::size_t>);     \
  template std::vector<S> color_transition<S>(const ObjectState<S>&, const Model<S>&);                     \
  template int current_branch<S>(const ObjectState<S>&, const LaneGeometry&);                              \
  template Vec2T<S> motion_mean<S>(const ObjectState<S>&, int, const LaneGeometry&);                       \
  template Vec2T<S> predicted_position<S>(const ObjectState<S>&, const LaneGeometry&);                     \
  template StateDraw<S> sample_state_prior<S>(const ObjectState<S>&, const Model<S>&, Rng&);               \
  template S log_state_prior<S>(const ObjectState<S>&, const ObjectState<S>&, const Model<S>&);            \
  template S visibility_prior_logit<S>(bool, const Model<S>&);                                             \
  template std::pair<ObjectFile<S>, S> dynamics_prior<S>(const ObjectFile<S>&, const Model<S>&, Rng&);     \
  template StateDraw<S> posterior_proposal<S>(const ObjectFile<S>&, const Slot&, const Model<S>&, Rng&);   \
  template StateDraw<S> discovery_proposal<S>(const Slot&, const Model<S>&, Rng&);                         \
  template StateDraw<S> discovery_prior_sample<S>(const Model<S>&, Rng&);                                  \
  template S log_discovery_prior<S>(const Model<S>&);                                                      \
  template S visibility_posterior_logit<S>(const Slot&, const Model<S>&);                                  \
  template S visibility_posterior<S>(const ObjectFile<S>&, const Slot&, const Model<S>&);                  \
  template std::vector<double> rnn_update<S>(const std::vector<double>&, const ObjectState<S>&, bool,      \
                                             std::span<const double>, int);                                \
  template std::array<S, kInteractionDim> interaction_feature<S>(const ObjectFile<S>&, const Slot&,        \
                                                                 const ModelSpec&);                        \
  template std::array<S, kInteractionDim> interaction_summary<S>(std::span<const ObjectFile<S>>,           \
                                                                 const Slot&, const ModelSpec&);           \
  template std::vector<S> match_logits<S>(const ObjectFile<S>&, const SlotSet&,                            \
                                          std::span<const std::array<S, kInteractionDim>>,                 \
                                          const Model<S>&, int);                                           \
  template S slot_loglik<S>(const ObjectState<S>&, const Slot&, const Model<S>&);                          \
  template S observation_loglik<S>(std::span<const ObjectFile<S>>, const SlotSet&, std::span<const int>,   \
                                   std::span<const double>, const Model<S>&);

SWB_INSTANTIATE_MODEL(double)
SWB_INSTANTIATE_MODEL(Dual)

}  // namespace swb::model
