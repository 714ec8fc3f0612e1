#include "swb/engine/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/scalar_math.hpp"

namespace swb::engine {

using model::ModelSpec;
using world::Slot;
using world::SlotSet;

namespace {

constexpr std::uint64_t kResampleTag = 0xFFFFFFFFULL;
constexpr std::uint64_t kRolloutTag = 0x5011;

template <class S>
std::vector<double> values_of(const std::vector<S>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const S& x : xs) out.push_back(value(x));
  return out;
}

template <class S>
struct ParticleStep {
  Particle<S> particle;
  ParticleTrace trace;
  S increment{};
  S score{};
};

template <class S>
ParticleStep<S> step_particle(const Particle<S>& prev, const SlotSet& slots, const Model<S>& m,
                              const EngineConfig& cfg, Rng& rng) {
  const std::span<const ObjectFile<S>> files(prev.files);
  ParticleStep<S> out;
  out.particle.next_id = prev.next_id;
  const auto draw = sample_matches(files, slots, m, cfg.proposal, rng);

  S increment(0.0);
  S score(0.0);
  out.trace.files.resize(files.size());
  for (std::size_t n = 0; n < files.size(); ++n) {
    auto up = update_file(files[n], slots, draw.matches[n], m, cfg, out.particle.next_id, rng);
    increment += (draw.log_p[n] - draw.log_q[n]) + (up.log_p_vis - up.log_q_vis) + (up.log_p_state - up.log_q_state);
    score += draw.log_q[n] + up.log_q_discrete;
    FileTrace& ft = out.trace.files[n];
    ft.match = draw.matches[n];
    ft.log_q_match = value(draw.log_q[n]);
    ft.log_p_match = value(draw.log_p[n]);
    ft.visible = up.file.visible;
    ft.log_q_vis = value(up.log_q_vis);
    ft.log_p_vis = value(up.log_p_vis);
    ft.log_q_state = value(up.log_q_state);
    ft.log_p_state = value(up.log_p_state);
    ft.discovered = up.discovered;
    ft.deleted = up.deleted;
    ft.id = up.file.id.value_or(-1);
    out.particle.files.push_back(std::move(up.file));
  }
  const S obs = model::observation_loglik(std::span<const ObjectFile<S>>(out.particle.files), slots,
                                          std::span<const int>(draw.matches), std::span<const double>(draw.probs), m);
  out.trace.obs_loglik = value(obs);
  out.increment = increment + obs;
  out.score = score;
  return out;
}

}  // namespace

void EngineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("engine: " + msg); };
  if (num_particles < 1) fail("num_particles must be >= 1");
  if (num_files < 1) fail("num_files must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must be in [0, 1]");
  if (!(ess_threshold >= 0.0 && ess_threshold <= 1.0)) fail("ess_threshold must be in [0, 1]");
  if (delete_after_invisible < 0) fail("delete_after_invisible must be >= 0");
}

Rng particle_stream(std::uint64_t seed, int t, int k) {
  return Rng::stream(seed, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k)});
}

Rng resample_stream(std::uint64_t seed, int t) {
  return Rng::stream(seed, {static_cast<std::uint64_t>(t), kResampleTag});
}

template <class S>
Belief<S> init_belief(int K, int N, const ModelSpec& spec) {
  if (K < 1 || N < 1) throw ConfigError("init_belief: K and N must be >= 1");
  ObjectFile<S> blank;
  blank.summary.assign(static_cast<std::size_t>(spec.summary_dim), 0.0);
  blank.state.appearance.assign(static_cast<std::size_t>(spec.palette_size), 1.0 / spec.palette_size);
  Particle<S> p;
  p.files.assign(static_cast<std::size_t>(N), blank);
  Belief<S> b;
  b.particles.assign(static_cast<std::size_t>(K), p);
  b.log_weights.assign(static_cast<std::size_t>(K), S(-std::log(static_cast<double>(K))));
  return b;
}

template <class S>
MatchDraw<S> sample_matches(std::span<const ObjectFile<S>> files, const SlotSet& slots, const Model<S>& m,
                            ProposalMode mode, Rng& rng) {
  if (slots.empty() || !slots[0].is_null) throw ContractError("sample_matches: slot 0 must be the null slot");
  MatchDraw<S> out;
  const int A = model::active_heads(slots);
  const S log_prior(-std::log(static_cast<double>(A)));
  if (mode == ProposalMode::kPrior) {
    std::vector<double> flat(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) flat[i] = slots[i].is_padding() ? 0.0 : 1.0;
    for (std::size_t n = 0; n < files.size(); ++n) {
      out.matches.push_back(rng.categorical(flat));
      out.probs.push_back(1.0 / A);
      out.log_q.push_back(log_prior);
      out.log_p.push_back(log_prior);
    }
    return out;
  }
  std::vector<std::array<S, model::kInteractionDim>> summaries;
  summaries.reserve(slots.size());
  for (const Slot& s : slots) summaries.push_back(model::interaction_summary(files, s, m.spec));
  int inactive_rank = 0;
  for (std::size_t n = 0; n < files.size(); ++n) {
    const auto logits = model::match_logits<S>(files[n], slots, std::span<const std::array<S, model::kInteractionDim>>(summaries), m,
                                            files[n].active() ? 0 : inactive_rank);
    if (!files[n].active()) ++inactive_rank;
    const auto lq = log_softmax(logits);
    std::vector<double> q(lq.size());
    for (std::size_t i = 0; i < lq.size(); ++i) q[i] = std::exp(value(lq[i]));
    const int mi = rng.categorical(q);
    out.matches.push_back(mi);
    out.probs.push_back(q[static_cast<std::size_t>(mi)]);
    out.log_q.push_back(lq[static_cast<std::size_t>(mi)]);
    out.log_p.push_back(log_prior);
  }
  return out;
}

template <class S>
FileUpdate<S> update_file(const ObjectFile<S>& file, const SlotSet& slots, int match, const Model<S>& m,
                          const EngineConfig& cfg, int& next_id, Rng& rng) {
  if (match < 0 || match >= static_cast<int>(slots.size()) || slots[static_cast<std::size_t>(match)].is_padding()) {
    throw ContractError("update_file: match index does not name an active head");
  }
  const Slot& slot = slots[static_cast<std::size_t>(match)];
  const bool learned = cfg.proposal == ProposalMode::kLearned;
  FileUpdate<S> out;
  out.file = file;
  out.log_q_vis = out.log_p_vis = out.log_q_state = out.log_p_state = out.log_q_discrete = S(0.0);

  if (!file.active()) {
    if (slot.is_null) return out;
    const S p_logit = m.th.discovery_logit;
    const S q_logit = learned ? model::visibility_posterior_logit(slot, m) : p_logit;
    const bool vis = rng.bernoulli(value(sigmoid(q_logit)));
    out.log_q_vis = log_bernoulli(vis, q_logit);
    out.log_p_vis = log_bernoulli(vis, p_logit);
    out.log_q_discrete = out.log_q_vis;
    if (!vis) return out;
    auto draw = learned ? model::discovery_proposal(slot, m, rng) : model::discovery_prior_sample(m, rng);
    out.log_q_state = draw.log_density;
    out.log_p_state = model::log_discovery_prior(m);
    out.log_q_discrete += draw.log_discrete;
    out.file.id = next_id++;
    out.file.visible = true;
    out.file.invisible_steps = 0;
    out.file.state = std::move(draw.state);
    out.file.summary = model::rnn_update(std::vector<double>(file.summary.size(), 0.0), out.file.state, true,
                                         m.rnn, m.spec.summary_dim);
    out.discovered = true;
    return out;
  }

  const S p_logit = model::visibility_prior_logit(file.visible, m);
  const S q_logit = learned ? model::visibility_posterior_logit(slot, m) : p_logit;
  const bool vis = rng.bernoulli(value(sigmoid(q_logit)));
  out.log_q_vis = log_bernoulli(vis, q_logit);
  out.log_p_vis = log_bernoulli(vis, p_logit);
  out.log_q_discrete = out.log_q_vis;
  if (vis && !slot.is_null && learned) {
    auto draw = model::posterior_proposal(file, slot, m, rng);
    out.log_q_state = draw.log_density;
    out.log_p_state = model::log_state_prior(file.state, draw.state, m);
    out.log_q_discrete += draw.log_discrete;
    out.file.state = std::move(draw.state);
  } else {
    // Imagination: the state comes from the prior, so its ratio is one.
    auto draw = model::sample_state_prior(file.state, m, rng);
    if (cfg.stop_gradient_imagination) {
      draw.log_density = detach(draw.log_density);
      draw.log_discrete = detach(draw.log_discrete);
      draw.state.position = {detach(draw.state.position.x), detach(draw.state.position.y)};
      draw.state.velocity = {detach(draw.state.velocity.x), detach(draw.state.velocity.y)};
    }
    out.log_q_state = draw.log_density;
    out.log_p_state = draw.log_density;
    out.log_q_discrete += draw.log_discrete;
    out.file.state = std::move(draw.state);
  }
  out.file.visible = vis;
  out.file.invisible_steps = vis ? 0 : file.invisible_steps + 1;
  out.file.summary = model::rnn_update(file.summary, out.file.state, vis, m.rnn, m.spec.summary_dim);
  if (cfg.delete_after_invisible > 0 && out.file.invisible_steps >= cfg.delete_after_invisible) {
    out.file.id.reset();
    out.file.visible = false;
    out.file.invisible_steps = 0;
    out.deleted = true;
  }
  return out;
}

template <class S>
std::vector<S> update_weights(const std::vector<S>& prev_log_weights, const std::vector<S>& increments) {
  if (prev_log_weights.size() != increments.size()) throw ContractError("update_weights: size mismatch");
  std::vector<S> lw(increments.size());
  bool any_finite = false;
  for (std::size_t k = 0; k < lw.size(); ++k) {
    lw[k] = prev_log_weights[k] + increments[k];
    const double v = value(lw[k]);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NumericalError("belief collapse: non-finite weight for particle " + std::to_string(k));
    }
    any_finite = any_finite || v > kNegInf;
  }
  if (!any_finite) throw NumericalError("belief collapse");
  return lw;
}

template <class S>
SoftResample<S> soft_resample_weights(const std::vector<S>& log_wbar, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("soft_resample: alpha must be in [0, 1]");
  const std::size_t K = log_wbar.size();
  const double uniform = 1.0 / static_cast<double>(K);
  std::vector<double> q(K);
  for (std::size_t k = 0; k < K; ++k) q[k] = alpha * std::exp(value(log_wbar[k])) + (1.0 - alpha) * uniform;
  SoftResample<S> out;
  out.ancestors.resize(K);
  out.log_corrected_raw.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const int a = rng.categorical(q);
    out.ancestors[k] = a;
    const S& lw = log_wbar[static_cast<std::size_t>(a)];
    out.log_corrected_raw[k] = alpha == 1.0 ? S(0.0) : lw - log(alpha * exp(lw) + (1.0 - alpha) * uniform);
  }
  const S lse = logsumexp(out.log_corrected_raw);
  out.log_corrected.reserve(K);
  for (const S& r : out.log_corrected_raw) out.log_corrected.push_back(r - lse);
  return out;
}

template <class S>
ResampledBelief<S> soft_resample(const Belief<S>& belief, double alpha, Rng& rng) {
  const S lse = logsumexp(belief.log_weights);
  std::vector<S> log_wbar;
  for (const S& w : belief.log_weights) log_wbar.push_back(w - lse);
  auto rs = soft_resample_weights(log_wbar, alpha, rng);
  ResampledBelief<S> out;
  out.ancestors = rs.ancestors;
  for (int a : rs.ancestors) out.belief.particles.push_back(belief.particles[static_cast<std::size_t>(a)]);
  out.belief.log_weights = std::move(rs.log_corrected);
  for (const S& r : rs.log_corrected_raw) out.corrected_raw.push_back(std::exp(value(r)));
  return out;
}

template <class S>
StepResult<S> step_belief(const Belief<S>& belief, const SlotSet& slots, const Model<S>& m, const EngineConfig& cfg,
                          std::uint64_t seed, int t) {
  cfg.validate();
  const int K = belief.num_particles();
  if (K < 1 || belief.log_weights.size() != belief.particles.size()) {
    throw ContractError("step_belief: belief needs one log-weight per particle");
  }
  std::vector<ParticleStep<S>> steps(static_cast<std::size_t>(K));
  auto run = [&](int k) {
    Rng rng = particle_stream(seed, t, k);
    steps[static_cast<std::size_t>(k)] = step_particle(belief.particles[static_cast<std::size_t>(k)], slots, m, cfg, rng);
  };
  if (cfg.exec == ExecPolicy::kParallel && K > 1) {
    // Each particle owns its stream and output slot; exceptions are carried out
    // of the region and rethrown in particle order.
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(K));
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k) {
      try {
        run(k);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (int k = 0; k < K; ++k) run(k);
  }

  StepResult<S> out;
  StepTrace& tr = out.trace;
  tr.t = t;
  tr.prev_log_weights = values_of(belief.log_weights);
  std::vector<S> increments;
  increments.reserve(static_cast<std::size_t>(K));
  out.score = S(0.0);
  for (auto& s : steps) {
    increments.push_back(s.increment);
    out.score += s.score;
  }
  const auto log_w = update_weights(belief.log_weights, increments);
  out.log_sum_w = logsumexp(log_w);
  tr.log_sum_w = value(out.log_sum_w);
  std::vector<S> log_wbar;
  log_wbar.reserve(log_w.size());
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    steps[k].trace.log_weight = value(log_w[k]);
    log_wbar.push_back(log_w[k] - out.log_sum_w);
    tr.pre_weights.push_back(std::exp(value(log_wbar.back())));
  }
  for (auto& s : steps) tr.particles.push_back(std::move(s.trace));

  double ess = 0.0;
  for (double w : tr.pre_weights) ess += w * w;
  ess = 1.0 / ess;
  if (cfg.ess_threshold > 0.0 && ess / K >= cfg.ess_threshold) {
    tr.resampled = false;
    tr.ancestors.resize(static_cast<std::size_t>(K));
    std::iota(tr.ancestors.begin(), tr.ancestors.end(), 0);
    tr.corrected_raw = tr.pre_weights;
    tr.corrected = tr.pre_weights;
    for (auto& s : steps) out.belief.particles.push_back(std::move(s.particle));
    out.belief.log_weights = std::move(log_wbar);
    return out;
  }
  Rng rng = resample_stream(seed, t);
  auto rs = soft_resample_weights(log_wbar, cfg.alpha, rng);
  tr.ancestors = rs.ancestors;
  for (const S& r : rs.log_corrected_raw) tr.corrected_raw.push_back(std::exp(value(r)));
  for (const S& c : rs.log_corrected) tr.corrected.push_back(std::exp(value(c)));
  out.belief.particles.reserve(static_cast<std::size_t>(K));
  for (int a : rs.ancestors) out.belief.particles.push_back(steps[static_cast<std::size_t>(a)].particle);
  out.belief.log_weights = std::move(rs.log_corrected);
  return out;
}

Particle<double> prior_step(const Particle<double>& p, const Model<double>& m, Rng& rng) {
  Particle<double> next;
  next.next_id = p.next_id;
  next.files.reserve(p.files.size());
  for (const auto& f : p.files) next.files.push_back(model::dynamics_prior(f, m, rng).first);
  return next;
}

std::vector<Rollout> rollout_prior(const Belief<double>& belief, int depth, const Model<double>& m,
                                   std::uint64_t seed, int num_rollouts, ExecPolicy exec) {
  if (depth < 1) throw ConfigError("rollout_prior: depth must be >= 1");
  if (num_rollouts < 0) throw ConfigError("rollout_prior: num_rollouts must be >= 0");
  const auto w = belief.weights();
  std::vector<Rollout> out(static_cast<std::size_t>(num_rollouts));
  auto run = [&](int r) {
    Rng rng = Rng::stream(seed, {kRolloutTag, static_cast<std::uint64_t>(r)});
    Rollout& ro = out[static_cast<std::size_t>(r)];
    ro.start = rng.categorical(w);
    const Particle<double>* cur = &belief.particles[static_cast<std::size_t>(ro.start)];
    ro.states.reserve(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
      ro.states.push_back(prior_step(*cur, m, rng));
      cur = &ro.states.back();
    }
  };
  if (exec == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < num_rollouts; ++r) run(r);
  } else {
    for (int r = 0; r < num_rollouts; ++r) run(r);
  }
  return out;
}

#define SWB_INSTANTIATE_ENGINE(S)                                                                            \
  template Belief<S> init_belief<S>(int, int, const ModelSpec&);                                            \
  template MatchDraw<S> sample_matches<S>(std::span<const ObjectFile<S>>, const SlotSet&, const Model<S>&,  \
                                          ProposalMode, Rng&);                                              \
  template FileUpdate<S> update_file<S>(const ObjectFile<S>&, const SlotSet&, int, const Model<S>&,         \
                                        const EngineConfig&, int&, Rng&);                                   \
  template std::vector<S> update_weights<S>(const std::vector<S>&, const std::vector<S>&);                  \
  template SoftResample<S> soft_resample_weights<S>(const std::vector<S>&, double, Rng&);                   \
  template ResampledBelief<S> soft_resample<S>(const Belief<S>&, double, Rng&);                             \
  template StepResult<S> step_belief<S>(const Belief<S>&, const SlotSet&, const Model<S>&,                  \
                                        const EngineConfig&, std::uint64_t, int);

SWB_INSTANTIATE_ENGINE(double)
SWB_INSTANTIATE_ENGINE(Dual)

}  // namespace swb::engine
