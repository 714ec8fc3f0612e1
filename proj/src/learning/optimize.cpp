#include "swb/learning/optimize.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"

namespace swb::learning {

namespace {
constexpr std::uint64_t kTrainTag = 0x7A1;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train: " + msg); };
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("moment decays must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (steps < 0) fail("steps must be >= 0");
  if (num_particles < 1) fail("num_particles must be >= 1");
  if (num_mc < 1) fail("num_mc must be >= 1");
}

TrainResult optimize(const model::ModelParams& init, const model::ModelSpec& spec,
                     const std::vector<SlotSequence>& dataset, const engine::EngineConfig& engine_cfg,
                     const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  engine::EngineConfig ecfg = engine_cfg;
  ecfg.num_particles = cfg.num_particles;
  GradConfig g = cfg.grad;
  g.num_mc = cfg.num_mc;
  g.mask = mask_from_names(init, cfg.trainable);

  TrainResult out;
  out.params = init;
  out.trained = g.mask;
  model::ModelParams params = init;
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<double> grad(params.size(), 0.0);
    double loss = 0.0;
    bool finite = true;
    // Episodes are independent; each fills its own slot and the sums below
    // run in episode order.
    std::vector<GradEstimate> ests(dataset.size());
    std::vector<char> failed(dataset.size(), 0);
    std::vector<std::exception_ptr> errors(dataset.size());
    GradConfig ge = g;
    ge.exec = engine::ExecPolicy::kSerial;
    const int E = static_cast<int>(dataset.size());
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < E; ++e) {
      const auto ue = static_cast<std::uint64_t>(e);
      const std::uint64_t s = cfg.fixed_seeds ? Rng::derive_seed(seed, {kTrainTag, ue})
                                              : Rng::derive_seed(seed, {kTrainTag, ue, static_cast<std::uint64_t>(step)});
      try {
        ests[static_cast<std::size_t>(e)] = grad_elbo(params, spec, dataset[static_cast<std::size_t>(e)], ecfg, ge, s);
      } catch (const NumericalError&) {
        failed[static_cast<std::size_t>(e)] = 1;
      } catch (...) {
        errors[static_cast<std::size_t>(e)] = std::current_exception();
      }
    }
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
    for (std::size_t e = 0; e < dataset.size(); ++e) {
      if (failed[e]) {
        finite = false;
        continue;
      }
      loss += ests[e].mean_elbo / static_cast<double>(dataset.size());
      for (std::size_t i : g.mask) grad[i] += ests[e].gradient[i] / static_cast<double>(dataset.size());
    }
    for (std::size_t i : g.mask) finite = finite && std::isfinite(grad[i]);
    if (!finite || !std::isfinite(loss)) {
      out.diverged = true;
      break;
    }
    out.elbo_curve.push_back(loss);
    std::vector<double> snapshot;
    for (std::size_t i : g.mask) snapshot.push_back(params[i]);
    out.trajectory.push_back(std::move(snapshot));
    const double t = step + 1.0;
    model::ModelParams next = params;
    for (std::size_t i : g.mask) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mhat = m1[i] / (1.0 - std::pow(cfg.beta1, t));
      const double vhat = m2[i] / (1.0 - std::pow(cfg.beta2, t));
      next[i] += cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);  // ascent on the ELBO
    }
    bool ok = true;
    for (double v : next.values()) ok = ok && std::isfinite(v);
    if (!ok) {
      out.diverged = true;
      break;
    }
    params = std::move(next);
    out.steps_run = step + 1;
  }
  out.params = params;
  return out;
}

std::vector<double> smooth(const std::vector<double>& xs, int window) {
  if (window < 1) throw ConfigError("smooth: window must be >= 1");
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += xs[i];
    if (i >= static_cast<std::size_t>(window)) acc -= xs[i - static_cast<std::size_t>(window)];
    const std::size_t n = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

}  // namespace swb::learning
