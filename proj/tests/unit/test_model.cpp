#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bootstrap_filter.hpp"
#include "generators.hpp"
#include "stats.hpp"
#include "swb/core/error.hpp"
#include "swb/core/scalar_math.hpp"
#include "swb/model/model.hpp"

using namespace swb;
using namespace swb::model;
using testing::random_file;
using testing::random_slots;

namespace {

ModelSpec default_spec() { return ModelSpec::from_env(world::EnvConfig{}); }

Model<double> default_model(ModelParams p = ModelParams{}) { return make_model<double>(default_spec(), p); }

ObjectFile<double> moving_file(int phase, int branch) {
  const auto geo = default_spec().geometry;
  ObjectFile<double> f;
  f.id = 1;
  f.visible = true;
  f.summary.assign(16, 0.0);
  f.state.lane_phase = phase;
  f.state.branch = branch;
  f.state.position = {0.5 + (branch == 1 ? 1.0 : -1.0) * geo.child_offset(0) * (phase % 10) / 10.0,
                      phase * geo.speed()};
  f.state.velocity = {geo.branch_velocity(geo.segment_of(phase), branch == 1), geo.speed()};
  f.state.color = 1;
  f.state.appearance = color_appearance(1, default_spec());
  f.state.track_count = 3;
  return f;
}

double softmax_sum(const std::vector<double>& logits) {
  const auto lq = log_softmax(logits);
  double s = 0.0;
  for (double l : lq) s += std::exp(l);
  return s;
}

}  // namespace

// ------------------------------------------------------------------ core

TEST_CASE("dual numbers agree with central differences") {
  auto f = [](Dual x) { return log(1.0 + exp(2.0 * x)) * tanh(x) / sqrt(x * x + 1.0); };
  for (double x : {-1.3, 0.2, 0.9}) {
    const Dual d = f(Dual::variable(x, 0));
    const double h = 1e-6;
    CHECK(d.d[0] == doctest::Approx((f(Dual(x + h)).v - f(Dual(x - h)).v) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("scalar helpers are stable at the extremes") {
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(softplus_inverse(0.01)) == doctest::Approx(0.01));
  CHECK(sigmoid(logit(0.3)) == doctest::Approx(0.3));
  std::vector<double> xs{1000.0, 1000.0};
  CHECK(logsumexp(xs) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_normal(1.0, 1.0, 2.0) == doctest::Approx(-std::log(2.0 * std::sqrt(2.0 * std::numbers::pi))));
}

TEST_CASE("rng streams are reproducible and categorical draws follow their weights") {
  CHECK(Rng::stream(5, {1, 2}) == Rng::stream(5, {1, 2}));
  CHECK_FALSE(Rng::stream(5, {1, 2}) == Rng::stream(5, {2, 1}));
  Rng rng(9);
  const std::vector<double> w{0.1, 0.0, 0.6, 0.3};
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < 20000; ++i) counts[static_cast<std::size_t>(rng.categorical(w))] += 1.0;
  CHECK(counts[1] == 0.0);
  CHECK(testing::chi_square_p(counts, w) > 0.001);
}

// ---------------------------------------------------------------- params

TEST_CASE("parameter names resolve to their flat indices") {
  ModelParams p;
  CHECK(p.index("branch_prob_logit") == ModelParams::kBranchProbLogit);
  CHECK(p.index("match_feature_weights.2") == ModelParams::kMatchFeatureWeights + 2);
  CHECK(p.index("miss_log_penalty") == p.miss_index());
  CHECK(p.entry_name(ModelParams::kColorPeriodLogits + 1) == "color_period_logits.1");
  CHECK_THROWS_AS(p.index("nope"), ConfigError);
  CHECK(softplus(p[ModelParams::kPositionNoisePrior]) == doctest::Approx(0.002));
  CHECK(sigmoid(p[ModelParams::kBranchProbLogit]) == doctest::Approx(0.5));
}

TEST_CASE("parameters round-trip through JSON") {
  ModelParams p;
  p[3] = 1.25;
  p[p.clutter_index()] = -7.0;
  const auto back = ModelParams::from_json(p.to_json());
  CHECK(back == p);
  auto j = p.to_json();
  j["palette_size"] = 8;
  CHECK(ModelParams::from_json(j).dims().palette_size == 8);
  p[0] = std::nan("");
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("make_model rejects mismatched dimensions") {
  auto spec = default_spec();
  spec.palette_size = 8;
  CHECK_THROWS_AS(make_model<double>(spec, ModelParams{}), ConfigError);
}

TEST_CASE("softplus-mapped parameters carry the chain-rule factor") {
  ModelParams p;
  const std::size_t idx[] = {ModelParams::kPositionNoisePrior};
  const auto m = make_model<Dual>(default_spec(), p, idx);
  CHECK(m.th.sigma_prior.d[0] == doctest::Approx(sigmoid(p[ModelParams::kPositionNoisePrior])));
}

// -------------------------------------------------------------- dynamics

TEST_CASE("noise-free dynamics extrapolate by the velocity") {
  ModelParams p;
  p[ModelParams::kPositionNoisePrior] = -60.0;
  const auto m = default_model(p);
  auto f = moving_file(3, 1);
  for (int step = 0; step < 5; ++step) {
    Rng rng(static_cast<std::uint64_t>(step));
    const auto draw = sample_state_prior(f.state, m, rng);
    CHECK(draw.state.position.x == doctest::Approx(f.state.position.x + f.state.velocity.x).epsilon(1e-14));
    CHECK(draw.state.position.y == doctest::Approx(f.state.position.y + f.state.velocity.y).epsilon(1e-14));
    f.state = draw.state;
  }
}

TEST_CASE("inactive files pass through the prior unchanged") {
  const auto m = default_model();
  Rng rng(1);
  ObjectFile<double> f;
  f.summary.assign(16, 0.3);
  const auto [next, lp] = dynamics_prior(f, m, rng);
  CHECK_FALSE(next.active());
  CHECK(next.summary == f.summary);
  CHECK(lp == 0.0);
  CHECK(rng == Rng(1));
}

TEST_CASE("visibility chain stays visible at the configured rate") {
  ModelParams p;
  p[ModelParams::kVisibilityStayLogit] = logit(0.9);
  const auto m = default_model(p);
  const auto f = moving_file(3, 0);
  Rng rng(2);
  int stay = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) stay += dynamics_prior(f, m, rng).first.visible ? 1 : 0;
  CHECK(std::abs(stay / static_cast<double>(n) - 0.9) < 0.01);
}

TEST_CASE("color transitions are distributions that favor the partner at the period") {
  const auto m = default_model();
  ObjectState<double> s;
  s.color = 1;
  s.partner = 4;
  for (int age = 0; age < 10; ++age) {
    s.color_age = age;
    const auto p = color_transition(s, m);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    if (age == 4) CHECK(p[4] > 0.9);
    if (age < 2) CHECK(p[1] > 0.99);
  }
}

TEST_CASE("sampled prior states report the density log_state_prior assigns them") {
  const auto m = default_model();
  const auto spec = default_spec();
  Rng gen(17);
  for (int i = 0; i < 200; ++i) {
    const auto f = random_file(gen, spec, 1);
    Rng rng(static_cast<std::uint64_t>(i));
    const auto d = sample_state_prior(f.state, m, rng);
    CHECK(d.log_density == doctest::Approx(log_state_prior(f.state, d.state, m)).epsilon(1e-12));
  }
}

TEST_CASE("the prior transition density integrates to one") {
  // Wide noise so a modest grid resolves the kernel.
  ModelParams p;
  p[ModelParams::kPositionNoisePrior] = softplus_inverse(0.02);
  const auto m = default_model(p);
  for (int phase : {10, 13}) {
    const auto f = moving_file(phase, phase == 10 ? -1 : 0);
    const int branches = needs_branch(phase, m.spec.geometry) ? 2 : 1;
    double total = 0.0;
    const double h = 0.002;
    for (int b = 0; b < branches; ++b) {
      const auto mean = motion_mean(f.state, branches == 2 ? b : current_branch(f.state, m.spec.geometry),
                                    m.spec.geometry);
      for (int c = 0; c < m.spec.palette_size; ++c) {
        ObjectState<double> next = f.state;
        next.color = c;
        next.branch = branches == 2 ? b : f.state.branch;
        for (double x = mean.x - 0.2; x < mean.x + 0.2; x += h) {
          for (double y = mean.y - 0.2; y < mean.y + 0.2; y += h) {
            next.position = {x + h / 2, y + h / 2};
            total += std::exp(log_state_prior(f.state, next, m)) * h * h;
          }
        }
      }
    }
    CHECK(std::abs(total - 1.0) < 1e-3);
  }
}

// ------------------------------------------------------------- proposals

TEST_CASE("degenerate posterior proposal lands on the slot") {
  ModelParams p;
  p[ModelParams::kPositionNoisePost] = -60.0;
  p[ModelParams::kObservationNoise] = -60.0;
  p[ModelParams::kProposalBlendLogit] = 60.0;
  const auto m = default_model(p);
  auto f = moving_file(4, 1);
  world::Slot s;
  s.position = {0.61, 0.2};
  s.appearance = color_appearance(1, m.spec);
  s.presence = 1.0;
  Rng rng(3);
  const auto d = posterior_proposal(f, s, m, rng);
  CHECK(d.state.position.x == doctest::Approx(0.61).epsilon(1e-12));
  CHECK(d.state.position.y == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("posterior proposal density matches an independent Gaussian evaluation") {
  const auto m = default_model();
  const auto spec = default_spec();
  Rng gen(23);
  for (int i = 0; i < 100; ++i) {
    auto f = random_file(gen, spec, 1);
    f.visible = true;
    const auto slot = testing::random_detection(gen, spec.palette_size);
    Rng rng(static_cast<std::uint64_t>(100 + i));
    const auto d = posterior_proposal(f, slot, m, rng);
    const int branch = needs_branch(f.state.lane_phase, spec.geometry) ? d.state.branch
                                                                        : current_branch(f.state, spec.geometry);
    const auto mean = motion_mean(f.state, branch, spec.geometry);
    const double gain = 1.0 / (f.state.track_count + 1.0);
    const double lambda = std::max(sigmoid(ModelParams{}[ModelParams::kProposalBlendLogit]), gain);
    const double cx = (1 - lambda) * mean.x + lambda * slot.position.x;
    const double cy = (1 - lambda) * mean.y + lambda * slot.position.y;
    const double sig = std::sqrt(m.th.sigma_post * m.th.sigma_post + gain * m.th.sigma_obs * m.th.sigma_obs);
    const double dx = d.state.position.x - cx, dy = d.state.position.y - cy;
    const double oracle = -(dx * dx + dy * dy) / (2 * sig * sig) - std::log(2 * std::numbers::pi * sig * sig);
    CHECK(d.log_density - d.log_discrete == doctest::Approx(oracle).epsilon(1e-10));
    // mode property: moving 3σ further from the center lowers the density
    const double r = std::sqrt(dx * dx + dy * dy);
    const double far = -std::pow(r + 3 * sig, 2) / (2 * sig * sig) - std::log(2 * std::numbers::pi * sig * sig);
    CHECK(oracle >= far);
  }
}

TEST_CASE("visibility posterior follows the presence score") {
  const auto m = default_model();
  world::Slot null_slot;
  null_slot.is_null = true;
  CHECK(sigmoid(visibility_posterior_logit(null_slot, m)) <= 0.01);
  world::Slot s;
  s.presence = 1.0;
  CHECK(sigmoid(visibility_posterior_logit(s, m)) >= 0.5);
  double prev = -1.0;
  for (double pr : {0.0, 0.5, 1.0}) {
    s.presence = pr;
    const double v = sigmoid(visibility_posterior_logit(s, m));
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("discovery proposal centers on the slot") {
  const auto m = default_model();
  world::Slot s;
  s.position = {0.3, 0.52};
  s.appearance = color_appearance(2, m.spec);
  s.presence = 1.0;
  Rng rng(5);
  double sx = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const auto d = discovery_proposal(s, m, rng);
    sx += d.state.position.x;
    CHECK(d.state.track_count == 1);
  }
  CHECK(std::abs(sx / 2000 - 0.3) < 4 * m.th.sigma_obs / std::sqrt(2000.0));
}

// ------------------------------------------------------------ recurrence

TEST_CASE("recurrent summary is a bounded deterministic map") {
  const auto spec = default_spec();
  const auto f = moving_file(5, 0);
  const std::vector<double> zeros(static_cast<std::size_t>(spec.summary_dim * spec.dims().rnn_input_dim()), 0.0);
  const auto h0 = rnn_update(f.summary, f.state, true, zeros, spec.summary_dim);
  CHECK(std::all_of(h0.begin(), h0.end(), [](double v) { return v == 0.0; }));
  ModelParams p;
  const auto w = p.values().subspan(ModelParams::kRnnWeights, p.rnn_size());
  const auto a = rnn_update(f.summary, f.state, true, w, spec.summary_dim);
  CHECK(a == rnn_update(f.summary, f.state, true, w, spec.summary_dim));
  CHECK(std::all_of(a.begin(), a.end(), [](double v) { return std::abs(v) < 1.0; }));
  CHECK_THROWS_AS(rnn_update(std::vector<double>(3, 0.0), f.state, true, w, spec.summary_dim), ConfigError);
}

// -------------------------------------------------------------- matching

TEST_CASE("interaction summary is a symmetric sum") {
  const auto spec = default_spec();
  Rng gen(31);
  world::Slot slot = testing::random_detection(gen, spec.palette_size);
  CHECK(interaction_summary<double>({}, slot, spec) == std::array<double, 3>{0.0, 0.0, 0.0});
  for (int trial = 0; trial < 50; ++trial) {
    auto p = testing::random_particle(gen, spec, 4, 3);
    const auto a = interaction_summary<double>(p.files, slot, spec);
    std::shuffle(p.files.begin(), p.files.end(), gen.engine());
    const auto b = interaction_summary<double>(p.files, slot, spec);
    for (int i = 0; i < 3; ++i) CHECK(a[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(1e-14));
  }
  const auto f = moving_file(5, 1);
  slot.position = predicted_position(f.state, spec.geometry);
  const std::vector<ObjectFile<double>> one{f}, two{f, f};
  const auto s1 = interaction_summary<double>(one, slot, spec);
  const auto s2 = interaction_summary<double>(two, slot, spec);
  for (int i = 0; i < 3; ++i) CHECK(s2[static_cast<std::size_t>(i)] == 2.0 * s1[static_cast<std::size_t>(i)]);
}

namespace {
std::vector<double> logits_for(const ObjectFile<double>& f, const world::SlotSet& slots, const Model<double>& m,
                               std::span<const ObjectFile<double>> files, int rank = 0) {
  std::vector<std::array<double, 3>> sums;
  for (const auto& s : slots) sums.push_back(interaction_summary(files, s, m.spec));
  return match_logits<double>(f, slots, std::span<const std::array<double, 3>>(sums), m, rank);
}
}  // namespace

TEST_CASE("equidistant identical slots get equal logits") {
  const auto m = default_model();
  const auto f = moving_file(5, 1);
  const auto pred = predicted_position(f.state, m.spec.geometry);
  Rng gen(1);
  auto slots = random_slots(gen, 4, 2, 6);
  slots[1].position = {pred.x + 0.03, pred.y};
  slots[2].position = {pred.x - 0.03, pred.y};
  slots[2].appearance = slots[1].appearance;
  slots[2].presence = slots[1].presence;
  const std::vector<ObjectFile<double>> files{f};
  const auto l = logits_for(f, slots, m, files);
  CHECK(l[1] == doctest::Approx(l[2]).epsilon(1e-12));
  CHECK(l[3] == kNegInf);
  CHECK(l[4] == kNegInf);
}

TEST_CASE("zero temperature gives a flat softmax over active heads") {
  ModelParams p;
  p[ModelParams::kMatchTemperature] = 0.0;
  const auto m = default_model(p);
  Rng gen(2);
  const auto slots = random_slots(gen, 4, 3, 6);
  const auto f = moving_file(7, 0);
  const std::vector<ObjectFile<double>> files{f};
  const auto lq = log_softmax(logits_for(f, slots, m, files));
  for (int i = 0; i < 4; ++i) CHECK(std::exp(lq[static_cast<std::size_t>(i)]) == doctest::Approx(0.25));
  CHECK(std::exp(lq[4]) == 0.0);
}

TEST_CASE("match softmax normalizes on random inputs") {
  const auto m = default_model();
  const auto spec = default_spec();
  Rng gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto slots = random_slots(gen, 4, gen.uniform_int(0, 4), 6);
    const auto part = testing::random_particle(gen, spec, 4, gen.uniform_int(0, 4));
    int rank = 0;
    for (const auto& f : part.files) {
      const auto l = logits_for(f, slots, m, part.files, f.active() ? 0 : rank++);
      CHECK(std::abs(softmax_sum(l) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("observation likelihood at a perfect match is the kernel peak") {
  auto spec = default_spec();
  spec.appearance_smoothing = 0.0;
  const auto m = make_model<double>(spec, ModelParams{});
  auto f = moving_file(5, 1);
  f.state.appearance = color_appearance(1, spec);
  world::Slot null_slot;
  null_slot.is_null = true;
  world::Slot s;
  s.position = f.state.position;
  s.appearance = color_appearance(1, spec);
  s.presence = 1.0;
  world::SlotSet slots{null_slot, s};
  const std::vector<ObjectFile<double>> files{f};
  const std::vector<int> matches{1};
  const std::vector<double> probs{0.9};
  const double sig = m.th.sigma_obs;
  CHECK(observation_loglik<double>(files, slots, matches, probs, m) ==
        doctest::Approx(-std::log(2 * std::numbers::pi * sig * sig)).epsilon(1e-14));
  // one extra, unexplained detection costs exactly the clutter penalty
  world::Slot extra = s;
  extra.position = {0.9, 0.9};
  slots.push_back(extra);
  CHECK(observation_loglik<double>(files, slots, matches, probs, m) ==
        doctest::Approx(-std::log(2 * std::numbers::pi * sig * sig) + m.th.clutter_penalty).epsilon(1e-14));
}

TEST_CASE("observation likelihood equals a slot-first recomputation") {
  const auto m = default_model();
  const auto spec = default_spec();
  Rng gen(41);
  for (int trial = 0; trial < 200; ++trial) {
    const auto slots = random_slots(gen, 4, gen.uniform_int(0, 4), 6);
    const auto part = testing::random_particle(gen, spec, 4, gen.uniform_int(0, 4));
    std::vector<int> matches;
    std::vector<double> probs;
    std::vector<double> heads;
    for (const auto& s : slots) heads.push_back(s.is_padding() ? 0.0 : 1.0);
    for (std::size_t n = 0; n < part.files.size(); ++n) {
      matches.push_back(gen.categorical(heads));
      probs.push_back(std::round(gen.uniform() * 4) / 4);  // ties on purpose
    }
    const double lib = observation_loglik<double>(part.files, slots, matches, probs, m);
    const double oracle = testing::oracle_observation_loglik(part.files, slots, matches, probs, m);
    CHECK(std::abs(lib - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("active_heads counts the null slot and detections") {
  Rng gen(4);
  CHECK(active_heads(random_slots(gen, 8, 8, 6)) == 9);
  CHECK(active_heads(random_slots(gen, 4, 0, 6)) == 1);
}
