#include "toy_model.hpp"

#include <cmath>
#include <vector>

#include "swb/core/dual.hpp"

namespace swb::testing {

namespace {

constexpr std::array<double, 3> kOffset{0.3, -0.2, 0.1};
// p(x1 | z1, z2) for the observed x1, and p(x2 | z3) for the observed x2.
constexpr double kLikX1[3][2] = {{0.7, 0.2}, {0.1, 0.5}, {0.4, 0.05}};
constexpr std::array<double, 3> kLikX2{0.15, 0.6, 0.3};
constexpr double kPz2 = 0.3;

template <class S>
struct Q {
  std::array<S, 3> lq1;
  std::array<S, 2> lq2;
  std::array<std::array<S, 3>, 3> lq3;  // [z1][z3]
};

template <class S>
std::array<S, 3> log_softmax3(const std::array<S, 3>& x) {
  const S lse = log(exp(x[0]) + exp(x[1]) + exp(x[2]));
  return {x[0] - lse, x[1] - lse, x[2] - lse};
}

template <class S>
Q<S> build(const std::array<S, ToyModel::kParams>& th) {
  Q<S> q;
  q.lq1 = log_softmax3<S>({th[0], th[1], S(0.0)});
  // log sigmoid(b) and log sigmoid(-b)
  q.lq2 = {-log(1.0 + exp(th[2])), -log(1.0 + exp(-th[2]))};
  for (int z1 = 0; z1 < 3; ++z1) {
    std::array<S, 3> l{S(kOffset[0]), S(kOffset[1]), S(kOffset[2])};
    l[static_cast<std::size_t>(z1)] += th[3];
    q.lq3[static_cast<std::size_t>(z1)] = log_softmax3(l);
  }
  return q;
}

double log_p(int z1, int z2, int z3) {
  const double lp1 = std::log(1.0 / 3.0) + std::log(z2 == 1 ? kPz2 : 1.0 - kPz2) + std::log(kLikX1[z1][z2]);
  const double lp2 = std::log(z3 == z1 ? 0.6 : 0.2) + std::log(kLikX2[static_cast<std::size_t>(z3)]);
  return lp1 + lp2;
}

template <class S>
S objective(const Q<S>& q, int z1, int z2, int z3) {
  const auto u1 = static_cast<std::size_t>(z1), u2 = static_cast<std::size_t>(z2), u3 = static_cast<std::size_t>(z3);
  return 0.5 * (log_p(z1, z2, z3) - q.lq1[u1] - q.lq2[u2] - q.lq3[u1][u3]);
}

}  // namespace

learning::ReplicateGrad ToyModel::sample(const Theta& theta, Rng& rng) {
  std::array<Dual, kParams> th;
  for (std::size_t i = 0; i < kParams; ++i) th[i] = Dual::variable(theta[i], i);
  const auto q = build(th);
  auto probs = [](const auto& lq) {
    std::vector<double> p;
    for (const auto& l : lq) p.push_back(std::exp(l.v));
    return p;
  };
  const int z1 = rng.categorical(probs(q.lq1));
  const int z2 = rng.categorical(probs(q.lq2));
  const int z3 = rng.categorical(probs(q.lq3[static_cast<std::size_t>(z1)]));
  const Dual f = objective(q, z1, z2, z3);
  const Dual score = q.lq1[static_cast<std::size_t>(z1)] + q.lq2[static_cast<std::size_t>(z2)] +
                     q.lq3[static_cast<std::size_t>(z1)][static_cast<std::size_t>(z3)];
  learning::ReplicateGrad r;
  r.elbo = f.v;
  for (std::size_t i = 0; i < kParams; ++i) {
    r.pathwise.push_back(f.d[i]);
    r.score.push_back(score.d[i]);
  }
  return r;
}

double ToyModel::expected(const Theta& theta) {
  const auto q = build(theta);
  double e = 0.0;
  for (int z1 = 0; z1 < 3; ++z1) {
    for (int z2 = 0; z2 < 2; ++z2) {
      for (int z3 = 0; z3 < 3; ++z3) {
        const double lq = q.lq1[static_cast<std::size_t>(z1)] + q.lq2[static_cast<std::size_t>(z2)] +
                          q.lq3[static_cast<std::size_t>(z1)][static_cast<std::size_t>(z3)];
        e += std::exp(lq) * objective(q, z1, z2, z3);
      }
    }
  }
  return e;
}

ToyModel::Theta ToyModel::exact_gradient(const Theta& theta, double eps) {
  Theta g{};
  for (std::size_t i = 0; i < kParams; ++i) {
    Theta hi = theta, lo = theta;
    hi[i] += eps;
    lo[i] -= eps;
    g[i] = (expected(hi) - expected(lo)) / (2.0 * eps);
  }
  return g;
}

}  // namespace swb::testing
