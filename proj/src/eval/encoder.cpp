#include "swb/eval/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"

namespace swb::eval {

namespace {

Layer make_layer(int in, int out, Rng& rng) {
  Layer l{in, out, std::vector<double>(static_cast<std::size_t>(in) * out), std::vector<double>(static_cast<std::size_t>(out), 0.0)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& x : l.w) x = scale * rng.normal();
  return l;
}

}  // namespace

std::vector<double> Layer::apply(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in) {
    throw ConfigError("encoder: layer expects " + std::to_string(in) + " inputs, got " + std::to_string(x.size()));
  }
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int j = 0; j < in; ++j) s += w[static_cast<std::size_t>(i) * in + j] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = std::tanh(s);
  }
  return y;
}

EncoderParams EncoderParams::seeded(int palette_size, int summary_dim, std::uint64_t seed, int file_hidden,
                                    int particle_hidden, int out_dim) {
  Rng rng(seed);
  EncoderParams e;
  e.file_map = make_layer(file_feature_dim(palette_size, summary_dim), file_hidden, rng);
  e.particle_map = make_layer(file_hidden + 1, particle_hidden, rng);
  e.final_map = make_layer(particle_hidden, out_dim, rng);
  return e;
}

EncoderParams EncoderParams::zeroed() const {
  EncoderParams z = *this;
  for (Layer* l : {&z.file_map, &z.particle_map, &z.final_map}) {
    std::fill(l->w.begin(), l->w.end(), 0.0);
    std::fill(l->b.begin(), l->b.end(), 0.0);
  }
  return z;
}

std::vector<double> file_features(const model::ObjectFile<double>& f) {
  std::vector<double> x{f.active() ? 1.0 : 0.0, f.visible ? 1.0 : 0.0, f.state.position.x, f.state.position.y,
                        f.state.velocity.x, f.state.velocity.y};
  x.insert(x.end(), f.state.appearance.begin(), f.state.appearance.end());
  x.insert(x.end(), f.summary.begin(), f.summary.end());
  return x;
}

std::vector<double> encode_belief(const model::Belief<double>& belief, const EncoderParams& enc) {
  const int K = belief.num_particles();
  if (K < 1) throw ContractError("encode_belief: empty belief");
  const auto w = belief.weights();
  std::vector<double> pooled(static_cast<std::size_t>(enc.particle_map.out), 0.0);
  for (int k = 0; k < K; ++k) {
    const auto& files = belief.particles[static_cast<std::size_t>(k)].files;
    std::vector<double> mean(static_cast<std::size_t>(enc.file_map.out), 0.0);
    for (const auto& f : files) {
      const auto h = enc.file_map.apply(file_features(f));
      for (std::size_t i = 0; i < h.size(); ++i) mean[i] += h[i] / static_cast<double>(files.size());
    }
    mean.push_back(K * w[static_cast<std::size_t>(k)]);
    const auto g = enc.particle_map.apply(mean);
    for (std::size_t i = 0; i < g.size(); ++i) pooled[i] += g[i] / K;
  }
  return enc.final_map.apply(pooled);
}

}  // namespace swb::eval
