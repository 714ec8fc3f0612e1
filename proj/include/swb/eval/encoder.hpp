#pragma once

#include <cstdint>
#include <vector>

#include "swb/model/types.hpp"

namespace swb::eval {

/// One fixed tanh(W x + b) layer, W row-major (out x in).
struct Layer {
  int in = 0, out = 0;
  std::vector<double> w, b;

  std::vector<double> apply(const std::vector<double>& x) const;
};

/// File map -> mean over files -> append K·w -> particle map -> mean over
/// particles -> final map.
struct EncoderParams {
  Layer file_map, particle_map, final_map;

  /// Seeded initializer. File features are [active, visible, position,
  /// velocity, appearance, summary].
  static EncoderParams seeded(int palette_size, int summary_dim, std::uint64_t seed = 0xE7C0DE,
                              int file_hidden = 32, int particle_hidden = 32, int out_dim = 64);
  static int file_feature_dim(int palette_size, int summary_dim) { return 6 + palette_size + summary_dim; }
  EncoderParams zeroed() const;
};

std::vector<double> file_features(const model::ObjectFile<double>& f);

std::vector<double> encode_belief(const model::Belief<double>& belief, const EncoderParams& enc);

}  // namespace swb::eval
