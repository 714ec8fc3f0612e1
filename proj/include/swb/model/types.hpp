#pragma once

#include <optional>
#include <vector>

#include "swb/core/dual.hpp"
#include "swb/core/vec2.hpp"

namespace swb::model {

/// Object attributes z^obj. Position and velocity carry derivatives when S is
/// Dual; the discrete bookkeeping (color phase, lane phase, branch) does not.
template <class S>
struct ObjectState {
  Vec2T<S> position;
  Vec2T<S> velocity;
  std::vector<double> appearance;
  Vec2T<S> dynamics_noise;
  int color = 0;
  int partner = -1;     // the other color of the pair once a switch was seen
  int color_age = 0;    // steps since the last color switch
  int lane_phase = 0;
  int branch = -1;      // direction taken on the current segment, -1 until chosen
  int track_count = 0;  // visible steps since discovery
};

template <class S>
struct ObjectFile {
  std::optional<int> id;
  bool visible = false;
  ObjectState<S> state;
  std::vector<double> summary;
  int invisible_steps = 0;

  bool active() const { return id.has_value(); }
};

template <class S>
struct Particle {
  std::vector<ObjectFile<S>> files;
  int next_id = 1;
};

/// K particles with normalized log-weights.
template <class S>
struct Belief {
  std::vector<Particle<S>> particles;
  std::vector<S> log_weights;

  int num_particles() const { return static_cast<int>(particles.size()); }
  int num_files() const { return particles.empty() ? 0 : static_cast<int>(particles[0].files.size()); }
  std::vector<double> weights() const;
};

/// Copy with every derivative dropped.
ObjectState<double> detach_state(const ObjectState<Dual>& s);
ObjectFile<double> detach_file(const ObjectFile<Dual>& f);
Belief<double> detach_belief(const Belief<Dual>& b);
Belief<Dual> lift_belief(const Belief<double>& b);

}  // namespace swb::model
