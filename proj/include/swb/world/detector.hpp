#pragma once

#include <vector>

#include "swb/core/rng.hpp"
#include "swb/core/vec2.hpp"
#include "swb/world/env.hpp"

namespace swb::world {

/// One detected object, the null slot, or padding.
struct Slot {
  Vec2 position;
  std::vector<double> appearance;
  double presence = 0.0;
  bool is_null = false;

  /// Padding slots fill the set up to M + 1 entries and never take part in matching.
  bool is_padding() const { return !is_null && presence <= 0.0; }
  friend bool operator==(const Slot&, const Slot&) = default;
};

/// Index 0 is always the null slot; indices 1..M are detections or padding.
using SlotSet = std::vector<Slot>;

struct DetectorParams {
  int max_slots = 4;
  double position_noise = 0.01;
  double appearance_flip = 0.0;
  double presence_min = 0.9;

  void validate(int palette_size) const;
  friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

SlotSet detect_slots(const std::vector<GroundTruthObject>& objects, const DetectorParams& det,
                     int palette_size, Rng& rng);

/// Number of non-padding, non-null slots.
int count_detections(const SlotSet& slots);

}  // namespace swb::world
