#pragma once

#include <optional>
#include <span>
#include <vector>

#include "swb/core/vec2.hpp"

namespace swb::world {

/// Binary lane tree embedded in the unit square.
///
/// An object walks downward one row per step. A traversal lasts
/// `levels * branch_interval` steps; at phase p the object is on segment
/// p / branch_interval and the node at the top of that segment sits at depth
/// p / branch_interval. Node centers at depth d are the dyadic midpoints
/// (2i + 1) / 2^(d + 1). Leaving a node, the object moves toward the left or
/// right child (offset 2^-(d + 2)) over one segment. Reaching the bottom it
/// wraps to the root at (0.5, 0).
struct LaneGeometry {
  int levels = 3;
  int branch_interval = 10;

  int traversal_steps() const { return levels * branch_interval; }
  double speed() const { return 1.0 / static_cast<double>(traversal_steps()); }
  int num_leaf_edges() const { return 1 << levels; }

  bool is_node_phase(int phase) const { return phase % branch_interval == 0; }
  int segment_of(int phase) const { return phase / branch_interval; }
  int next_phase(int phase) const { return (phase + 1) % traversal_steps(); }
  bool wraps_after(int phase) const { return phase == traversal_steps() - 1; }

  static double node_center(int depth, int index);
  static double child_offset(int depth);
  /// Index of the depth-`depth` node whose interval contains x.
  static int node_index_at(int depth, double x);

  /// Exact position of an object at `phase` having taken `path` (MSB = first
  /// branch). `path` must hold segment_of(phase) + 1 bits.
  Vec2 position(int phase, std::span<const int> path) const;

  /// Lateral velocity of the segment leaving a depth-`depth` node toward the
  /// given child (true = right).
  double branch_velocity(int depth, bool right) const;

  /// Lateral velocity of the lane nearest to x at a non-node phase.
  double snapped_velocity(double x, int phase) const;

  /// Leaf edge (0 .. 2^levels - 1) holding a point strictly inside the last
  /// segment, if any. Edge index is parent index * 2 + side.
  std::optional<int> leaf_edge(double x, int phase) const;

  /// Nearest phase for a vertical coordinate in [0, 1).
  int phase_from_y(double y) const;
};

}  // namespace swb::world
