#include "swb/world/lane_geometry.hpp"

#include <cmath>

#include "swb/core/error.hpp"

namespace swb::world {

double LaneGeometry::node_center(int depth, int index) {
  return (2.0 * index + 1.0) / static_cast<double>(1 << (depth + 1));
}

double LaneGeometry::child_offset(int depth) { return std::ldexp(1.0, -(depth + 2)); }

int LaneGeometry::node_index_at(int depth, double x) {
  const int count = 1 << depth;
  int i = static_cast<int>(std::floor(x * count));
  if (i < 0) i = 0;
  if (i >= count) i = count - 1;
  return i;
}

Vec2 LaneGeometry::position(int phase, std::span<const int> path) const {
  const int seg = segment_of(phase);
  if (static_cast<int>(path.size()) != seg + 1) {
    throw ContractError("LaneGeometry::position: path length must be segment + 1");
  }
  int parent = 0;
  for (int i = 0; i < seg; ++i) parent = parent * 2 + path[i];
  const double cp = node_center(seg, parent);
  const double sign = path[seg] ? 1.0 : -1.0;
  const int r = phase - seg * branch_interval;
  const double x = cp + sign * child_offset(seg) * static_cast<double>(r) / branch_interval;
  return {x, phase * speed()};
}

double LaneGeometry::branch_velocity(int depth, bool right) const {
  return (right ? 1.0 : -1.0) * child_offset(depth) / branch_interval;
}

double LaneGeometry::snapped_velocity(double x, int phase) const {
  const int seg = segment_of(phase);
  const int r = phase - seg * branch_interval;
  const int parent = node_index_at(seg, x);
  const double cp = node_center(seg, parent);
  const double reach = child_offset(seg) * static_cast<double>(r) / branch_interval;
  const bool right = std::abs(x - (cp + reach)) < std::abs(x - (cp - reach));
  return branch_velocity(seg, right);
}

std::optional<int> LaneGeometry::leaf_edge(double x, int phase) const {
  const int seg = segment_of(phase);
  if (seg != levels - 1 || is_node_phase(phase)) return std::nullopt;
  const int parent = node_index_at(seg, x);
  const double cp = node_center(seg, parent);
  return parent * 2 + (x > cp ? 1 : 0);
}

int LaneGeometry::phase_from_y(double y) const {
  const int n = traversal_steps();
  long p = std::lround(y / speed());
  p %= n;
  if (p < 0) p += n;
  return static_cast<int>(p);
}

}  // namespace swb::world
