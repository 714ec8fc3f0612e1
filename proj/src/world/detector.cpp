#include "swb/world/detector.hpp"

#include <algorithm>
#include <string>

#include "swb/core/error.hpp"

namespace swb::world {

void DetectorParams::validate(int palette_size) const {
  auto fail = [](const std::string& msg) { throw ConfigError("detector: " + msg); };
  if (max_slots < 1) fail("max_slots must be >= 1");
  if (!(position_noise >= 0.0)) fail("position_noise must be >= 0");
  if (!(appearance_flip >= 0.0 && appearance_flip <= 1.0)) fail("appearance_flip must be in [0, 1]");
  if (!(presence_min > 0.0 && presence_min <= 1.0)) fail("presence_min must be in (0, 1]");
  if (palette_size < 2) fail("palette needs at least two symbols");
}

SlotSet detect_slots(const std::vector<GroundTruthObject>& objects, const DetectorParams& det,
                     int palette_size, Rng& rng) {
  det.validate(palette_size);
  const auto P = static_cast<std::size_t>(palette_size);
  std::vector<Slot> found;
  for (const auto& o : objects) {
    if (!o.visible) continue;
    Slot s;
    s.presence = det.presence_min + (1.0 - det.presence_min) * rng.uniform();
    s.position = {std::clamp(o.position.x + det.position_noise * rng.normal(), 0.0, 1.0),
                  std::clamp(o.position.y + det.position_noise * rng.normal(), 0.0, 1.0)};
    int symbol = o.color();
    if (det.appearance_flip > 0.0 && rng.bernoulli(det.appearance_flip)) {
      const int other = rng.uniform_int(0, palette_size - 2);
      symbol = other >= symbol ? other + 1 : other;
    }
    const double f = det.appearance_flip;
    s.appearance.assign(P, f > 0.0 ? f / static_cast<double>(P - 1) : 0.0);
    s.appearance[static_cast<std::size_t>(symbol)] = 1.0 - f;
    found.push_back(std::move(s));
  }
  // Keep the M most confident detections; stable so ties keep object order.
  std::stable_sort(found.begin(), found.end(),
                   [](const Slot& a, const Slot& b) { return a.presence > b.presence; });
  if (found.size() > static_cast<std::size_t>(det.max_slots)) found.resize(static_cast<std::size_t>(det.max_slots));
  std::shuffle(found.begin(), found.end(), rng.engine());

  SlotSet out;
  out.reserve(static_cast<std::size_t>(det.max_slots) + 1);
  Slot null_slot;
  null_slot.appearance.assign(P, 0.0);
  null_slot.is_null = true;
  out.push_back(null_slot);
  for (auto& s : found) out.push_back(std::move(s));
  while (out.size() < static_cast<std::size_t>(det.max_slots) + 1) {
    Slot pad;
    pad.appearance.assign(P, 0.0);
    out.push_back(pad);
  }
  return out;
}

int count_detections(const SlotSet& slots) {
  int n = 0;
  for (const auto& s : slots) n += (!s.is_null && !s.is_padding()) ? 1 : 0;
  return n;
}

}  // namespace swb::world
