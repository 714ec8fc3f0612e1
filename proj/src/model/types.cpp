#include "swb/model/types.hpp"

#include <cmath>

namespace swb::model {

template <class S>
std::vector<double> Belief<S>::weights() const {
  std::vector<double> w;
  w.reserve(log_weights.size());
  for (const S& lw : log_weights) w.push_back(std::exp(value(lw)));
  return w;
}

template struct Belief<double>;
template struct Belief<Dual>;

ObjectState<double> detach_state(const ObjectState<Dual>& s) {
  ObjectState<double> o;
  o.position = value(s.position);
  o.velocity = value(s.velocity);
  o.appearance = s.appearance;
  o.dynamics_noise = value(s.dynamics_noise);
  o.color = s.color;
  o.partner = s.partner;
  o.color_age = s.color_age;
  o.lane_phase = s.lane_phase;
  o.branch = s.branch;
  o.track_count = s.track_count;
  return o;
}

ObjectFile<double> detach_file(const ObjectFile<Dual>& f) {
  return {f.id, f.visible, detach_state(f.state), f.summary, f.invisible_steps};
}

Belief<double> detach_belief(const Belief<Dual>& b) {
  Belief<double> out;
  out.particles.reserve(b.particles.size());
  for (const auto& p : b.particles) {
    Particle<double> q;
    q.next_id = p.next_id;
    for (const auto& f : p.files) q.files.push_back(detach_file(f));
    out.particles.push_back(std::move(q));
  }
  for (const auto& w : b.log_weights) out.log_weights.push_back(w.v);
  return out;
}

Belief<Dual> lift_belief(const Belief<double>& b) {
  Belief<Dual> out;
  for (const auto& p : b.particles) {
    Particle<Dual> q;
    q.next_id = p.next_id;
    for (const auto& f : p.files) {
      ObjectFile<Dual> g;
      g.id = f.id;
      g.visible = f.visible;
      g.summary = f.summary;
      g.invisible_steps = f.invisible_steps;
      const auto& s = f.state;
      g.state.position = Vec2T<Dual>(s.position);
      g.state.velocity = Vec2T<Dual>(s.velocity);
      g.state.dynamics_noise = Vec2T<Dual>(s.dynamics_noise);
      g.state.appearance = s.appearance;
      g.state.color = s.color;
      g.state.partner = s.partner;
      g.state.color_age = s.color_age;
      g.state.lane_phase = s.lane_phase;
      g.state.branch = s.branch;
      g.state.track_count = s.track_count;
      q.files.push_back(std::move(g));
    }
    out.particles.push_back(std::move(q));
  }
  for (double w : b.log_weights) out.log_weights.emplace_back(w);
  return out;
}

}  // namespace swb::model
