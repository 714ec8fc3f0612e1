#include "swb/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "swb/core/error.hpp"
#include "swb/core/scalar_math.hpp"

namespace swb::eval {

void EvalConfig::validate() const {
  if (!(bandwidth > 0.0)) throw ConfigError("eval: bandwidth must be > 0");
  if (!(gate > 0.0)) throw ConfigError("eval: gate must be > 0");
}

namespace {

double dist(const Vec2& a, const Vec2& b) { return std::sqrt(squared_norm(a - b)); }

}  // namespace

Assignment match_files_to_gt(std::span<const ObjectFile<double>> files, std::span<const GroundTruthObject> gt,
                             double gate, std::span<const int> previous_ids) {
  if (!(gate > 0.0)) throw ConfigError("match_files_to_gt: gate must be > 0");
  Assignment a;
  a.gt_file.assign(gt.size(), -1);
  std::vector<bool> used(files.size(), false);
  // Keep last step's pairs that are still plausible.
  for (std::size_t j = 0; j < gt.size() && j < previous_ids.size(); ++j) {
    if (previous_ids[j] < 0) continue;
    for (std::size_t n = 0; n < files.size(); ++n) {
      if (used[n] || !files[n].active() || *files[n].id != previous_ids[j]) continue;
      if (dist(files[n].state.position, gt[j].position) <= gate) {
        a.gt_file[j] = static_cast<int>(n);
        used[n] = true;
      }
      break;
    }
  }
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (a.gt_file[j] >= 0) continue;
    for (std::size_t n = 0; n < files.size(); ++n) {
      if (used[n] || !files[n].active()) continue;
      const double d = dist(files[n].state.position, gt[j].position);
      if (d <= gate) pairs.emplace_back(d, j, n);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [d, j, n] : pairs) {
    if (a.gt_file[j] >= 0 || used[n]) continue;
    a.gt_file[j] = static_cast<int>(n);
    used[n] = true;
  }
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (a.gt_file[j] < 0) a.unassigned_gt.push_back(static_cast<int>(j));
  }
  for (std::size_t n = 0; n < files.size(); ++n) {
    if (files[n].active() && !used[n]) a.unassigned_files.push_back(static_cast<int>(n));
  }
  return a;
}

double kde_loglik(const Belief<double>& belief, std::span<const GroundTruthObject> gt, double bandwidth,
                  std::span<const Assignment> assignments, std::span<const bool> include) {
  if (!(bandwidth > 0.0)) throw ConfigError("kde_loglik: bandwidth must be > 0");
  if (assignments.size() != belief.particles.size()) throw ContractError("kde_loglik: one assignment per particle");
  std::vector<double> terms;
  terms.reserve(belief.particles.size());
  for (std::size_t k = 0; k < belief.particles.size(); ++k) {
    const auto& files = belief.particles[k].files;
    double lp = belief.log_weights[k];
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (!include.empty() && !include[j]) continue;
      const int n = assignments[k].gt_file[j];
      if (n < 0) {
        const double P = files.empty() ? 1.0 : static_cast<double>(files[0].state.appearance.size());
        lp += -std::log(P);
        continue;
      }
      const auto& s = files[static_cast<std::size_t>(n)].state;
      lp += log_normal(gt[j].position.x, s.position.x, bandwidth) + log_normal(gt[j].position.y, s.position.y, bandwidth);
      lp += std::log(s.appearance[static_cast<std::size_t>(gt[j].color())]);
    }
    terms.push_back(lp);
  }
  return logsumexp(terms);
}

double kde_loglik(const Belief<double>& belief, std::span<const GroundTruthObject> gt, double bandwidth,
                  double gate) {
  std::vector<Assignment> a;
  a.reserve(belief.particles.size());
  for (const auto& p : belief.particles) a.push_back(match_files_to_gt(p.files, gt, gate));
  return kde_loglik(belief, gt, bandwidth, a);
}

MotCounts& MotCounts::operator+=(const MotCounts& o) {
  fp += o.fp;
  miss += o.miss;
  switches += o.switches;
  migrate += o.migrate;
  ascend += o.ascend;
  return *this;
}

MotCounts weighted_counts(std::span<const MotCounts> per_particle, std::span<const double> weights) {
  if (per_particle.size() != weights.size()) throw ContractError("weighted_counts: size mismatch");
  MotCounts out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double w = weights[k];
    out.fp += w * per_particle[k].fp;
    out.miss += w * per_particle[k].miss;
    out.switches += w * per_particle[k].switches;
    out.migrate += w * per_particle[k].migrate;
    out.ascend += w * per_particle[k].ascend;
  }
  return out;
}

MotCounts MotTracker::step(const Belief<double>& belief, std::span<const int> ancestors,
                           std::span<const GroundTruthObject> gt) {
  const std::size_t K = belief.particles.size();
  std::vector<Lineage> next(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (!lineages_.empty() && !ancestors.empty()) {
      next[k] = lineages_.at(static_cast<std::size_t>(ancestors[k]));
    } else if (!lineages_.empty() && lineages_.size() == K) {
      next[k] = lineages_[k];
    }
    next[k].prev_id.resize(gt.size(), -1);
    next[k].ever.resize(gt.size());
  }
  last_.assign(K, {});
  counts_.assign(K, {});
  for (std::size_t k = 0; k < K; ++k) {
    const auto& files = belief.particles[k].files;
    Lineage& L = next[k];
    const Assignment a = match_files_to_gt(files, gt, gate_, L.prev_id);
    MotCounts c;
    for (int n : a.unassigned_files) c.fp += files[static_cast<std::size_t>(n)].visible ? 1.0 : 0.0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const int n = a.gt_file[j];
      if (n < 0) {
        c.miss += 1.0;
        continue;
      }
      const int id = *files[static_cast<std::size_t>(n)].id;
      const int prev = L.prev_id[j];
      if (prev >= 0 && prev != id) {
        const bool prev_live = std::any_of(files.begin(), files.end(),
                                           [&](const auto& f) { return f.active() && *f.id == prev; });
        if (prev_live) c.switches += 1.0;
      }
      const auto it = L.last_gt.find(id);
      if (it == L.last_gt.end()) {
        if (!L.ever[j].empty()) c.ascend += 1.0;
      } else if (it->second != static_cast<int>(j)) {
        c.migrate += 1.0;
      }
      L.last_gt[id] = static_cast<int>(j);
      L.ever[j].insert(id);
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const int n = a.gt_file[j];
      L.prev_id[j] = n < 0 ? -1 : *files[static_cast<std::size_t>(n)].id;
    }
    last_[k] = a;
    counts_[k] = c;
  }
  lineages_ = std::move(next);
  const auto w = belief.weights();
  return weighted_counts(counts_, w);
}

}  // namespace swb::eval
