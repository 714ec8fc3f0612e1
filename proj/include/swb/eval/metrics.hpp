#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include "swb/model/types.hpp"
#include "swb/world/env.hpp"

namespace swb::eval {

using model::Belief;
using model::ObjectFile;
using world::GroundTruthObject;

struct EvalConfig {
  double bandwidth = 0.05;
  double gate = 0.1;

  void validate() const;
};

/// gt_file[j] is the file index matched to ground truth j, or -1.
struct Assignment {
  std::vector<int> gt_file;
  std::vector<int> unassigned_gt;
  std::vector<int> unassigned_files;  // active files left without a ground truth
};

/// Active files are matched to ground truth by position. A pair from the
/// previous step (gt index -> file ID in `previous_ids`) is kept while the
/// file stays within the gate; the rest are filled greedily by distance.
Assignment match_files_to_gt(std::span<const ObjectFile<double>> files, std::span<const GroundTruthObject> gt,
                             double gate, std::span<const int> previous_ids = {});

/// log Σ_k w_k Π_j p(y_j | file n_j of particle k). The kernel is an isotropic
/// Gaussian on position times the file's appearance probability of the true
/// color; an unmatched object gets the uniform density on the unit square and
/// probability 1 / P for its color.
/// `include`, when given, restricts the product to the flagged objects.
double kde_loglik(const Belief<double>& belief, std::span<const GroundTruthObject> gt, double bandwidth,
                  std::span<const Assignment> assignments, std::span<const bool> include = {});

/// Same, matching each particle without history.
double kde_loglik(const Belief<double>& belief, std::span<const GroundTruthObject> gt, double bandwidth,
                  double gate);

struct MotCounts {
  double fp = 0.0, miss = 0.0, switches = 0.0, migrate = 0.0, ascend = 0.0;

  MotCounts& operator+=(const MotCounts& o);
  double total() const { return fp + miss + switches + migrate + ascend; }
};

/// Per-particle tracking history that follows resampling lineages.
class MotTracker {
 public:
  explicit MotTracker(double gate) : gate_(gate) {}

  /// Scores belief b_t. `ancestors[k]` names the particle of b_{t-1} that
  /// particle k descends from (empty at the first step). Returns the
  /// weight-averaged counts of this step.
  MotCounts step(const Belief<double>& belief, std::span<const int> ancestors,
                 std::span<const GroundTruthObject> gt);

  /// Assignments made by the last step, one per particle.
  const std::vector<Assignment>& assignments() const { return last_; }
  /// Unweighted counts of the last step, one per particle.
  const std::vector<MotCounts>& particle_counts() const { return counts_; }

 private:
  struct Lineage {
    std::vector<int> prev_id;          // per gt, file ID matched last step or -1
    std::vector<std::set<int>> ever;   // per gt, IDs it was ever matched to
    std::map<int, int> last_gt;        // file ID -> gt index it last matched
  };
  double gate_;
  std::vector<Lineage> lineages_;
  std::vector<Assignment> last_;
  std::vector<MotCounts> counts_;
};

/// Weighted mean of per-particle counts.
MotCounts weighted_counts(std::span<const MotCounts> per_particle, std::span<const double> weights);

}  // namespace swb::eval
