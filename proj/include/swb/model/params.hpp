#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace swb::model {

inline constexpr int kNumColorPeriods = 5;
inline constexpr int kMinColorPeriod = 3;
inline constexpr int kNumMatchWeights = 5;

/// Entries of match_feature_weights.
enum MatchWeight : int { kWeightDistance = 0, kWeightAppearance, kWeightCompetition, kWeightNull, kWeightDiscovery };

/// Sizes that shape the parameter vector.
struct ModelDims {
  int summary_dim = 16;
  int palette_size = 6;

  /// [h, position, velocity, appearance, visible, 1]
  int rnn_input_dim() const { return summary_dim + 6 + palette_size; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 1;
};

/// Flat named parameter vector. Noise scales and the presence weight are
/// stored raw and mapped through softplus when used.
class ModelParams {
 public:
  static constexpr const char* kSchema = "swb.model_params.v1";

  static constexpr std::size_t kPositionNoisePrior = 0;
  static constexpr std::size_t kPositionNoisePost = 1;
  static constexpr std::size_t kProposalBlendLogit = 2;
  static constexpr std::size_t kObservationNoise = 3;
  static constexpr std::size_t kVisibilityStayLogit = 4;
  static constexpr std::size_t kVisibilityReturnLogit = 5;
  static constexpr std::size_t kVisibilityPresenceWeight = 6;
  static constexpr std::size_t kVisibilityBias = 7;
  static constexpr std::size_t kDiscoveryLogit = 8;
  static constexpr std::size_t kColorPeriodLogits = 9;
  static constexpr std::size_t kBranchProbLogit = kColorPeriodLogits + kNumColorPeriods;
  static constexpr std::size_t kMatchTemperature = kBranchProbLogit + 1;
  static constexpr std::size_t kMatchFeatureWeights = kMatchTemperature + 1;
  static constexpr std::size_t kRnnWeights = kMatchFeatureWeights + kNumMatchWeights;

  /// Defaults describe the branching-sprites world.
  explicit ModelParams(ModelDims dims = {});

  const ModelDims& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::size_t rnn_size() const;
  std::size_t miss_index() const { return kRnnWeights + rnn_size(); }
  std::size_t clutter_index() const { return miss_index() + 1; }

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  /// Accepts a block name for scalar blocks or "block.i" for vector entries.
  std::size_t index(std::string_view name) const;
  std::string entry_name(std::size_t i) const;

  /// Throws ConfigError on a non-finite entry.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelParams from_json(const nlohmann::json& j);

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

 private:
  ModelDims dims_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> values_;
};

}  // namespace swb::model
