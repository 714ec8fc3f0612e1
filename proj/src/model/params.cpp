#include "swb/model/params.hpp"

#include <cmath>
#include <string>

#include "swb/core/error.hpp"
#include "swb/core/rng.hpp"
#include "swb/core/scalar_math.hpp"

namespace swb::model {

namespace {
constexpr std::uint64_t kRnnInitSeed = 0x5EED16;
constexpr double kRnnInitScale = 0.1;
}  // namespace

ModelParams::ModelParams(ModelDims dims) : dims_(dims) {
  if (dims.summary_dim < 1) throw ConfigError("model: summary_dim must be >= 1");
  if (dims.palette_size < 2) throw ConfigError("model: palette_size must be >= 2");
  const std::size_t rnn = rnn_size();
  blocks_ = {
      {"position_noise_prior", kPositionNoisePrior, 1},
      {"position_noise_post", kPositionNoisePost, 1},
      {"proposal_blend_logit", kProposalBlendLogit, 1},
      {"observation_noise", kObservationNoise, 1},
      {"visibility_stay_logit", kVisibilityStayLogit, 1},
      {"visibility_return_logit", kVisibilityReturnLogit, 1},
      {"visibility_presence_weight", kVisibilityPresenceWeight, 1},
      {"visibility_bias", kVisibilityBias, 1},
      {"discovery_logit", kDiscoveryLogit, 1},
      {"color_period_logits", kColorPeriodLogits, kNumColorPeriods},
      {"branch_prob_logit", kBranchProbLogit, 1},
      {"match_temperature", kMatchTemperature, 1},
      {"match_feature_weights", kMatchFeatureWeights, kNumMatchWeights},
      {"rnn_weights", kRnnWeights, rnn},
      {"miss_log_penalty", kRnnWeights + rnn, 1},
      {"clutter_log_penalty", kRnnWeights + rnn + 1, 1},
  };
  values_.assign(kRnnWeights + rnn + 2, 0.0);

  values_[kPositionNoisePrior] = softplus_inverse(0.002);
  values_[kPositionNoisePost] = softplus_inverse(0.001);
  values_[kProposalBlendLogit] = logit(0.05);
  values_[kObservationNoise] = softplus_inverse(0.01);
  values_[kVisibilityStayLogit] = 3.07;
  values_[kVisibilityReturnLogit] = -3.05;
  values_[kVisibilityPresenceWeight] = softplus_inverse(8.0);
  values_[kVisibilityBias] = -2.0;
  values_[kDiscoveryLogit] = -10.0;
  for (int i = 0; i < kNumColorPeriods; ++i) {
    values_[kColorPeriodLogits + i] = (kMinColorPeriod + i == 5) ? 4.0 : -4.0;
  }
  values_[kBranchProbLogit] = 0.0;
  values_[kMatchTemperature] = 3.0;
  values_[kMatchFeatureWeights + kWeightDistance] = 400.0;
  values_[kMatchFeatureWeights + kWeightAppearance] = 2.0;
  values_[kMatchFeatureWeights + kWeightCompetition] = 6.0;
  values_[kMatchFeatureWeights + kWeightNull] = 0.0;
  values_[kMatchFeatureWeights + kWeightDiscovery] = 3.0;
  Rng rng(kRnnInitSeed);
  for (std::size_t i = 0; i < rnn; ++i) values_[kRnnWeights + i] = kRnnInitScale * rng.normal();
  values_[miss_index()] = -10.0;
  values_[clutter_index()] = -10.0;
}

std::size_t ModelParams::rnn_size() const {
  return static_cast<std::size_t>(dims_.summary_dim) * static_cast<std::size_t>(dims_.rnn_input_dim());
}

std::size_t ModelParams::index(std::string_view name) const {
  const auto dot = name.rfind('.');
  const std::string_view base = dot == std::string_view::npos ? name : name.substr(0, dot);
  for (const auto& b : blocks_) {
    if (b.name != base) continue;
    if (dot == std::string_view::npos) {
      if (b.size != 1) throw ConfigError("model: parameter '" + std::string(name) + "' is a vector; use name.i");
      return b.offset;
    }
    std::size_t i = 0;
    try {
      i = std::stoul(std::string(name.substr(dot + 1)));
    } catch (const std::exception&) {
      throw ConfigError("model: bad parameter index in '" + std::string(name) + "'");
    }
    if (i >= b.size) throw ConfigError("model: index out of range in '" + std::string(name) + "'");
    return b.offset + i;
  }
  throw ConfigError("model: unknown parameter '" + std::string(name) + "'");
}

std::string ModelParams::entry_name(std::size_t i) const {
  for (const auto& b : blocks_) {
    if (i < b.offset || i >= b.offset + b.size) continue;
    return b.size == 1 ? b.name : b.name + "." + std::to_string(i - b.offset);
  }
  throw ContractError("ModelParams::entry_name: index out of range");
}

void ModelParams::validate() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw ConfigError("model: parameter " + entry_name(i) + " is not finite");
  }
}

nlohmann::json ModelParams::to_json() const {
  nlohmann::json j;
  j["schema"] = kSchema;
  j["summary_dim"] = dims_.summary_dim;
  j["palette_size"] = dims_.palette_size;
  for (std::size_t i = 0; i < values_.size(); ++i) j[entry_name(i)] = values_[i];
  return j;
}

ModelParams ModelParams::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model params: expected a JSON object");
  if (j.contains("schema") && j.at("schema") != kSchema) {
    throw ConfigError("model params: unsupported schema " + j.at("schema").dump());
  }
  ModelDims dims;
  dims.summary_dim = j.value("summary_dim", dims.summary_dim);
  dims.palette_size = j.value("palette_size", dims.palette_size);
  ModelParams p(dims);
  for (const auto& [key, val] : j.items()) {
    if (key == "schema" || key == "summary_dim" || key == "palette_size") continue;
    if (!val.is_number()) throw ConfigError("model params: '" + key + "' must be a number");
    p.values_[p.index(key)] = val.get<double>();
  }
  p.validate();
  return p;
}

}  // namespace swb::model
