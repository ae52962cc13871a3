#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsegate/activations.hpp"
#include "sparsegate/model_io.hpp"
#include "sparsegate/moe.hpp"
#include "sparsegate/predictor.hpp"

namespace sparsegate {

struct PredictorConfig {
  std::size_t rank = 0;
  double threshold = PredictorModel::kDefaultThreshold;

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Model shape. JSON field names: hidden_size, intermediate_size,
/// num_layers, activation, num_experts, experts_per_token, predictor
/// {rank, threshold}. activation is a string ("drelu", "swiglu", "reglu",
/// "shifted_relu") or an object {"kind": "shifted_relu", "threshold": T}.
struct ModelConfig {
  std::size_t hidden_size = 0;
  std::size_t intermediate_size = 0;
  std::size_t num_layers = 0;
  ActivationKind activation = ActivationKind::drelu();
  std::optional<std::size_t> num_experts;
  std::optional<std::size_t> experts_per_token;
  std::optional<PredictorConfig> predictor;

  bool is_moe() const { return num_experts.has_value(); }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const ModelConfig& config, const std::filesystem::path& path);

/// One transformer-style block position. Attention is a pass-through, so the
/// block is the feed-forward part only. predictors holds nothing, one
/// predictor (dense block) or one per expert.
struct Layer {
  std::variant<FfnWeights, MoeLayer> block;
  std::vector<PredictorModel> predictors;

  bool is_moe() const { return block.index() == 1; }
  const FfnWeights& ffn() const { return std::get<FfnWeights>(block); }
  const MoeLayer& moe() const { return std::get<MoeLayer>(block); }
};

struct Model {
  ModelConfig config;
  std::vector<Layer> layers;
};

// Tensor names: layer.{i}.{gate|up|down}, layer.{i}.router,
// layer.{i}.expert.{e}.{gate|up|down}, layer.{i}.predictor.{w1|w2} and, for
// MoE layers, layer.{i}.expert.{e}.predictor.{w1|w2}.
TensorFile model_to_tensors(const Model& model);
Model model_from_tensors(const ModelConfig& config, const TensorFile& file);

/// Gaussian-initialized model; tensors are drawn in file order from one
/// stream derived from seed.
Model gen_synthetic_model(const ModelConfig& config, std::uint64_t seed, double init_std);

/// x + block(x) for every layer in turn.
Vector stack_forward(const Model& model, std::span<const float> x);

/// Path of the JSON config stored next to a model file.
std::filesystem::path config_path_for(const std::filesystem::path& model_path);

/// Writes model.tspw and its config sidecar.
void save_model(const Model& model, const std::filesystem::path& path);
/// Loads model.tspw using the sidecar config, or config when given.
Model load_model(const std::filesystem::path& path, const std::optional<ModelConfig>& config = std::nullopt);

}  // namespace sparsegate
