#include "sparsegate/model.hpp"

#include <fstream>

#include <fmt/format.h>

namespace sparsegate {

void ModelConfig::validate() const {
  if (hidden_size == 0 || intermediate_size == 0 || num_layers == 0) {
    throw DomainError("model config: hidden_size, intermediate_size and num_layers must be positive");
  }
  if (num_experts.has_value() != experts_per_token.has_value()) {
    throw DomainError("model config: num_experts and experts_per_token go together");
  }
  if (num_experts && (*num_experts == 0 || *experts_per_token == 0 || *experts_per_token > *num_experts)) {
    throw DomainError("model config: need 1 <= experts_per_token <= num_experts");
  }
  if (predictor) {
    if (predictor->rank == 0 || predictor->rank > hidden_size) {
      throw DomainError("model config: predictor rank must lie in [1, hidden_size]");
    }
    if (!(predictor->threshold > 0.0 && predictor->threshold < 1.0)) {
      throw DomainError("model config: predictor threshold must lie in (0, 1)");
    }
  }
}

nlohmann::json to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["hidden_size"] = config.hidden_size;
  j["intermediate_size"] = config.intermediate_size;
  j["num_layers"] = config.num_layers;
  if (config.activation.tag() == ActivationTag::shifted_relu) {
    j["activation"] = {{"kind", "shifted_relu"}, {"threshold", config.activation.threshold()}};
  } else {
    j["activation"] = config.activation.name();
  }
  if (config.num_experts) {
    j["num_experts"] = *config.num_experts;
    j["experts_per_token"] = *config.experts_per_token;
  }
  if (config.predictor) {
    j["predictor"] = {{"rank", config.predictor->rank}, {"threshold", config.predictor->threshold}};
  }
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.intermediate_size = j.at("intermediate_size").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    const auto& act = j.at("activation");
    if (act.is_string()) {
      c.activation = ActivationKind::parse(act.get<std::string>());
    } else {
      const auto kind = act.at("kind").get<std::string>();
      if (kind != "shifted_relu") {
        c.activation = ActivationKind::parse(kind);
      } else {
        c.activation = ActivationKind::shifted_relu(act.value("threshold", 0.0));
      }
    }
    if (j.contains("num_experts")) c.num_experts = j.at("num_experts").get<std::size_t>();
    if (j.contains("experts_per_token")) c.experts_per_token = j.at("experts_per_token").get<std::size_t>();
    if (j.contains("predictor")) {
      const auto& p = j.at("predictor");
      c.predictor = PredictorConfig{p.at("rank").get<std::size_t>(),
                                    p.value("threshold", PredictorModel::kDefaultThreshold)};
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_config, e.what());
  } catch (const DomainError& e) {
    throw FormatError(FormatErrc::bad_config, e.what());
  }
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrc::io, fmt::format("cannot open config '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::bad_config, fmt::format("{}: {}", path.string(), e.what()));
  }
  return model_config_from_json(j);
}

void save_model_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, fmt::format("cannot write config '{}'", path.string()));
  out << to_json(config).dump(2) << '\n';
}

namespace {

Tensor matrix_tensor(std::string name, const Matrix& m) {
  return Tensor{std::move(name), {m.rows(), m.cols()}, m.values()};
}

Matrix tensor_matrix(const TensorFile& file, const std::string& name, std::size_t rows, std::size_t cols) {
  const auto& t = file.at(name);
  if (t.dims.size() != 2 || t.dims[0] != rows || t.dims[1] != cols) {
    throw FormatError(FormatErrc::shape_mismatch, fmt::format("tensor '{}' must be {}x{}", name, rows, cols));
  }
  try {
    return Matrix(rows, cols, t.f32());
  } catch (const NumericError& e) {
    throw FormatError(FormatErrc::shape_mismatch, fmt::format("tensor '{}': {}", name, e.what()));
  }
}

void add_ffn(TensorFile& file, const std::string& prefix, const FfnWeights& w) {
  file.add(matrix_tensor(prefix + ".gate", w.w_gate()));
  file.add(matrix_tensor(prefix + ".up", w.w_up()));
  file.add(matrix_tensor(prefix + ".down", w.w_down()));
}

void add_predictor(TensorFile& file, const std::string& prefix, const PredictorModel& p) {
  file.add(matrix_tensor(prefix + ".predictor.w1", p.w1()));
  file.add(matrix_tensor(prefix + ".predictor.w2", p.w2()));
}

FfnWeights read_ffn(const TensorFile& file, const std::string& prefix, const ModelConfig& c) {
  const std::size_t d = c.hidden_size;
  const std::size_t n = c.intermediate_size;
  return FfnWeights(tensor_matrix(file, prefix + ".gate", n, d), tensor_matrix(file, prefix + ".up", n, d),
                    tensor_matrix(file, prefix + ".down", d, n), c.activation);
}

std::optional<PredictorModel> read_predictor(const TensorFile& file, const std::string& prefix, const ModelConfig& c) {
  const auto* w1 = file.find(prefix + ".predictor.w1");
  if (w1 == nullptr) return std::nullopt;
  if (w1->dims.size() != 2) throw FormatError(FormatErrc::shape_mismatch, prefix + ".predictor.w1 must be 2-D");
  const auto rank = static_cast<std::size_t>(w1->dims[0]);
  const double threshold = c.predictor ? c.predictor->threshold : PredictorModel::kDefaultThreshold;
  return PredictorModel(tensor_matrix(file, prefix + ".predictor.w1", rank, c.hidden_size),
                        tensor_matrix(file, prefix + ".predictor.w2", c.intermediate_size, rank), threshold);
}

}  // namespace

TensorFile model_to_tensors(const Model& model) {
  TensorFile file;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    const std::string prefix = fmt::format("layer.{}", i);
    if (!layer.is_moe()) {
      add_ffn(file, prefix, layer.ffn());
      for (const auto& p : layer.predictors) add_predictor(file, prefix, p);
      continue;
    }
    const auto& moe = layer.moe();
    file.add(matrix_tensor(prefix + ".router", moe.router()));
    for (std::size_t e = 0; e < moe.num_experts(); ++e) add_ffn(file, fmt::format("{}.expert.{}", prefix, e), moe.expert(e));
    for (std::size_t e = 0; e < layer.predictors.size(); ++e) {
      add_predictor(file, fmt::format("{}.expert.{}", prefix, e), layer.predictors[e]);
    }
  }
  return file;
}

Model model_from_tensors(const ModelConfig& config, const TensorFile& file) {
  config.validate();
  Model model{config, {}};
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    const std::string prefix = fmt::format("layer.{}", i);
    if (!config.is_moe()) {
      Layer layer{read_ffn(file, prefix, config), {}};
      if (auto p = read_predictor(file, prefix, config)) layer.predictors.push_back(std::move(*p));
      model.layers.push_back(std::move(layer));
      continue;
    }
    const std::size_t experts = *config.num_experts;
    std::vector<FfnWeights> ffns;
    std::vector<PredictorModel> predictors;
    for (std::size_t e = 0; e < experts; ++e) {
      const std::string ep = fmt::format("{}.expert.{}", prefix, e);
      ffns.push_back(read_ffn(file, ep, config));
      if (auto p = read_predictor(file, ep, config)) predictors.push_back(std::move(*p));
    }
    if (!predictors.empty() && predictors.size() != experts) {
      throw FormatError(FormatErrc::missing_tensor, fmt::format("{}: predictors present for only some experts", prefix));
    }
    MoeLayer moe(tensor_matrix(file, prefix + ".router", experts, config.hidden_size), std::move(ffns),
                 *config.experts_per_token);
    model.layers.push_back(Layer{std::move(moe), std::move(predictors)});
  }
  return model;
}

Model gen_synthetic_model(const ModelConfig& config, std::uint64_t seed, double init_std) {
  config.validate();
  Rng rng(derive_seed(seed, 0));
  const std::size_t d = config.hidden_size;
  const std::size_t n = config.intermediate_size;
  Model model{config, {}};
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    if (!config.is_moe()) {
      model.layers.push_back(Layer{gaussian_ffn<float>(d, n, config.activation, init_std, rng), {}});
      continue;
    }
    Matrix router = gaussian_matrix<float>(*config.num_experts, d, init_std, rng);
    std::vector<FfnWeights> experts;
    for (std::size_t e = 0; e < *config.num_experts; ++e) {
      experts.push_back(gaussian_ffn<float>(d, n, config.activation, init_std, rng));
    }
    model.layers.push_back(Layer{MoeLayer(std::move(router), std::move(experts), *config.experts_per_token), {}});
  }
  return model;
}

Vector stack_forward(const Model& model, std::span<const float> x) {
  Vector h(std::vector<float>(x.begin(), x.end()));
  for (const auto& layer : model.layers) {
    const Vector y = layer.is_moe() ? moe_forward(layer.moe(), h.span()) : ffn_forward(layer.ffn(), h.span()).output;
    for (std::size_t k = 0; k < h.size(); ++k) h[k] += y[k];
  }
  return h;
}

std::filesystem::path config_path_for(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".config.json";
  return p;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  save_tspw(model_to_tensors(model), path);
  save_model_config(model.config, config_path_for(path));
}

Model load_model(const std::filesystem::path& path, const std::optional<ModelConfig>& config) {
  const ModelConfig c = config ? *config : load_model_config(config_path_for(path));
  return model_from_tensors(c, load_tspw(path));
}

}  // namespace sparsegate
