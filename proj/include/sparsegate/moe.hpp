#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sparsegate/activations.hpp"
#include "sparsegate/sparsity.hpp"

namespace sparsegate {

/// Router plus E gated experts; each token is sent to experts_per_token of them.
class MoeLayer {
 public:
  MoeLayer(Matrix router, std::vector<FfnWeights> experts, std::size_t experts_per_token);

  std::size_t num_experts() const { return experts_.size(); }
  std::size_t experts_per_token() const { return experts_per_token_; }
  std::size_t d() const { return router_.cols(); }
  std::size_t n() const { return experts_.front().n(); }
  const Matrix& router() const { return router_; }
  const std::vector<FfnWeights>& experts() const { return experts_; }
  const FfnWeights& expert(std::size_t e) const { return experts_.at(e); }

 private:
  Matrix router_;
  std::vector<FfnWeights> experts_;
  std::size_t experts_per_token_;
};

struct RoutedExpert {
  std::size_t expert = 0;
  float weight = 0.0F;

  friend bool operator==(const RoutedExpert&, const RoutedExpert&) = default;
};

/// Top-a experts by router logit (equal logits prefer the lower index) with
/// softmax weights renormalized over the selected logits. The result is
/// ordered by ascending expert index.
std::vector<RoutedExpert> route(const MoeLayer& layer, std::span<const float> x);

/// How each routed expert is evaluated. At most one of the two fields may be
/// set; with neither, experts run dense.
struct MoeExecution {
  std::optional<double> keep_fraction;          // top-k masking per expert
  std::optional<std::vector<NeuronMask>> masks;  // one mask per expert, neuron-sparse kernel
};

/// Weighted sum of routed expert outputs, accumulated in ascending expert
/// index order.
Vector moe_forward(const MoeLayer& layer, std::span<const float> x, const MoeExecution& exec = {});

struct SparsityComposition {
  double expert_sparsity = 0.0;
  double neuron_sparsity = 0.0;
  double combined_active_fraction = 0.0;
  double combined_sparsity = 0.0;
};

/// Composes routing sparsity (1 - a/E) with neuron sparsity inside routed
/// experts. Results are snapped to 15 significant decimal digits so that
/// decimal inputs give their exact decimal result (e.g. 0.0375, not
/// 0.037500000000000006).
SparsityComposition compose_sparsity(std::size_t num_experts, std::size_t experts_per_token, double neuron_sparsity);

struct ArchConfig {
  std::size_t hidden_size = 0;
  std::size_t intermediate_size = 0;
  std::size_t num_layers = 0;
  std::size_t num_experts = 1;
  std::size_t experts_per_token = 1;
  std::uint64_t attention_params_per_layer = 0;
  std::uint64_t embedding_params = 0;
};

struct ActivatedParams {
  std::uint64_t attention = 0;
  std::uint64_t embedding = 0;
  std::uint64_t router = 0;
  std::uint64_t ffn = 0;
  std::uint64_t active_neurons_per_expert = 0;
  std::uint64_t total = 0;
};

/// Parameters touched per token. Attention, embeddings and routers are
/// counted dense; each routed expert contributes 3 * d * ceil((1 - s) * n).
ActivatedParams count_activated_params(const ArchConfig& arch, double neuron_sparsity);

/// Mistral-7B-shaped dense architecture (grouped-query attention with 8 KV
/// heads, 32k vocabulary, untied embeddings).
ArchConfig mistral_7b_arch();

/// Mixtral-8x7B-shaped architecture (Mistral-7B blocks with 8 experts, 2 routed).
ArchConfig mixtral_8x7b_arch();

}  // namespace sparsegate
