#include "sparsegate/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "sparsegate/sparse_ffn.hpp"

namespace sparsegate {

MoeLayer::MoeLayer(Matrix router, std::vector<FfnWeights> experts, std::size_t experts_per_token)
    : router_(std::move(router)), experts_(std::move(experts)), experts_per_token_(experts_per_token) {
  if (experts_.empty()) throw ShapeError("moe: at least one expert required");
  if (experts_per_token_ < 1 || experts_per_token_ > experts_.size()) {
    throw DomainError(fmt::format("moe: experts_per_token {} must lie in [1, {}]", experts_per_token_, experts_.size()));
  }
  if (router_.rows() != experts_.size()) throw ShapeError("moe: router must have one row per expert");
  for (const auto& e : experts_) {
    if (e.d() != router_.cols() || e.n() != experts_.front().n()) throw ShapeError("moe: experts differ in shape");
  }
}

std::vector<RoutedExpert> route(const MoeLayer& layer, std::span<const float> x) {
  if (x.size() != layer.d()) throw ShapeError("route: input length does not match hidden size");
  const Vector logits = matvec(layer.router(), x);
  std::vector<std::size_t> order(layer.num_experts());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(layer.experts_per_token());
  std::sort(order.begin(), order.end());

  double max_logit = -INFINITY;
  for (auto e : order) max_logit = std::max(max_logit, static_cast<double>(logits[e]));
  std::vector<double> weights;
  double total = 0.0;
  for (auto e : order) {
    weights.push_back(std::exp(static_cast<double>(logits[e]) - max_logit));
    total += weights.back();
  }
  std::vector<RoutedExpert> routed;
  routed.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) routed.push_back({order[i], static_cast<float>(weights[i] / total)});
  return routed;
}

Vector moe_forward(const MoeLayer& layer, std::span<const float> x, const MoeExecution& exec) {
  if (exec.keep_fraction && exec.masks) throw DomainError("moe_forward: pass either keep_fraction or masks, not both");
  if (exec.keep_fraction) kept_count(*exec.keep_fraction, layer.n());  // validates the range
  if (exec.masks) {
    if (exec.masks->size() != layer.num_experts()) throw ShapeError("moe_forward: need one mask per expert");
    for (const auto& m : *exec.masks) {
      if (m.n() != layer.n()) throw ShapeError("moe_forward: mask size does not match expert width");
    }
  }

  Vector out(layer.d());
  for (const auto& [e, weight] : route(layer, x)) {
    const auto& expert = layer.expert(e);
    Vector y;
    if (exec.keep_fraction) {
      y = masked_ffn_forward(expert, x, *exec.keep_fraction);
    } else if (exec.masks) {
      y = sparse_ffn_forward(expert, x, (*exec.masks)[e]);
    } else {
      y = ffn_forward(expert, x).output;
    }
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * y[k];
  }
  return out;
}

namespace {

double snap_decimal(double value) { return std::stod(fmt::format("{:.15g}", value)); }

}  // namespace

SparsityComposition compose_sparsity(std::size_t num_experts, std::size_t experts_per_token, double neuron_sparsity) {
  if (num_experts < 1 || experts_per_token < 1 || experts_per_token > num_experts) {
    throw DomainError(fmt::format("compose_sparsity: need 1 <= a <= E, got a={} E={}", experts_per_token, num_experts));
  }
  if (!(neuron_sparsity >= 0.0 && neuron_sparsity <= 1.0)) {
    throw DomainError(fmt::format("compose_sparsity: neuron sparsity {} outside [0, 1]", neuron_sparsity));
  }
  const double routed = static_cast<double>(experts_per_token) / static_cast<double>(num_experts);
  SparsityComposition c;
  c.expert_sparsity = snap_decimal(1.0 - routed);
  c.neuron_sparsity = neuron_sparsity;
  c.combined_active_fraction = snap_decimal(routed * (1.0 - neuron_sparsity));
  c.combined_sparsity = snap_decimal(1.0 - c.combined_active_fraction);
  return c;
}

ActivatedParams count_activated_params(const ArchConfig& arch, double neuron_sparsity) {
  if (arch.hidden_size == 0 || arch.intermediate_size == 0) throw DomainError("count: sizes must be positive");
  if (arch.experts_per_token < 1 || arch.experts_per_token > arch.num_experts) {
    throw DomainError("count: need 1 <= experts_per_token <= num_experts");
  }
  if (!(neuron_sparsity >= 0.0 && neuron_sparsity <= 1.0)) throw DomainError("count: neuron sparsity outside [0, 1]");

  const auto d = static_cast<std::uint64_t>(arch.hidden_size);
  const auto layers = static_cast<std::uint64_t>(arch.num_layers);
  // The epsilon absorbs binary rounding of the decimal sparsity, so that
  // e.g. (1 - 0.7) * 10 counts 3 neurons, not 4.
  const double exact = (1.0 - neuron_sparsity) * static_cast<double>(arch.intermediate_size);
  const auto active = static_cast<std::uint64_t>(std::max(0.0, std::ceil(exact - 1e-9)));

  ActivatedParams p;
  p.active_neurons_per_expert = active;
  p.attention = layers * arch.attention_params_per_layer;
  p.embedding = arch.embedding_params;
  p.router = arch.num_experts > 1 ? layers * arch.num_experts * d : 0;
  p.ffn = layers * arch.experts_per_token * 3 * d * active;
  p.total = p.attention + p.embedding + p.router + p.ffn;
  return p;
}

ArchConfig mistral_7b_arch() {
  ArchConfig a;
  a.hidden_size = 4096;
  a.intermediate_size = 14336;
  a.num_layers = 32;
  const std::uint64_t d = 4096;
  const std::uint64_t kv = 1024;  // 8 KV heads x 128
  a.attention_params_per_layer = 2 * d * d + 2 * d * kv + 2 * d;  // q, o, k, v, two norms
  a.embedding_params = 2 * 32000 * d + d;                           // embed, lm head, final norm
  return a;
}

ArchConfig mixtral_8x7b_arch() {
  ArchConfig a = mistral_7b_arch();
  a.num_experts = 8;
  a.experts_per_token = 2;
  return a;
}

}  // namespace sparsegate
