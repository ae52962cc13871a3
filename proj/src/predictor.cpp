#include "sparsegate/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "sparsegate/sparse_ffn.hpp"

namespace sparsegate {

PredictorModel::PredictorModel(Matrix w1, Matrix w2, double threshold)
    : w1_(std::move(w1)), w2_(std::move(w2)), threshold_(threshold) {
  if (w1_.rows() == 0 || w1_.cols() == 0) throw ShapeError("predictor: empty w1");
  if (w2_.cols() != w1_.rows()) throw ShapeError("predictor: w2 must be n x rank");
  if (w1_.rows() > w1_.cols()) throw DomainError("predictor: rank must not exceed the hidden size");
  if (!(threshold_ > 0.0 && threshold_ < 1.0)) {
    throw DomainError(fmt::format("predictor: threshold {} outside (0, 1)", threshold_));
  }
}

Vector PredictorModel::scores(std::span<const float> x) const {
  Vector hidden = matvec(w1_, x);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = relu(hidden[i]);
  return matvec(w2_, hidden.span());
}

NeuronMask predict_mask(const PredictorModel& p, std::span<const float> x) {
  const Vector s = p.scores(x);
  std::vector<std::uint32_t> active;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (static_cast<double>(sigmoid(s[j])) > p.threshold()) active.push_back(static_cast<std::uint32_t>(j));
  }
  return NeuronMask(p.n(), std::move(active));
}

double TrainingSet::active_fraction() const {
  std::uint64_t active = 0;
  std::uint64_t total = 0;
  for (const auto& m : masks) {
    active += static_cast<std::uint64_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    total += m.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(total);
}

NeuronMask oracle_mask(const FfnWeights& w, std::span<const float> x) {
  const auto result = ffn_forward(w, x, true);
  return NeuronMask::from_nonzero(result.trace->combined.span());
}

TrainingSet collect_training_set(const FfnWeights& w, std::span<const Vector> inputs) {
  if (!w.kind().has_exact_zeros()) {
    throw DomainError(fmt::format("collect_training_set: activation '{}' has no exact-zero ground truth",
                                  w.kind().name()));
  }
  TrainingSet set;
  set.inputs.reserve(inputs.size());
  set.masks.reserve(inputs.size());
  for (const auto& x : inputs) {
    const auto result = ffn_forward(w, x.span(), true);
    std::vector<std::uint8_t> mask(w.n());
    const auto& comb = result.trace->combined;
    for (std::size_t j = 0; j < w.n(); ++j) mask[j] = comb[j] != 0.0F ? 1 : 0;
    set.inputs.push_back(x);
    set.masks.push_back(std::move(mask));
  }
  return set;
}

std::vector<TrainingSet> collect_expert_training_sets(const MoeLayer& layer, std::span<const Vector> inputs) {
  std::vector<std::vector<Vector>> routed(layer.num_experts());
  for (const auto& x : inputs) {
    for (const auto& r : route(layer, x.span())) routed[r.expert].push_back(x);
  }
  std::vector<TrainingSet> sets;
  sets.reserve(layer.num_experts());
  for (std::size_t e = 0; e < layer.num_experts(); ++e) sets.push_back(collect_training_set(layer.expert(e), routed[e]));
  return sets;
}

namespace {

// softplus(t) = log(1 + e^t) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sample_loss(const Vector& scores, const std::vector<std::uint8_t>& mask, double positive_weight) {
  double loss = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double s = scores[j];
    loss += mask[j] != 0 ? positive_weight * softplus(-s) : softplus(s);
  }
  return loss;
}

void check_set(const TrainingSet& set) {
  if (set.inputs.empty()) throw DomainError("predictor training needs at least one pair");
  if (set.masks.size() != set.inputs.size()) throw ShapeError("training set: inputs and masks differ in count");
  const std::size_t d = set.inputs.front().size();
  const std::size_t n = set.masks.front().size();
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.inputs[i].size() != d || set.masks[i].size() != n) throw ShapeError("training set: ragged pairs");
  }
}

}  // namespace

double predictor_loss(const PredictorModel& p, const TrainingSet& set, double positive_weight) {
  check_set(set);
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) total += sample_loss(p.scores(set.inputs[i].span()), set.masks[i], positive_weight);
  return total / (static_cast<double>(set.size()) * static_cast<double>(p.n()));
}

TrainResult train_predictor(const TrainingSet& set, const TrainConfig& config, Rng& rng) {
  check_set(set);
  const std::size_t d = set.inputs.front().size();
  const std::size_t n = set.masks.front().size();
  const std::size_t r = config.rank;
  if (r < 1) throw DomainError("train_predictor: rank must be >= 1");
  if (r > d) throw DomainError("train_predictor: rank must not exceed the hidden size");
  if (!(config.learning_rate > 0.0)) throw DomainError("train_predictor: learning rate must be positive");
  if (!(config.positive_weight > 0.0)) throw DomainError("train_predictor: positive weight must be positive");

  Matrix w1 = gaussian_matrix<float>(r, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  Matrix w2 = gaussian_matrix<float>(n, r, 1.0 / std::sqrt(static_cast<double>(r)), rng);

  const std::size_t batch = config.batch_size == 0 ? set.size() : std::min(config.batch_size, set.size());
  const auto pw = static_cast<float>(config.positive_weight);

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> g1(r * d);
  std::vector<float> g2(n * r);
  std::vector<float> z1(r);
  std::vector<float> h(r);
  std::vector<float> ds(n);
  std::vector<float> dh(r);

  std::vector<double> losses;
  losses.push_back(predictor_loss(PredictorModel(w1, w2, config.threshold), set, config.positive_weight));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = set.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < set.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, set.size());
      std::fill(g1.begin(), g1.end(), 0.0F);
      std::fill(g2.begin(), g2.end(), 0.0F);
      const float scale = 1.0F / static_cast<float>((stop - start) * n);

      for (std::size_t b = start; b < stop; ++b) {
        const auto& x = set.inputs[order[b]];
        const auto& y = set.masks[order[b]];
        for (std::size_t q = 0; q < r; ++q) {
          z1[q] = dot<float>(w1.row(q), x.span());
          h[q] = relu(z1[q]);
        }
        for (std::size_t j = 0; j < n; ++j) {
          const float s = dot<float>(w2.row(j), std::span<const float>(h));
          const float p = sigmoid(s);
          const float target_weight = y[j] != 0 ? pw : 0.0F;
          // d/ds of pw*y*softplus(-s) + (1-y)*softplus(s)
          ds[j] = scale * (p * (target_weight + (y[j] != 0 ? 0.0F : 1.0F)) - target_weight);
        }
        std::fill(dh.begin(), dh.end(), 0.0F);
        for (std::size_t j = 0; j < n; ++j) {
          const float dsj = ds[j];
          float* g2row = g2.data() + j * r;
          const auto w2row = w2.row(j);
          for (std::size_t q = 0; q < r; ++q) {
            g2row[q] += dsj * h[q];
            dh[q] += dsj * w2row[q];
          }
        }
        for (std::size_t q = 0; q < r; ++q) {
          if (z1[q] <= 0.0F) continue;
          const float dq = dh[q];
          float* g1row = g1.data() + q * d;
          for (std::size_t k = 0; k < d; ++k) g1row[k] += dq * x[k];
        }
      }

      const auto lr = static_cast<float>(config.learning_rate);
      float* p1 = w1.data();
      for (std::size_t i = 0; i < g1.size(); ++i) p1[i] -= lr * g1[i];
      float* p2 = w2.data();
      for (std::size_t i = 0; i < g2.size(); ++i) p2[i] -= lr * g2[i];
    }

    if (!all_finite<float>(w1.span()) || !all_finite<float>(w2.span())) {
      throw TrainingDiverged(fmt::format("predictor weights became non-finite in epoch {}", epoch + 1));
    }
    double loss = 0.0;
    try {
      loss = predictor_loss(PredictorModel(w1, w2, config.threshold), set, config.positive_weight);
    } catch (const NumericError& e) {
      throw TrainingDiverged(fmt::format("predictor scores overflowed in epoch {}: {}", epoch + 1, e.what()));
    }
    if (!std::isfinite(loss)) throw TrainingDiverged(fmt::format("predictor loss became non-finite in epoch {}", epoch + 1));
    losses.push_back(loss);
  }
  return TrainResult{PredictorModel(std::move(w1), std::move(w2), config.threshold), std::move(losses)};
}

PredictorMetrics evaluate_masks(const FfnWeights& w, std::span<const Vector> inputs, const MaskSource& masks) {
  PredictorMetrics m;
  std::uint64_t true_active = 0;
  std::uint64_t predicted = 0;
  std::uint64_t hits = 0;
  double deviation = 0.0;
  for (const auto& x : inputs) {
    const auto dense = ffn_forward(w, x.span(), true);
    const auto truth = NeuronMask::from_nonzero(dense.trace->combined.span());
    const auto guess = masks(x.span());
    if (guess.n() != w.n()) throw ShapeError("evaluate: mask size does not match block width");
    std::vector<std::uint32_t> both;
    std::set_intersection(truth.active().begin(), truth.active().end(), guess.active().begin(), guess.active().end(),
                          std::back_inserter(both));
    true_active += truth.size();
    predicted += guess.size();
    hits += both.size();
    const auto sparse = sparse_ffn_forward(w, x.span(), guess);
    deviation += relative_l2(dense.output.span(), sparse.span());
  }
  const double total = static_cast<double>(inputs.size()) * static_cast<double>(w.n());
  m.samples = inputs.size();
  m.recall = true_active == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(true_active);
  m.precision = predicted == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(predicted);
  m.predicted_active_fraction = total == 0.0 ? 0.0 : static_cast<double>(predicted) / total;
  m.true_active_fraction = total == 0.0 ? 0.0 : static_cast<double>(true_active) / total;
  m.output_deviation = inputs.empty() ? 0.0 : deviation / static_cast<double>(inputs.size());
  return m;
}

PredictorMetrics evaluate_predictor(const PredictorModel& p, const FfnWeights& w, std::span<const Vector> inputs) {
  if (p.d() != w.d() || p.n() != w.n()) throw ShapeError("evaluate_predictor: predictor does not match block shape");
  return evaluate_masks(w, inputs, [&](std::span<const float> x) { return predict_mask(p, x); });
}

Vector moe_forward_predicted(const MoeLayer& layer, std::span<const float> x,
                             std::span<const PredictorModel> predictors) {
  if (predictors.size() != layer.num_experts()) throw ShapeError("moe_forward_predicted: need one predictor per expert");
  Vector out(layer.d());
  for (const auto& [e, weight] : route(layer, x)) {
    const auto mask = predict_mask(predictors[e], x);
    const auto y = sparse_ffn_forward(layer.expert(e), x, mask);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * y[k];
  }
  return out;
}

}  // namespace sparsegate
