#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sparsegate/activations.hpp"
#include "sparsegate/moe.hpp"
#include "sparsegate/sparsity.hpp"

namespace sparsegate {

/// Low-rank activation predictor: score = w2 * relu(w1 * x); neuron j is
/// predicted active when sigmoid(score_j) > threshold.
class PredictorModel {
 public:
  static constexpr double kDefaultThreshold = 0.5;

  PredictorModel(Matrix w1, Matrix w2, double threshold = kDefaultThreshold);

  std::size_t rank() const { return w1_.rows(); }
  std::size_t d() const { return w1_.cols(); }
  std::size_t n() const { return w2_.rows(); }
  double threshold() const { return threshold_; }
  const Matrix& w1() const { return w1_; }
  const Matrix& w2() const { return w2_; }

  PredictorModel with_threshold(double threshold) const { return PredictorModel(w1_, w2_, threshold); }

  Vector scores(std::span<const float> x) const;

 private:
  Matrix w1_;
  Matrix w2_;
  double threshold_;
};

NeuronMask predict_mask(const PredictorModel& p, std::span<const float> x);

/// Inputs paired with their exact activity pattern (combined != 0).
struct TrainingSet {
  std::vector<Vector> inputs;
  std::vector<std::vector<std::uint8_t>> masks;

  std::size_t size() const { return inputs.size(); }
  double active_fraction() const;
};

/// Requires an activation kind with exact zeros (every kind except swiglu).
TrainingSet collect_training_set(const FfnWeights& w, std::span<const Vector> inputs);

/// Per-expert training sets holding only the inputs routed to each expert.
std::vector<TrainingSet> collect_expert_training_sets(const MoeLayer& layer, std::span<const Vector> inputs);

struct TrainConfig {
  std::size_t rank = 0;
  std::size_t epochs = 50;
  double learning_rate = 4.0;
  std::size_t batch_size = 64;  // 0 = full batch
  double threshold = PredictorModel::kDefaultThreshold;
  /// Weight of the positive (active) class in the cross-entropy. Values
  /// above 1 trade precision for recall.
  double positive_weight = 1.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  PredictorModel model;
  /// Full-set loss before training (index 0) and after each epoch.
  std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent with a fixed learning rate on the weighted
/// per-neuron binary cross-entropy, averaged over neurons and samples.
/// Deterministic for a given rng state. Throws TrainingDiverged if the loss
/// becomes non-finite.
TrainResult train_predictor(const TrainingSet& set, const TrainConfig& config, Rng& rng);

double predictor_loss(const PredictorModel& p, const TrainingSet& set, double positive_weight = 1.0);

struct PredictorMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double predicted_active_fraction = 0.0;
  double true_active_fraction = 0.0;
  double output_deviation = 0.0;  // mean relative L2, sparse-with-predicted-mask vs dense
  std::size_t samples = 0;
};

using MaskSource = std::function<NeuronMask(std::span<const float>)>;

/// Scores arbitrary masks against exact activity. recall and precision are
/// pooled over all samples (1.0 when the denominator is empty).
PredictorMetrics evaluate_masks(const FfnWeights& w, std::span<const Vector> inputs, const MaskSource& masks);

PredictorMetrics evaluate_predictor(const PredictorModel& p, const FfnWeights& w, std::span<const Vector> inputs);

/// Exact active set of w at x.
NeuronMask oracle_mask(const FfnWeights& w, std::span<const float> x);

/// MoE forward where each routed expert runs neuron-sparse on the mask from
/// its own predictor; experts that are not routed are never scored.
Vector moe_forward_predicted(const MoeLayer& layer, std::span<const float> x,
                             std::span<const PredictorModel> predictors);

}  // namespace sparsegate
