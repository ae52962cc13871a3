#pragma once

#include <map>
#include <vector>

#include "sparsegate/model.hpp"
#include "sparsegate/sparsity.hpp"

namespace sparsegate {

struct ProfileOptions {
  std::vector<double> thresholds{0.0};
  bool histograms = false;
  double histogram_limit = 1.0;
  std::size_t histogram_bins = ActivationHistogram::kDefaultBins;
  /// Inputs are profiled in chunks of this many vectors whose partial
  /// reports are merged; 0 profiles everything as one chunk.
  std::size_t chunk_size = 0;
};

struct UnitHistograms {
  ActivationHistogram gate_pre;
  ActivationHistogram up_pre;
  ActivationHistogram combined;
};

struct ProfileResult {
  SparsityReport report;
  std::map<UnitId, UnitHistograms> histograms;
};

/// Streams inputs through the residual stack (dense path) and records the
/// combined activation of every dense block and every routed expert. A unit
/// for an expert only sees the tokens routed to it.
ProfileResult profile_model(const Model& model, std::span<const Vector> inputs, const ProfileOptions& options);

/// Inputs seen by each block along the dense residual trajectory. For a
/// dense layer, result[i].front() holds one vector per input; for an MoE
/// layer, result[i][e] holds the inputs routed to expert e.
std::vector<std::vector<std::vector<Vector>>> unit_inputs(const Model& model, std::span<const Vector> inputs);

/// Top-k fidelity for a whole stack.
///
/// combined_deviation: mean over inputs and evaluated units of the dropped
///   L2 fraction ||C - topk(C)|| / ||C||, with C taken on the dense path.
/// output_deviation: mean over inputs of ||y_dense - y_masked|| /
///   ||y_dense - x||, i.e. the error relative to the residual update the
///   stack adds to its input, with every layer masked.
std::vector<DeviationRow> sweep_model(const Model& model, std::span<const Vector> inputs,
                                      std::span<const double> keep_fractions);

}  // namespace sparsegate
