#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sparsegate/activations.hpp"
#include "sparsegate/tensor.hpp"

namespace sparsegate {

/// Set of active neurons over an intermediate dimension of size n, kept as a
/// strictly ascending index list.
class NeuronMask {
 public:
  NeuronMask() = default;
  NeuronMask(std::size_t n, std::vector<std::uint32_t> active);

  static NeuronMask full(std::size_t n);
  static NeuronMask none(std::size_t n);
  /// Indices whose value is not exactly zero.
  static NeuronMask from_nonzero(std::span<const float> values);

  std::size_t n() const { return n_; }
  std::size_t size() const { return active_.size(); }
  const std::vector<std::uint32_t>& active() const { return active_; }
  double sparsity() const;
  bool contains(std::size_t j) const;
  bool is_superset_of(const NeuronMask& other) const;

  friend bool operator==(const NeuronMask&, const NeuronMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint32_t> active_;
};

/// Number of neurons kept for a keep fraction: round(keep * n), halves
/// rounded away from zero.
std::size_t kept_count(double keep_fraction, std::size_t n);

/// Indices of the round(keep * n) largest |combined| values. Equal
/// magnitudes prefer the lower index.
NeuronMask topk_mask(std::span<const float> combined, double keep_fraction);

/// Copy of values with every index outside the mask set to +0.
Vector apply_mask(std::span<const float> values, const NeuronMask& mask);

/// Gated block whose combined activation is restricted to its top-k
/// magnitudes before the down projection.
Vector masked_ffn_forward(const FfnWeights& w, std::span<const float> x, double keep_fraction);

struct UnitId {
  int layer = 0;
  int expert = -1;  // -1 for a dense block

  auto operator<=>(const UnitId&) const = default;
  bool is_expert() const { return expert >= 0; }
};

/// Streaming counts for one unit. Counts are integers so that merging is
/// exact, associative and commutative.
struct UnitSparsity {
  std::uint64_t vectors = 0;
  std::uint64_t samples = 0;
  std::uint64_t zeros = 0;
  std::vector<double> thresholds;
  std::vector<std::uint64_t> at_or_below;

  double zero_fraction() const;
  double threshold_fraction(std::size_t i) const;

  friend bool operator==(const UnitSparsity&, const UnitSparsity&) = default;
};

class SparsityReport {
 public:
  /// Accumulates one activation vector. thresholds must be ascending and
  /// identical for every record of the same unit.
  void record(UnitId unit, std::span<const float> values, std::span<const double> thresholds);

  void merge(const SparsityReport& other);

  const std::map<UnitId, UnitSparsity>& units() const { return units_; }
  const UnitSparsity& at(UnitId unit) const;

  friend bool operator==(const SparsityReport&, const SparsityReport&) = default;

 private:
  std::map<UnitId, UnitSparsity> units_;
};

/// Records trace.combined for unit and returns the updated report.
SparsityReport record_sparsity(SparsityReport report, UnitId unit, const FfnTrace& trace,
                               std::span<const double> thresholds);

SparsityReport merge(SparsityReport a, const SparsityReport& b);

enum class Signal { gate_pre, up_pre, combined };

std::string signal_name(Signal s);
Signal parse_signal(std::string_view text);

/// Uniform bins over [-limit, limit] plus underflow and overflow counters.
/// A value equal to +limit lands in the last bin.
class ActivationHistogram {
 public:
  static constexpr std::size_t kDefaultBins = 201;

  explicit ActivationHistogram(Signal signal, double limit = 1.0, std::size_t bins = kDefaultBins);

  void record(std::span<const float> values);
  void record(const FfnTrace& trace);
  void merge(const ActivationHistogram& other);

  Signal signal() const { return signal_; }
  double limit() const { return limit_; }
  std::size_t bins() const { return counts_.size(); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t underflow() const { return underflow_; }
  std::uint64_t overflow() const { return overflow_; }
  std::uint64_t samples() const { return samples_; }
  double bin_lower(std::size_t bin) const;
  double bin_upper(std::size_t bin) const;
  std::size_t bin_of(double value) const;  // only for values within [-limit, limit]

  friend bool operator==(const ActivationHistogram&, const ActivationHistogram&) = default;

 private:
  Signal signal_;
  double limit_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t underflow_ = 0;
  std::uint64_t overflow_ = 0;
  std::uint64_t samples_ = 0;
};

ActivationHistogram record_histogram(ActivationHistogram hist, const FfnTrace& trace);

struct DeviationRow {
  double keep_fraction = 0.0;
  double combined_deviation = 0.0;  // mean ||C - C_masked|| / ||C||
  double output_deviation = 0.0;    // mean relative L2 of the block output
};

/// Fidelity of top-k masking for each keep fraction, averaged over inputs.
std::vector<DeviationRow> deviation_sweep(const FfnWeights& w, std::span<const Vector> inputs,
                                          std::span<const double> keep_fractions);

void validate_keep_fractions(std::span<const double> keep_fractions);

}  // namespace sparsegate
