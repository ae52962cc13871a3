#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsegate/activations.hpp"
#include "sparsegate/sparsity.hpp"

namespace sparsegate {

/// Multiply-accumulate counter filled in by the instrumented kernels.
struct KernelCounters {
  std::uint64_t multiply_adds = 0;
};

/// Execution layout for neuron-sparse evaluation of one gated block.
///
/// Gate and up rows are read in place from the referenced weights; the down
/// projection is additionally kept transposed (n x d) so that the column of
/// an active neuron is a contiguous run of d floats. The referenced
/// FfnWeights must outlive this object.
class GatheredFfn {
 public:
  explicit GatheredFfn(const FfnWeights& weights);

  const FfnWeights& weights() const { return *weights_; }
  std::size_t d() const { return weights_->d(); }
  std::size_t n() const { return weights_->n(); }

  /// Column j of w_down, i.e. the d output weights of neuron j.
  std::span<const float> down_column(std::size_t j) const { return {down_t_.data() + j * d(), d()}; }

 private:
  const FfnWeights* weights_;
  std::vector<float> down_t_;
};

/// Evaluates only the neurons in mask. gate/up dot products and the
/// down-projection accumulation follow the same ascending-index order as
/// ffn_forward, so a mask covering every nonzero combined entry reproduces
/// the dense output bit for bit.
Vector sparse_ffn_forward(const GatheredFfn& g, std::span<const float> x, const NeuronMask& mask,
                          KernelCounters* counters = nullptr);

/// Same computation reading w_down columns with a stride; used where no
/// transposed copy is available (e.g. per-expert evaluation).
Vector sparse_ffn_forward(const FfnWeights& w, std::span<const float> x, const NeuronMask& mask);

/// Dense baseline built from the same kernels as sparse_ffn_forward.
Vector dense_ffn_forward(const GatheredFfn& g, std::span<const float> x, KernelCounters* counters = nullptr);

struct BenchConfig {
  std::size_t d = 4096;
  std::size_t n = 14336;
  std::vector<double> sparsities{0.0, 0.5, 0.75, 0.9};
  std::size_t iterations = 100;
  std::size_t warmup = 5;
  std::uint64_t seed = 0;
  double init_std = 0.02;
};

struct BenchResult {
  std::size_t d = 0;
  std::size_t n = 0;
  double sparsity = 0.0;
  std::size_t active = 0;
  std::size_t threads = 1;
  std::size_t iterations = 0;
  double dense_us = 0.0;   // median per call
  double sparse_us = 0.0;  // median per call
  double speedup = 0.0;    // dense_us / sparse_us
  std::uint64_t flops_dense = 0;
  std::uint64_t flops_sparse = 0;
  double checksum_dense = 0.0;
  double checksum_sparse = 0.0;
};

struct MachineInfo {
  std::string cpu;
  std::string compiler;
  std::string build_type;
  std::string hostname;
};

MachineInfo machine_info();

struct BenchReport {
  MachineInfo machine;
  std::vector<BenchResult> results;
};

/// Single-threaded dense vs neuron-sparse timing. One dense measurement is
/// shared by all sparsity levels; each level uses a seeded random active set
/// of n - round(sparsity * n) neurons. Times are medians over
/// config.iterations calls after config.warmup untimed calls.
BenchReport bench_ffn(const BenchConfig& config);

double median(std::vector<double> values);

}  // namespace sparsegate
