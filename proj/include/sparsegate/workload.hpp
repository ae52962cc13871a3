#pragma once

#include <cstdint>
#include <vector>

#include "sparsegate/tensor.hpp"

namespace sparsegate {

/// Distribution of synthetic block inputs.
///
/// latent_dim == 0: x ~ normal(0, I).
/// latent_dim > 0:  x = A z + noise * e with z ~ normal(0, I_latent),
///                  e ~ normal(0, I_d) and a fixed mixing matrix A whose
///                  entries are normal(0, 1 / latent_dim), so every
///                  coordinate has variance about 1 + noise^2.
struct InputDistribution {
  std::size_t latent_dim = 0;
  double noise = 0.1;
};

class InputSampler {
 public:
  /// The mixing matrix depends only on (d, dist, seed); sample streams are
  /// separate, so train/eval splits share the distribution but not samples.
  InputSampler(std::size_t d, InputDistribution dist, std::uint64_t seed);

  std::vector<Vector> sample(std::size_t count, std::uint64_t stream) const;

  std::size_t d() const { return d_; }
  const InputDistribution& distribution() const { return dist_; }

 private:
  std::size_t d_;
  InputDistribution dist_;
  std::uint64_t seed_;
  Matrix mixing_;
};

}  // namespace sparsegate
