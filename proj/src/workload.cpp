#include "sparsegate/workload.hpp"

#include <cmath>

namespace sparsegate {

InputSampler::InputSampler(std::size_t d, InputDistribution dist, std::uint64_t seed)
    : d_(d), dist_(dist), seed_(seed) {
  if (d == 0) throw DomainError("InputSampler: d must be positive");
  if (!(dist.noise >= 0.0) || !std::isfinite(dist.noise)) throw DomainError("InputSampler: noise must be >= 0");
  if (dist.latent_dim > 0) {
    Rng rng(derive_seed(seed, 0));
    mixing_ = gaussian_matrix<float>(d, dist.latent_dim, 1.0 / std::sqrt(static_cast<double>(dist.latent_dim)), rng);
  }
}

std::vector<Vector> InputSampler::sample(std::size_t count, std::uint64_t stream) const {
  Rng rng(derive_seed(seed_, stream + 1));
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (dist_.latent_dim == 0) {
      out.push_back(gaussian_vector<float>(d_, 1.0, rng));
      continue;
    }
    const auto z = gaussian_vector<float>(dist_.latent_dim, 1.0, rng);
    Vector x = matvec(mixing_, z.span());
    for (std::size_t k = 0; k < d_; ++k) x[k] += static_cast<float>(dist_.noise * rng.normal());
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace sparsegate
