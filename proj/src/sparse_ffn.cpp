#include "sparsegate/sparse_ffn.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include <unistd.h>

#include <fmt/format.h>

namespace sparsegate {
namespace {

struct DownLayout {
  const float* base;
  std::size_t column_stride;  // distance between neuron j and j+1
  std::size_t element_stride;  // distance between output k and k+1
};

template <bool kContiguous>
inline float down_at(const DownLayout& l, std::size_t j, std::size_t k) {
  if constexpr (kContiguous) {
    return l.base[j * l.column_stride + k];
  } else {
    return l.base[j * l.column_stride + k * l.element_stride];
  }
}

// Neurons are processed four at a time: eight independent dot-product chains
// for gate/up, then one fused pass over the output that adds the four down
// columns in ascending neuron order. Each chain and each output element is
// still accumulated strictly in ascending index order.
template <bool kContiguous, typename IndexAt>
void gated_kernel(const FfnWeights& w, const DownLayout& down, std::span<const float> x, std::size_t count,
                  IndexAt index_at, float* out, KernelCounters* counters) {
  const std::size_t d = w.d();
  const float* xp = x.data();
  const float* gate = w.w_gate().data();
  const float* up = w.w_up().data();
  const ActivationKind kind = w.kind();

  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const std::size_t j0 = index_at(i);
    const std::size_t j1 = index_at(i + 1);
    const std::size_t j2 = index_at(i + 2);
    const std::size_t j3 = index_at(i + 3);
    const float* g0 = gate + j0 * d;
    const float* g1 = gate + j1 * d;
    const float* g2 = gate + j2 * d;
    const float* g3 = gate + j3 * d;
    const float* u0 = up + j0 * d;
    const float* u1 = up + j1 * d;
    const float* u2 = up + j2 * d;
    const float* u3 = up + j3 * d;
    float ag0 = 0.0F, ag1 = 0.0F, ag2 = 0.0F, ag3 = 0.0F;
    float au0 = 0.0F, au1 = 0.0F, au2 = 0.0F, au3 = 0.0F;
    for (std::size_t k = 0; k < d; ++k) {
      const float xk = xp[k];
      ag0 += g0[k] * xk;
      ag1 += g1[k] * xk;
      ag2 += g2[k] * xk;
      ag3 += g3[k] * xk;
      au0 += u0[k] * xk;
      au1 += u1[k] * xk;
      au2 += u2[k] * xk;
      au3 += u3[k] * xk;
    }
    const float c0 = combine(kind, ag0, au0);
    const float c1 = combine(kind, ag1, au1);
    const float c2 = combine(kind, ag2, au2);
    const float c3 = combine(kind, ag3, au3);
    if constexpr (kContiguous) {
      const float* d0 = down.base + j0 * down.column_stride;
      const float* d1 = down.base + j1 * down.column_stride;
      const float* d2 = down.base + j2 * down.column_stride;
      const float* d3 = down.base + j3 * down.column_stride;
      for (std::size_t k = 0; k < d; ++k) out[k] = (((out[k] + c0 * d0[k]) + c1 * d1[k]) + c2 * d2[k]) + c3 * d3[k];
    } else {
      for (std::size_t k = 0; k < d; ++k) {
        out[k] = (((out[k] + c0 * down_at<false>(down, j0, k)) + c1 * down_at<false>(down, j1, k)) +
                  c2 * down_at<false>(down, j2, k)) +
                 c3 * down_at<false>(down, j3, k);
      }
    }
  }
  for (; i < count; ++i) {
    const std::size_t j = index_at(i);
    const float* g = gate + j * d;
    const float* u = up + j * d;
    float ag = 0.0F;
    float au = 0.0F;
    for (std::size_t k = 0; k < d; ++k) {
      ag += g[k] * xp[k];
      au += u[k] * xp[k];
    }
    const float c = combine(kind, ag, au);
    for (std::size_t k = 0; k < d; ++k) out[k] += c * down_at<kContiguous>(down, j, k);
  }
  if (counters != nullptr) counters->multiply_adds += static_cast<std::uint64_t>(count) * 3 * d;
}

void check_inputs(std::size_t d, std::size_t n, std::span<const float> x, const NeuronMask* mask) {
  if (x.size() != d) throw ShapeError(fmt::format("sparse ffn: input length {} != hidden size {}", x.size(), d));
  if (mask != nullptr && mask->n() != n) {
    throw ShapeError(fmt::format("sparse ffn: mask covers {} neurons, block has {}", mask->n(), n));
  }
}

}  // namespace

GatheredFfn::GatheredFfn(const FfnWeights& weights) : weights_(&weights), down_t_(weights.w_down().transposed().values()) {}

Vector sparse_ffn_forward(const GatheredFfn& g, std::span<const float> x, const NeuronMask& mask,
                          KernelCounters* counters) {
  check_inputs(g.d(), g.n(), x, &mask);
  Vector out(g.d());
  const DownLayout down{g.down_column(0).data(), g.d(), 1};
  const auto& active = mask.active();
  gated_kernel<true>(g.weights(), down, x, active.size(), [&](std::size_t i) { return active[i]; }, out.data(),
                     counters);
  return out;
}

Vector sparse_ffn_forward(const FfnWeights& w, std::span<const float> x, const NeuronMask& mask) {
  check_inputs(w.d(), w.n(), x, &mask);
  Vector out(w.d());
  const DownLayout down{w.w_down().data(), 1, w.n()};
  const auto& active = mask.active();
  gated_kernel<false>(w, down, x, active.size(), [&](std::size_t i) { return active[i]; }, out.data(), nullptr);
  return out;
}

Vector dense_ffn_forward(const GatheredFfn& g, std::span<const float> x, KernelCounters* counters) {
  check_inputs(g.d(), g.n(), x, nullptr);
  Vector out(g.d());
  const DownLayout down{g.down_column(0).data(), g.d(), 1};
  gated_kernel<true>(g.weights(), down, x, g.n(), [](std::size_t i) { return i; }, out.data(), counters);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

MachineInfo machine_info() {
  MachineInfo info;
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.starts_with("model name")) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) info.cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
#if defined(__clang__)
  info.compiler = fmt::format("clang {}", __clang_version__);
#elif defined(__GNUC__)
  info.compiler = fmt::format("gcc {}", __VERSION__);
#else
  info.compiler = "unknown";
#endif
#ifdef SPARSEGATE_BUILD_TYPE
  info.build_type = SPARSEGATE_BUILD_TYPE;
#endif
  char host[256] = {};
  if (gethostname(host, sizeof(host) - 1) == 0) info.hostname = host;
  return info;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
std::vector<double> time_calls(std::size_t warmup, std::size_t iterations, Fn&& fn) {
  for (std::size_t i = 0; i < warmup; ++i) fn(i);
  std::vector<double> micros;
  micros.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto start = Clock::now();
    fn(i);
    const auto stop = Clock::now();
    micros.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
  }
  return micros;
}

NeuronMask random_mask(std::size_t n, std::size_t active, Rng& rng) {
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0U);
  for (std::size_t i = 0; i < active; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(active);
  std::sort(pool.begin(), pool.end());
  return NeuronMask(n, std::move(pool));
}

double checksum(const Vector& v) {
  double sum = 0.0;
  for (float f : v) sum += f;
  return sum;
}

// Rotating among several active sets keeps a small sparse working set from
// being served entirely from cache across consecutive calls.
constexpr std::size_t kMasksPerLevel = 8;

// Keeps the timed calls observable.
volatile float benchmark_sink = 0.0F;

}  // namespace

BenchReport bench_ffn(const BenchConfig& config) {
  if (config.d < 64 || config.n < 64) throw DomainError("bench_ffn: d and n must be >= 64");
  if (config.iterations == 0) throw DomainError("bench_ffn: iterations must be positive");
  for (double s : config.sparsities) {
    if (!(s >= 0.0 && s < 1.0)) throw DomainError(fmt::format("bench_ffn: sparsity {} outside [0, 1)", s));
  }

  Rng weight_rng(derive_seed(config.seed, 0));
  const FfnWeights weights = gaussian_ffn<float>(config.d, config.n, ActivationKind::drelu(), config.init_std, weight_rng);
  const GatheredFfn gathered(weights);
  Rng input_rng(derive_seed(config.seed, 1));
  const Vector x = gaussian_vector<float>(config.d, 1.0, input_rng);

  BenchReport report{machine_info(), {}};

  KernelCounters dense_counter;
  const Vector dense_out = dense_ffn_forward(gathered, x.span(), &dense_counter);
  float sink = 0.0F;
  const double dense_us = median(time_calls(config.warmup, config.iterations, [&](std::size_t) {
    const Vector out = dense_ffn_forward(gathered, x.span());
    sink += out[0];
  }));

  Rng mask_rng(derive_seed(config.seed, 2));
  for (double sparsity : config.sparsities) {
    const std::size_t active = config.n - kept_count(sparsity, config.n);
    std::vector<NeuronMask> masks;
    for (std::size_t m = 0; m < kMasksPerLevel; ++m) masks.push_back(random_mask(config.n, active, mask_rng));

    KernelCounters sparse_counter;
    const Vector sparse_out = sparse_ffn_forward(gathered, x.span(), masks.front(), &sparse_counter);
    const double sparse_us = median(time_calls(config.warmup, config.iterations, [&](std::size_t i) {
      const Vector out = sparse_ffn_forward(gathered, x.span(), masks[i % masks.size()]);
      sink += out[0];
    }));

    BenchResult r;
    r.d = config.d;
    r.n = config.n;
    r.sparsity = sparsity;
    r.active = active;
    r.iterations = config.iterations;
    r.dense_us = dense_us;
    r.sparse_us = sparse_us;
    r.speedup = sparse_us > 0.0 ? dense_us / sparse_us : 0.0;
    r.flops_dense = 2 * dense_counter.multiply_adds;
    r.flops_sparse = 2 * sparse_counter.multiply_adds;
    r.checksum_dense = checksum(dense_out);
    r.checksum_sparse = checksum(sparse_out);
    report.results.push_back(r);
  }
  benchmark_sink = sink;
  return report;
}

}  // namespace sparsegate
