// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
// Criterion 6 is a wall-clock bound; with TSPW_NO_ASSERT_SPEEDUP=1 a miss is
// reported as WARN and does not fail the run.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "gradient_check.hpp"
#include "sparsegate/analysis.hpp"
#include "sparsegate/model.hpp"
#include "sparsegate/model_io.hpp"
#include "sparsegate/moe.hpp"
#include "sparsegate/predictor.hpp"
#include "sparsegate/sparse_ffn.hpp"
#include "sparsegate/sparsity.hpp"
#include "sparsegate/workload.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
namespace sg = sparsegate;

namespace {

enum class Verdict { pass, fail, warn };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

Outcome pass(std::string detail) { return {Verdict::pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Verdict::fail, std::move(detail)}; }
Outcome check(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

// 1 -------------------------------------------------------------------------

Outcome exact_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  sg::Rng rng(sg::derive_seed(2024, 1));
  std::size_t mismatches = 0;
  std::size_t active = 0;
  std::size_t total = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = sg::testing::uniform_size(rng, 1, 512);
    const std::size_t n = sg::testing::uniform_size(rng, 1, 2048);
    const auto w = sg::gaussian_ffn<float>(d, n, sg::ActivationKind::drelu(), 1.0 / std::sqrt(static_cast<double>(d)), rng);
    const sg::GatheredFfn g(w);
    const auto x = sg::gaussian_vector<float>(d, 1.0, rng);
    const auto dense = sg::ffn_forward(w, x.span(), true);
    const auto mask = sg::NeuronMask::from_nonzero(dense.trace->combined.span());
    active += mask.size();
    total += n;
    if (!sg::testing::bitwise_equal(sg::sparse_ffn_forward(g, x.span(), mask), dense.output)) ++mismatches;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return check(mismatches == 0 && seconds < 60.0,
               fmt::format("1000 instances, {} bitwise mismatches, mean active fraction {:.3f}, {:.1f}s", mismatches,
                           static_cast<double>(active) / static_cast<double>(total), seconds));
}

// 2 -------------------------------------------------------------------------

Outcome intrinsic_sparsity() {
  sg::ModelConfig c;
  c.hidden_size = 256;
  c.intermediate_size = 1024;
  c.num_layers = 1;
  c.activation = sg::ActivationKind::drelu();
  const auto model = sg::gen_synthetic_model(c, 11, 0.02);
  sg::Rng rng(sg::derive_seed(2024, 2));
  const auto inputs = sg::testing::normal_inputs(128, 256, rng);
  const auto report = sg::profile_model(model, inputs, {}).report;
  const auto& s = report.at({0, -1});

  // Monte-Carlo oracle: gate and up are independent zero-mean Gaussians, so
  // P(both > 0) = 1/4.
  sg::Rng mc(sg::derive_seed(2024, 3));
  std::size_t both = 0;
  const std::size_t draws = 200000;
  for (std::size_t i = 0; i < draws; ++i) both += (mc.normal() > 0.0 && mc.normal() > 0.0) ? 1 : 0;
  const double oracle = 1.0 - static_cast<double>(both) / static_cast<double>(draws);

  const bool ok = s.samples >= 100000 && std::abs(s.zero_fraction() - 0.75) <= 0.02 &&
                  std::abs(s.zero_fraction() - oracle) <= 0.02;
  return check(ok, fmt::format("zero_fraction {:.4f} over {} samples (Monte-Carlo oracle {:.4f})", s.zero_fraction(),
                               s.samples, oracle));
}

// 3 -------------------------------------------------------------------------

Outcome gradients() {
  std::string detail;
  bool ok = true;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto kind = sg::testing::kind_from_index(k);
    sg::Rng rng(sg::derive_seed(2024, 10 + k));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, sg::testing::gradient_check_instance(kind, rng));
    ok = ok && worst <= 1e-4;
    detail += fmt::format("{}{} max rel err {:.2e}", detail.empty() ? "" : ", ", kind.to_string(), worst);
  }
  return check(ok, "100 instances per kind; " + detail);
}

// 4 -------------------------------------------------------------------------

Outcome masking_laws() {
  sg::Rng rng(sg::derive_seed(2024, 4));
  std::vector<double> keeps;
  for (int i = 1; i <= 20; ++i) keeps.push_back(i == 20 ? 1.0 : 0.05 * i);

  std::size_t identity_failures = 0;
  std::size_t monotone_failures = 0;
  std::size_t size_failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = sg::testing::uniform_size(rng, 4, 64);
    const std::size_t n = sg::testing::uniform_size(rng, 1, 512);
    const auto w = sg::gaussian_ffn<float>(d, n, sg::testing::kind_from_index(static_cast<std::size_t>(trial)), 0.2, rng);
    const auto x = sg::gaussian_vector<float>(d, 1.0, rng);
    const auto r = sg::ffn_forward(w, x.span(), true);
    if (!sg::testing::bitwise_equal(sg::masked_ffn_forward(w, x.span(), 1.0), r.output)) ++identity_failures;

    const auto& c = r.trace->combined;
    double previous = INFINITY;
    for (double keep : keeps) {
      const auto mask = sg::topk_mask(c.span(), keep);
      // round half away from zero for non-negative values
      const auto expected = static_cast<std::size_t>(std::floor(keep * static_cast<double>(n) + 0.5));
      if (mask.size() != expected) ++size_failures;
      const double dropped = sg::relative_l2(c.span(), sg::apply_mask(c.span(), mask).span());
      if (dropped > previous) ++monotone_failures;
      previous = dropped;
    }
  }
  return check(identity_failures + monotone_failures + size_failures == 0,
               fmt::format("200 samples x 20 keeps: identity failures {}, monotonicity failures {}, size failures {}",
                           identity_failures, monotone_failures, size_failures));
}

// 5 -------------------------------------------------------------------------

Outcome moe_composition() {
  const auto c = sg::compose_sparsity(8, 2, 0.85);
  const bool exact = c.combined_active_fraction == 0.0375 && c.combined_sparsity == 0.9625 && c.expert_sparsity == 0.75;

  sg::Rng rng(sg::derive_seed(2024, 5));
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto w = sg::gaussian_ffn<float>(64, 256, sg::ActivationKind::drelu(), 0.1, rng);
    const auto inputs = sg::testing::normal_inputs(8, 64, rng);
    const auto m = sg::evaluate_masks(w, inputs, [&](std::span<const float> x) {
      const auto truth = sg::oracle_mask(w, x);
      std::vector<std::uint32_t> superset;
      for (std::uint32_t j = 0; j < 256; ++j)
        if (truth.contains(j) || rng.uniform() < 0.25) superset.push_back(j);
      return sg::NeuronMask(256, superset);
    });
    worst = std::max(worst, m.output_deviation);
  }
  return check(exact && worst == 0.0,
               fmt::format("compose(8, 2, 0.85) active fraction {} (combined sparsity {}); superset-mask max deviation {}",
                           c.combined_active_fraction, c.combined_sparsity, worst));
}

// 6 -------------------------------------------------------------------------

Outcome kernel_speedup() {
  sg::BenchConfig config;  // d=4096, n=14336, sparsity {0, .5, .75, .9}, 100 iterations
  const auto report = sg::bench_ffn(config);
  std::string detail;
  bool monotone = true;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    detail += fmt::format("{}s={} {:.2f}x", i == 0 ? "" : ", ", r.sparsity, r.speedup);
    if (i > 0 && r.speedup < report.results[i - 1].speedup) monotone = false;
  }
  const double at90 = report.results.back().speedup;
  const bool ok = monotone && at90 >= 3.0;
  detail = fmt::format("d=4096 n=14336 median of {} runs: {}; dense {:.0f}us", config.iterations, detail,
                       report.results.front().dense_us);
  if (ok) return pass(detail);
  const char* toggle = std::getenv("TSPW_NO_ASSERT_SPEEDUP");
  if (toggle != nullptr && std::string(toggle) == "1") return {Verdict::warn, detail + " (bound downgraded)"};
  return fail(detail);
}

// 7 -------------------------------------------------------------------------

Outcome predictor_benchmark() {
  const fs::path path = fs::path(SPARSEGATE_SOURCE_DIR) / "configs" / "predictor_bench.json";
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  const auto config = sg::model_config_from_json(j.at("model"));
  const auto seed = j.at("seed").get<std::uint64_t>();
  const auto model = sg::gen_synthetic_model(config, seed, j.at("init_std").get<double>());
  const auto& w = model.layers.front().ffn();

  const sg::InputSampler sampler(config.hidden_size,
                                 {j.at("inputs").at("latent_dim").get<std::size_t>(), j.at("inputs").at("noise").get<double>()},
                                 seed);
  const auto train_inputs = sampler.sample(j.at("train_samples").get<std::size_t>(), 0);
  const auto eval_inputs = sampler.sample(j.at("eval_samples").get<std::size_t>(), 1);

  sg::TrainConfig tc;
  tc.rank = config.predictor->rank;
  tc.threshold = config.predictor->threshold;
  const auto& t = j.at("training");
  tc.epochs = t.at("epochs").get<std::size_t>();
  tc.learning_rate = t.at("learning_rate").get<double>();
  tc.batch_size = t.at("batch_size").get<std::size_t>();
  tc.positive_weight = t.at("positive_weight").get<double>();
  sg::Rng rng(sg::derive_seed(seed, 1000));
  const auto trained = sg::train_predictor(sg::collect_training_set(w, train_inputs), tc, rng);

  const auto m = sg::evaluate_predictor(trained.model, w, eval_inputs);
  const auto oracle = sg::evaluate_masks(w, eval_inputs, [&](std::span<const float> x) { return sg::oracle_mask(w, x); });
  const bool ok = m.recall >= 0.9 && m.predicted_active_fraction <= 0.5 && m.output_deviation <= 0.05 &&
                  oracle.output_deviation == 0.0;
  return check(ok, fmt::format("d={} n={} r={}: recall {:.4f}, precision {:.4f}, predicted fraction {:.4f} (true {:.4f}), "
                               "deviation {:.4f}; oracle deviation {}",
                               config.hidden_size, config.intermediate_size, tc.rank, m.recall, m.precision,
                               m.predicted_active_fraction, m.true_active_fraction, m.output_deviation,
                               oracle.output_deviation));
}

// 8 -------------------------------------------------------------------------

std::vector<std::byte> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto bytes = std::as_bytes(std::span<const char>(raw));
  return {bytes.begin(), bytes.end()};
}

void write_file(const fs::path& p, std::span<const std::byte> bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Outcome format_checks() {
  const fs::path dir = fs::temp_directory_path() / "sparsegate_acceptance";
  fs::create_directories(dir);

  // Round trips: dense, MoE and a model with predictors, through real files.
  std::size_t round_trip_failures = 0;
  std::vector<sg::ModelConfig> configs;
  for (auto name : {"tiny_drelu.json", "tiny_swiglu.json", "tiny_moe.json"}) {
    configs.push_back(sg::load_model_config(fs::path(SPARSEGATE_SOURCE_DIR) / "configs" / name));
  }
  sg::Rng rng(sg::derive_seed(2024, 8));
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto model = sg::gen_synthetic_model(configs[i], i, 0.02);
    if (i == 0) {
      model.config.predictor = sg::PredictorConfig{8, 0.5};
      for (auto& layer : model.layers) {
        layer.predictors.emplace_back(sg::gaussian_matrix<float>(8, 64, 0.1, rng), sg::gaussian_matrix<float>(256, 8, 0.1, rng));
      }
    }
    const auto path = dir / fmt::format("model{}.tspw", i);
    sg::save_model(model, path);
    const auto first = read_file(path);
    sg::save_model(sg::load_model(path), dir / "copy.tspw");
    if (first != read_file(dir / "copy.tspw")) ++round_trip_failures;
    if (sg::encode_tspw(sg::decode_tspw(first)) != first) ++round_trip_failures;
  }

  // Crafted corrupt files, one per documented load error.
  const auto good = read_file(dir / "model0.tspw");
  const auto expect = [&](const std::vector<std::byte>& bytes, sg::FormatErrc want) {
    write_file(dir / "bad.tspw", bytes);
    try {
      sg::load_tspw(dir / "bad.tspw");
    } catch (const sg::FormatError& e) {
      return e.code() == want;
    }
    return false;
  };
  auto magic = good;
  magic[0] = std::byte{'Q'};
  auto version = good;
  version[4] = std::byte{9};
  auto truncated = good;
  truncated.resize(good.size() - 3);
  auto trailing = good;
  trailing.push_back(std::byte{1});
  // Two one-element tensors "ab" and "cd"; renaming the second to "ab"
  // keeps every length field valid.
  sg::TensorFile dup_src;
  dup_src.add({"ab", {1}, std::vector<float>{1.0F}});
  dup_src.add({"cd", {1}, std::vector<float>{2.0F}});
  auto dup = sg::encode_tspw(dup_src);
  const std::size_t second_name = 12 + (4 + 2 + 1 + 4 + 8 + 4) + 4;
  dup[second_name] = std::byte{'a'};
  dup[second_name + 1] = std::byte{'b'};
  auto dtype = sg::encode_tspw(dup_src);
  dtype[12 + 4 + 2] = std::byte{3};

  const std::pair<const char*, bool> cases[] = {
      {"bad_magic", expect(magic, sg::FormatErrc::bad_magic)},
      {"unsupported_version", expect(version, sg::FormatErrc::unsupported_version)},
      {"truncated", expect(truncated, sg::FormatErrc::truncated)},
      {"duplicate_name", expect(dup, sg::FormatErrc::duplicate_name)},
      {"bad_dtype", expect(dtype, sg::FormatErrc::bad_dtype)},
      {"trailing_bytes", expect(trailing, sg::FormatErrc::trailing_bytes)},
  };
  std::string missed;
  for (const auto& [name, ok] : cases)
    if (!ok) missed += std::string(missed.empty() ? "" : ",") + name;
  fs::remove_all(dir);
  return check(round_trip_failures == 0 && missed.empty(),
               fmt::format("3 models round-tripped ({} failures); corrupt files rejected with distinct codes{}",
                           round_trip_failures, missed.empty() ? "" : " except " + missed));
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"exact sparse/dense equivalence", exact_equivalence},
      {"dReLU intrinsic sparsity", intrinsic_sparsity},
      {"gradient correctness", gradients},
      {"masking laws", masking_laws},
      {"MoE composition and superset soundness", moe_composition},
      {"kernel speedup", kernel_speedup},
      {"activation predictor", predictor_benchmark},
      {"TSPW format", format_checks},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = fail(fmt::format("exception: {}", e.what()));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = outcome.verdict == Verdict::pass ? "PASS" : outcome.verdict == Verdict::warn ? "WARN" : "FAIL";
    if (outcome.verdict == Verdict::fail) ++failures;
    fmt::print("[{}] {} {}: {} ({:.1f}s)\n", index, tag, name, outcome.detail, seconds);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria failed\n", failures, index);
  return failures == 0 ? 0 : 1;
}
