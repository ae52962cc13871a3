// sparsegate command-line driver.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error,
// 4 speedup bound not met (bench --assert-speedup only).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sparsegate/analysis.hpp"
#include "sparsegate/errors.hpp"
#include "sparsegate/model.hpp"
#include "sparsegate/moe.hpp"
#include "sparsegate/predictor.hpp"
#include "sparsegate/report_io.hpp"
#include "sparsegate/sparse_ffn.hpp"
#include "sparsegate/version.hpp"
#include "sparsegate/workload.hpp"

namespace fs = std::filesystem;
namespace sg = sparsegate;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitBound = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw sg::FormatError(sg::FormatErrc::io, fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw sg::FormatError(sg::FormatErrc::io, fmt::format("write to '{}' failed", path.string()));
}

/// CSV goes to path and its JSON mirror next to it; a .json path gets JSON only.
std::vector<std::string> write_report(const fs::path& path, const std::string& csv, const json& mirror) {
  if (path.extension() == ".json") {
    write_text(path, mirror.dump(2) + "\n");
    return {path.string()};
  }
  auto json_path = path;
  json_path.replace_extension(".json");
  write_text(path, csv);
  write_text(json_path, mirror.dump(2) + "\n");
  return {path.string(), json_path.string()};
}

fs::path manifest_path(const fs::path& out) {
  auto p = out;
  p += ".manifest.json";
  return p;
}

struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  json extra = json::object();
};

void write_manifest(const fs::path& primary, const RunManifest& m) {
  json j{{"subcommand", m.subcommand},
         {"config", m.config},
         {"seed", m.seed},
         {"engine_version", sg::engine_version()},
         {"rng", sg::Rng::kAlgorithm},
         {"machine", sg::machine_json(sg::machine_info())},
         {"outputs", m.outputs}};
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  write_text(manifest_path(primary), j.dump(2) + "\n");
}

struct InputOptions {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 0;
  double noise = 0.1;
  std::string file;
};

void add_input_flags(CLI::App* cmd, InputOptions& in, std::size_t default_count) {
  in.count = default_count;
  cmd->add_option("--inputs,--samples", in.count, "Number of synthetic input vectors")->capture_default_str();
  cmd->add_option("--seed", in.seed, "Seed for inputs (and any other randomness)")->capture_default_str();
  cmd->add_option("--latent-dim", in.latent_dim, "Latent dimension of the input distribution (0 = isotropic)")
      ->capture_default_str();
  cmd->add_option("--input-noise", in.noise, "Isotropic noise scale added to latent inputs")->capture_default_str();
}

json input_json(const InputOptions& in) {
  return {{"count", in.count}, {"seed", in.seed}, {"latent_dim", in.latent_dim}, {"noise", in.noise}, {"file", in.file}};
}

/// Reads a TSPW file holding one f32 tensor named "inputs" of shape [N, d].
std::vector<sg::Vector> load_inputs(const fs::path& path, std::size_t d) {
  const auto file = sg::load_tspw(path);
  const auto& t = file.at("inputs");
  if (t.dims.size() != 2 || t.dims[1] != d) {
    throw sg::FormatError(sg::FormatErrc::shape_mismatch, fmt::format("'inputs' must be N x {}", d));
  }
  const auto& values = t.f32();
  std::vector<sg::Vector> out;
  for (std::size_t i = 0; i < t.dims[0]; ++i) {
    out.emplace_back(std::vector<float>(values.begin() + static_cast<std::ptrdiff_t>(i * d),
                                        values.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
  }
  return out;
}

std::vector<sg::Vector> make_inputs(const InputOptions& in, std::size_t d, std::uint64_t stream) {
  if (!in.file.empty()) return load_inputs(in.file, d);
  if (in.count == 0) throw UsageError("--inputs must be positive");
  const sg::InputSampler sampler(d, {in.latent_dim, in.noise}, in.seed);
  return sampler.sample(in.count, stream);
}

// gen ------------------------------------------------------------------------

struct GenOptions {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  double init_std = 0.02;
};

int run_gen(const GenOptions& o) {
  const auto config = sg::load_model_config(o.config);
  if (!(o.init_std > 0.0)) throw UsageError("--std must be positive");
  const auto model = sg::gen_synthetic_model(config, o.seed, o.init_std);
  sg::save_model(model, o.out);
  const auto tensors = sg::model_to_tensors(model).size();
  write_manifest(o.out, {"gen",
                         {{"model", sg::to_json(config)}, {"init_std", o.init_std}, {"config_file", o.config}},
                         o.seed,
                         {o.out, sg::config_path_for(o.out).string()},
                         {{"tensors", tensors}}});
  fmt::print("wrote {} ({} tensors)\n", o.out, tensors);
  return kExitOk;
}

// profile --------------------------------------------------------------------

struct ProfileOptions {
  std::string model;
  InputOptions inputs;
  std::vector<double> thresholds{0.0, 1e-3, 1e-2};
  std::string out;
  bool hist = false;
  double hist_limit = 1.0;
  std::size_t hist_bins = sg::ActivationHistogram::kDefaultBins;
  std::size_t chunk = 256;
};

int run_profile(const ProfileOptions& o) {
  const auto model = sg::load_model(o.model);
  const auto inputs = make_inputs(o.inputs, model.config.hidden_size, 0);
  sg::ProfileOptions options;
  options.thresholds = o.thresholds;
  options.histograms = o.hist;
  options.histogram_limit = o.hist_limit;
  options.histogram_bins = o.hist_bins;
  options.chunk_size = o.chunk;
  const auto result = sg::profile_model(model, inputs, options);

  auto outputs = write_report(o.out, sg::sparsity_csv(result.report), sg::sparsity_json(result.report));
  if (o.hist) {
    fs::path hist = o.out;
    hist.replace_extension(".hist.csv");
    const auto more = write_report(hist, sg::histogram_csv(result.histograms), sg::histogram_json(result.histograms));
    outputs.insert(outputs.end(), more.begin(), more.end());
  }
  write_manifest(o.out, {"profile",
                         {{"model", o.model},
                          {"inputs", input_json(o.inputs)},
                          {"thresholds", o.thresholds},
                          {"histograms", o.hist},
                          {"histogram_limit", o.hist_limit},
                          {"histogram_bins", o.hist_bins}},
                         o.inputs.seed,
                         outputs});
  for (const auto& [unit, s] : result.report.units()) {
    fmt::print("layer {:>3} expert {:>3}  zero_fraction {:.4f}\n", unit.layer, unit.expert, s.zero_fraction());
  }
  return kExitOk;
}

// sweep ----------------------------------------------------------------------

struct SweepOptions {
  std::string model;
  InputOptions inputs;
  std::vector<double> keeps{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::string out;
};

int run_sweep(const SweepOptions& o) {
  const auto model = sg::load_model(o.model);
  const auto inputs = make_inputs(o.inputs, model.config.hidden_size, 0);
  sg::validate_keep_fractions(o.keeps);
  const auto rows = sg::sweep_model(model, inputs, o.keeps);
  const auto outputs = write_report(o.out, sg::sweep_csv(rows), sg::sweep_json(rows));
  write_manifest(o.out, {"sweep", {{"model", o.model}, {"inputs", input_json(o.inputs)}, {"keep", o.keeps}},
                         o.inputs.seed, outputs});
  for (const auto& r : rows) {
    fmt::print("keep {:.3f}  combined {:.6f}  output {:.6f}\n", r.keep_fraction, r.combined_deviation, r.output_deviation);
  }
  return kExitOk;
}

// bench ----------------------------------------------------------------------

struct BenchOptions {
  sg::BenchConfig config;
  std::string out;
  std::optional<double> assert_speedup;
};

bool speedup_bound_disabled() {
  const char* v = std::getenv("TSPW_NO_ASSERT_SPEEDUP");
  return v != nullptr && std::string(v) == "1";
}

/// Empty when the bound holds: speedup at the largest sparsity >= min and
/// non-decreasing in sparsity.
std::string check_speedup(std::vector<sg::BenchResult> results, double min_speedup) {
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.sparsity < b.sparsity; });
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].speedup < results[i - 1].speedup) {
      return fmt::format("speedup drops from {:.3f} at sparsity {} to {:.3f} at sparsity {}", results[i - 1].speedup,
                         results[i - 1].sparsity, results[i].speedup, results[i].sparsity);
    }
  }
  if (!results.empty() && results.back().speedup < min_speedup) {
    return fmt::format("speedup {:.3f} at sparsity {} is below {}", results.back().speedup, results.back().sparsity,
                       min_speedup);
  }
  return {};
}

int run_bench(const BenchOptions& o) {
  const auto report = sg::bench_ffn(o.config);
  std::vector<std::string> outputs;
  if (!o.out.empty()) outputs = write_report(o.out, sg::bench_csv(report.results), sg::bench_json(report));
  fmt::print("{:>9} {:>8} {:>12} {:>12} {:>8}\n", "sparsity", "active", "dense_us", "sparse_us", "speedup");
  for (const auto& r : report.results) {
    fmt::print("{:>9.3f} {:>8} {:>12.1f} {:>12.1f} {:>8.3f}\n", r.sparsity, r.active, r.dense_us, r.sparse_us, r.speedup);
  }
  std::string failure;
  if (o.assert_speedup) failure = check_speedup(report.results, *o.assert_speedup);
  if (!o.out.empty()) {
    const auto& c = o.config;
    json bound = nullptr;
    if (o.assert_speedup) bound = {{"min_speedup", *o.assert_speedup}, {"met", failure.empty()}};
    write_manifest(o.out, {"bench",
                           {{"d", c.d},
                            {"n", c.n},
                            {"sparsity", c.sparsities},
                            {"iterations", c.iterations},
                            {"warmup", c.warmup},
                            {"init_std", c.init_std}},
                           c.seed,
                           outputs,
                           {{"speedup_bound", bound}}});
  }
  if (failure.empty()) return kExitOk;
  if (speedup_bound_disabled()) {
    fmt::print(stderr, "warning: {} (TSPW_NO_ASSERT_SPEEDUP=1)\n", failure);
    return kExitOk;
  }
  fmt::print(stderr, "error: {}\n", failure);
  return kExitBound;
}

// count ----------------------------------------------------------------------

struct CountOptions {
  std::size_t experts = 1;
  std::size_t routed = 1;
  double neuron_sparsity = 0.0;
  std::string config;
  std::string arch;
  std::string out;
};

int run_count(const CountOptions& o) {
  std::size_t e = o.experts;
  std::size_t a = o.routed;
  std::optional<sg::ArchConfig> arch;
  if (!o.config.empty()) {
    const auto c = sg::load_model_config(o.config);
    sg::ArchConfig ac;
    ac.hidden_size = c.hidden_size;
    ac.intermediate_size = c.intermediate_size;
    ac.num_layers = c.num_layers;
    ac.num_experts = c.num_experts.value_or(1);
    ac.experts_per_token = c.experts_per_token.value_or(1);
    arch = ac;
  } else if (o.arch == "mistral-7b") {
    arch = sg::mistral_7b_arch();
  } else if (o.arch == "mixtral-8x7b") {
    arch = sg::mixtral_8x7b_arch();
  } else if (!o.arch.empty()) {
    throw UsageError(fmt::format("unknown --arch '{}' (expected mistral-7b or mixtral-8x7b)", o.arch));
  }
  if (arch) {
    e = arch->num_experts;
    a = arch->experts_per_token;
  }
  json j{{"composition", sg::composition_json(sg::compose_sparsity(e, a, o.neuron_sparsity))}};
  if (arch) j["activated_params"] = sg::activated_params_json(sg::count_activated_params(*arch, o.neuron_sparsity));
  fmt::print("{}\n", j.dump(2));
  if (!o.out.empty()) {
    write_text(o.out, j.dump(2) + "\n");
    write_manifest(o.out, {"count",
                           {{"E", e}, {"a", a}, {"neuron_sparsity", o.neuron_sparsity}, {"config", o.config}, {"arch", o.arch}},
                           0,
                           {o.out}});
  }
  return kExitOk;
}

// train-predictor / eval-predictor --------------------------------------------

struct TrainOptions {
  std::string model;
  InputOptions inputs;
  std::size_t rank = 0;
  sg::TrainConfig train;
  std::string out;
};

std::string unit_name(std::size_t layer, std::size_t expert, bool moe) {
  return moe ? fmt::format("layer.{}.expert.{}", layer, expert) : fmt::format("layer.{}", layer);
}

int run_train(TrainOptions o) {
  auto model = sg::load_model(o.model);
  if (!model.config.activation.has_exact_zeros()) {
    throw sg::FormatError(sg::FormatErrc::bad_config,
                          fmt::format("activation '{}' has no exact zeros to learn", model.config.activation.name()));
  }
  const std::size_t d = model.config.hidden_size;
  o.train.rank = o.rank == 0 ? std::max<std::size_t>(1, d / 8) : o.rank;
  const auto inputs = make_inputs(o.inputs, d, 0);
  const auto per_unit = sg::unit_inputs(model, inputs);

  json units = json::array();
  std::uint64_t stream = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    layer.predictors.clear();
    for (std::size_t e = 0; e < per_unit[i].size(); ++e) {
      const auto& w = layer.is_moe() ? layer.moe().expert(e) : layer.ffn();
      if (per_unit[i][e].empty()) {
        throw sg::FormatError(sg::FormatErrc::bad_config,
                              fmt::format("{} received no inputs; raise --samples", unit_name(i, e, layer.is_moe())));
      }
      const auto set = sg::collect_training_set(w, per_unit[i][e]);
      sg::Rng rng(sg::derive_seed(o.inputs.seed, 1000 + stream++));
      auto result = sg::train_predictor(set, o.train, rng);
      units.push_back({{"unit", unit_name(i, e, layer.is_moe())},
                       {"samples", set.size()},
                       {"active_fraction", set.active_fraction()},
                       {"initial_loss", result.epoch_losses.front()},
                       {"final_loss", result.epoch_losses.back()}});
      fmt::print("{}: {} samples, loss {:.5f} -> {:.5f}\n", unit_name(i, e, layer.is_moe()), set.size(),
                 result.epoch_losses.front(), result.epoch_losses.back());
      layer.predictors.push_back(std::move(result.model));
    }
  }
  model.config.predictor = sg::PredictorConfig{o.train.rank, o.train.threshold};
  sg::save_model(model, o.out);
  write_manifest(o.out, {"train-predictor",
                         {{"model", o.model},
                          {"inputs", input_json(o.inputs)},
                          {"rank", o.train.rank},
                          {"epochs", o.train.epochs},
                          {"learning_rate", o.train.learning_rate},
                          {"batch_size", o.train.batch_size},
                          {"threshold", o.train.threshold},
                          {"positive_weight", o.train.positive_weight}},
                         o.inputs.seed,
                         {o.out, sg::config_path_for(o.out).string()},
                         {{"units", units}}});
  return kExitOk;
}

struct EvalOptions {
  std::string model;
  InputOptions inputs;
  bool oracle = false;
  std::optional<double> threshold;
  std::string out;
};

int run_eval(const EvalOptions& o) {
  const auto model = sg::load_model(o.model);
  if (!o.oracle && !model.config.activation.has_exact_zeros()) {
    throw sg::FormatError(sg::FormatErrc::bad_config, "predictor evaluation needs an activation with exact zeros");
  }
  const auto inputs = make_inputs(o.inputs, model.config.hidden_size, 1);
  const auto per_unit = sg::unit_inputs(model, inputs);

  json units = json::array();
  sg::PredictorMetrics mean;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (!o.oracle && layer.predictors.size() != per_unit[i].size()) {
      throw sg::FormatError(sg::FormatErrc::missing_tensor,
                            fmt::format("layer {} has no predictors; run train-predictor or pass --oracle-mask", i));
    }
    for (std::size_t e = 0; e < per_unit[i].size(); ++e) {
      const auto& w = layer.is_moe() ? layer.moe().expert(e) : layer.ffn();
      const auto& xs = per_unit[i][e];
      sg::PredictorMetrics m;
      if (o.oracle) {
        m = sg::evaluate_masks(w, xs, [&](std::span<const float> x) { return sg::oracle_mask(w, x); });
      } else {
        auto p = layer.predictors[e];
        if (o.threshold) p = p.with_threshold(*o.threshold);
        m = sg::evaluate_predictor(p, w, xs);
      }
      auto j = sg::predictor_metrics_json(m);
      j["unit"] = unit_name(i, e, layer.is_moe());
      units.push_back(j);
      const auto weight = static_cast<double>(m.samples);
      mean.recall += weight * m.recall;
      mean.precision += weight * m.precision;
      mean.predicted_active_fraction += weight * m.predicted_active_fraction;
      mean.true_active_fraction += weight * m.true_active_fraction;
      mean.output_deviation += weight * m.output_deviation;
      mean.samples += m.samples;
    }
  }
  if (mean.samples > 0) {
    const auto total = static_cast<double>(mean.samples);
    mean.recall /= total;
    mean.precision /= total;
    mean.predicted_active_fraction /= total;
    mean.true_active_fraction /= total;
    mean.output_deviation /= total;
  }
  json result = sg::predictor_metrics_json(mean);
  result["mask_source"] = o.oracle ? "oracle" : "predictor";
  result["units"] = units;
  fmt::print("{}\n", result.dump(2));
  if (!o.out.empty()) {
    write_text(o.out, result.dump(2) + "\n");
    write_manifest(o.out, {"eval-predictor",
                           {{"model", o.model}, {"inputs", input_json(o.inputs)}, {"oracle_mask", o.oracle},
                            {"threshold", o.threshold ? json(*o.threshold) : json(nullptr)}},
                           o.inputs.seed,
                           {o.out}});
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-activation feed-forward engine and measurement toolkit", "sparsegate"};
  app.set_version_flag("--version", std::string(sg::engine_version()));
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a Gaussian-initialized model from a JSON config");
  gen_cmd->add_option("--config", gen.config, "Model config JSON")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output .tspw path")->required();
  gen_cmd->add_option("--std", gen.init_std, "Initialization standard deviation")->capture_default_str();

  ProfileOptions profile;
  auto* profile_cmd = app.add_subcommand("profile", "Per-layer activation sparsity report");
  profile_cmd->add_option("--model", profile.model, "Model .tspw (config sidecar next to it)")->required();
  add_input_flags(profile_cmd, profile.inputs, 1000);
  profile_cmd->add_option("--input-file", profile.inputs.file, "TSPW file with an f32 tensor 'inputs' [N, d]");
  profile_cmd->add_option("--thresholds", profile.thresholds, "Ascending magnitude thresholds")
      ->delimiter(',')
      ->capture_default_str();
  profile_cmd->add_option("--out", profile.out, "Report path (.csv plus .json mirror, or .json)")->required();
  profile_cmd->add_flag("--hist", profile.hist, "Also write histograms to <out>.hist.csv");
  profile_cmd->add_option("--hist-limit", profile.hist_limit, "Histogram range [-limit, limit]")->capture_default_str();
  profile_cmd->add_option("--hist-bins", profile.hist_bins, "Histogram bin count")->capture_default_str();
  profile_cmd->add_option("--chunk", profile.chunk, "Inputs per partial report (0 = one chunk)")->capture_default_str();

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Top-k masking fidelity across keep fractions");
  sweep_cmd->add_option("--model", sweep.model, "Model .tspw")->required();
  add_input_flags(sweep_cmd, sweep.inputs, 200);
  sweep_cmd->add_option("--input-file", sweep.inputs.file, "TSPW file with an f32 tensor 'inputs' [N, d]");
  sweep_cmd->add_option("--keep", sweep.keeps, "Ascending keep fractions")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out, "Sweep path (.csv plus .json mirror, or .json)")->required();

  BenchOptions bench;
  double min_speedup = 0.0;
  auto* bench_cmd = app.add_subcommand("bench", "Single-threaded dense vs neuron-sparse kernel timing");
  bench_cmd->add_option("--d", bench.config.d, "Hidden size")->capture_default_str();
  bench_cmd->add_option("--n", bench.config.n, "Intermediate size")->capture_default_str();
  bench_cmd->add_option("--sparsity", bench.config.sparsities, "Sparsity levels in [0, 1)")
      ->delimiter(',')
      ->capture_default_str();
  bench_cmd->add_option("--iterations", bench.config.iterations, "Timed calls per measurement")->capture_default_str();
  bench_cmd->add_option("--warmup", bench.config.warmup, "Untimed calls before timing")->capture_default_str();
  bench_cmd->add_option("--seed", bench.config.seed, "Seed for weights, input and masks")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "Results path (.csv plus .json mirror, or .json)");
  auto* assert_opt = bench_cmd->add_option(
      "--assert-speedup", min_speedup,
      "Exit 4 unless the speedup at the largest sparsity is at least this and speedups never decrease");

  CountOptions count;
  auto* count_cmd = app.add_subcommand("count", "Expert x neuron sparsity composition and activated parameters");
  count_cmd->add_option("--E", count.experts, "Number of experts")->capture_default_str();
  count_cmd->add_option("--a", count.routed, "Experts routed per token")->capture_default_str();
  count_cmd->add_option("--neuron-sparsity", count.neuron_sparsity, "Neuron sparsity inside routed experts")
      ->capture_default_str();
  count_cmd->add_option("--config", count.config, "Model config JSON (overrides --E/--a, adds a parameter count)");
  count_cmd->add_option("--arch", count.arch, "Reference architecture: mistral-7b or mixtral-8x7b");
  count_cmd->add_option("--out", count.out, "Also write the JSON here");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-predictor", "Train low-rank activation predictors for every block");
  train_cmd->add_option("--model", train.model, "Model .tspw")->required();
  add_input_flags(train_cmd, train.inputs, 4096);
  train_cmd->add_option("--rank", train.rank, "Predictor rank (0 = hidden_size / 8)")->capture_default_str();
  train_cmd->add_option("--epochs", train.train.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--batch", train.train.batch_size, "Mini-batch size (0 = full batch)")->capture_default_str();
  train_cmd->add_option("--threshold", train.train.threshold, "Decision threshold")->capture_default_str();
  train.train.positive_weight = 4.0;
  train_cmd->add_option("--positive-weight", train.train.positive_weight, "Cross-entropy weight of active neurons")
      ->capture_default_str();
  train_cmd->add_option("--out", train.out, "Output .tspw holding the model and its predictors")->required();

  EvalOptions eval;
  double eval_threshold = 0.5;
  auto* eval_cmd = app.add_subcommand("eval-predictor", "Recall, precision and output deviation of predicted masks");
  eval_cmd->add_option("--model", eval.model, "Model .tspw (with predictors unless --oracle-mask)")->required();
  add_input_flags(eval_cmd, eval.inputs, 1024);
  eval_cmd->add_flag("--oracle-mask", eval.oracle, "Use the exact active set instead of the predictors");
  auto* eval_threshold_opt = eval_cmd->add_option("--threshold", eval_threshold, "Override the stored threshold");
  eval_cmd->add_option("--out", eval.out, "Metrics JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*profile_cmd) return run_profile(profile);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*bench_cmd) {
      if (*assert_opt) bench.assert_speedup = min_speedup;
      return run_bench(bench);
    }
    if (*count_cmd) return run_count(count);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) {
      if (*eval_threshold_opt) eval.threshold = eval_threshold;
      return run_eval(eval);
    }
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const sg::DomainError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const sg::FormatError& e) {
    fmt::print(stderr, "error [{}]: {}\n", sg::to_string(e.code()), e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
