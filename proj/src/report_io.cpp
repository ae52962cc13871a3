#include "sparsegate/report_io.hpp"

#include <fmt/format.h>

namespace sparsegate {

std::string sparsity_csv(const SparsityReport& report) {
  std::string out = "layer,expert,vectors,samples,zero_fraction";
  const auto& units = report.units();
  if (!units.empty()) {
    for (double t : units.begin()->second.thresholds) out += fmt::format(",le_{}", t);
  }
  out += '\n';
  for (const auto& [unit, s] : units) {
    out += fmt::format("{},{},{},{},{}", unit.layer, unit.expert, s.vectors, s.samples, s.zero_fraction());
    for (std::size_t i = 0; i < s.thresholds.size(); ++i) out += fmt::format(",{}", s.threshold_fraction(i));
    out += '\n';
  }
  return out;
}

nlohmann::json sparsity_json(const SparsityReport& report) {
  auto units = nlohmann::json::array();
  for (const auto& [unit, s] : report.units()) {
    auto fractions = nlohmann::json::array();
    for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
      fractions.push_back({{"threshold", s.thresholds[i]}, {"fraction", s.threshold_fraction(i)}});
    }
    units.push_back({{"layer", unit.layer},
                     {"expert", unit.expert},
                     {"vectors", s.vectors},
                     {"samples", s.samples},
                     {"zero_fraction", s.zero_fraction()},
                     {"threshold_fractions", fractions}});
  }
  return {{"units", units}};
}

namespace {

void histogram_rows(std::string& out, UnitId unit, const ActivationHistogram& h) {
  const auto signal = signal_name(h.signal());
  out += fmt::format("{},{},{},-1,-inf,{},{}\n", unit.layer, unit.expert, signal, -h.limit(), h.underflow());
  for (std::size_t b = 0; b < h.bins(); ++b) {
    out += fmt::format("{},{},{},{},{},{},{}\n", unit.layer, unit.expert, signal, b, h.bin_lower(b), h.bin_upper(b),
                       h.counts()[b]);
  }
  out += fmt::format("{},{},{},{},{},inf,{}\n", unit.layer, unit.expert, signal, h.bins(), h.limit(), h.overflow());
}

nlohmann::json one_histogram(const ActivationHistogram& h) {
  return {{"signal", signal_name(h.signal())}, {"limit", h.limit()},       {"bins", h.bins()},
          {"counts", h.counts()},              {"underflow", h.underflow()}, {"overflow", h.overflow()},
          {"samples", h.samples()}};
}

}  // namespace

std::string histogram_csv(const std::map<UnitId, UnitHistograms>& histograms) {
  std::string out = "layer,expert,signal,bin,lower,upper,count\n";
  for (const auto& [unit, h] : histograms) {
    histogram_rows(out, unit, h.gate_pre);
    histogram_rows(out, unit, h.up_pre);
    histogram_rows(out, unit, h.combined);
  }
  return out;
}

nlohmann::json histogram_json(const std::map<UnitId, UnitHistograms>& histograms) {
  auto units = nlohmann::json::array();
  for (const auto& [unit, h] : histograms) {
    units.push_back({{"layer", unit.layer},
                     {"expert", unit.expert},
                     {"histograms", {one_histogram(h.gate_pre), one_histogram(h.up_pre), one_histogram(h.combined)}}});
  }
  return {{"units", units}};
}

std::string sweep_csv(const std::vector<DeviationRow>& rows) {
  std::string out = "keep_fraction,combined_deviation,output_deviation\n";
  for (const auto& r : rows) out += fmt::format("{},{},{}\n", r.keep_fraction, r.combined_deviation, r.output_deviation);
  return out;
}

nlohmann::json sweep_json(const std::vector<DeviationRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"keep_fraction", r.keep_fraction},
                   {"combined_deviation", r.combined_deviation},
                   {"output_deviation", r.output_deviation}});
  }
  return {{"rows", arr}};
}

std::string bench_csv(const std::vector<BenchResult>& results) {
  std::string out =
      "d,n,sparsity,dense_us,sparse_us,speedup,flops_dense,flops_sparse,active,iterations,checksum_dense,checksum_sparse\n";
  for (const auto& r : results) {
    out += fmt::format("{},{},{},{:.3f},{:.3f},{:.4f},{},{},{},{},{},{}\n", r.d, r.n, r.sparsity, r.dense_us, r.sparse_us,
                       r.speedup, r.flops_dense, r.flops_sparse, r.active, r.iterations, r.checksum_dense,
                       r.checksum_sparse);
  }
  return out;
}

nlohmann::json machine_json(const MachineInfo& m) {
  return {{"cpu", m.cpu}, {"compiler", m.compiler}, {"build_type", m.build_type}, {"hostname", m.hostname}};
}

nlohmann::json bench_json(const BenchReport& report) {
  auto arr = nlohmann::json::array();
  for (const auto& r : report.results) {
    arr.push_back({{"d", r.d},
                   {"n", r.n},
                   {"sparsity", r.sparsity},
                   {"active", r.active},
                   {"threads", r.threads},
                   {"iterations", r.iterations},
                   {"dense_us", r.dense_us},
                   {"sparse_us", r.sparse_us},
                   {"speedup", r.speedup},
                   {"flops_dense", r.flops_dense},
                   {"flops_sparse", r.flops_sparse},
                   {"checksum_dense", r.checksum_dense},
                   {"checksum_sparse", r.checksum_sparse}});
  }
  return {{"machine", machine_json(report.machine)}, {"results", arr}};
}

nlohmann::json composition_json(const SparsityComposition& c) {
  return {{"expert_sparsity", c.expert_sparsity},
          {"neuron_sparsity", c.neuron_sparsity},
          {"combined_active_fraction", c.combined_active_fraction},
          {"combined_sparsity", c.combined_sparsity}};
}

nlohmann::json activated_params_json(const ActivatedParams& p) {
  return {{"attention", p.attention},
          {"embedding", p.embedding},
          {"router", p.router},
          {"ffn", p.ffn},
          {"active_neurons_per_expert", p.active_neurons_per_expert},
          {"total", p.total}};
}

nlohmann::json predictor_metrics_json(const PredictorMetrics& m) {
  return {{"recall", m.recall},
          {"precision", m.precision},
          {"predicted_active_fraction", m.predicted_active_fraction},
          {"true_active_fraction", m.true_active_fraction},
          {"output_deviation", m.output_deviation},
          {"samples", m.samples}};
}

}  // namespace sparsegate
