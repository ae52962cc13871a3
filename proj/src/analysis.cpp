#include "sparsegate/analysis.hpp"

#include <algorithm>

namespace sparsegate {
namespace {

void add_scaled(Vector& acc, const Vector& y, float weight) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += weight * y[k];
}

void add(Vector& acc, const Vector& y) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += y[k];
}

class Profiler {
 public:
  Profiler(const ProfileOptions& options, ProfileResult& result) : options_(options), result_(result) {}

  void record(UnitId unit, const FfnTrace& trace) {
    result_.report.record(unit, trace.combined.span(), options_.thresholds);
    if (!options_.histograms) return;
    auto it = result_.histograms.find(unit);
    if (it == result_.histograms.end()) {
      const auto make = [&](Signal s) { return ActivationHistogram(s, options_.histogram_limit, options_.histogram_bins); };
      it = result_.histograms.emplace(unit, UnitHistograms{make(Signal::gate_pre), make(Signal::up_pre), make(Signal::combined)})
               .first;
    }
    it->second.gate_pre.record(trace);
    it->second.up_pre.record(trace);
    it->second.combined.record(trace);
  }

 private:
  const ProfileOptions& options_;
  ProfileResult& result_;
};

void profile_chunk(const Model& model, std::span<const Vector> inputs, const ProfileOptions& options,
                   ProfileResult& result) {
  Profiler profiler(options, result);
  for (const auto& x : inputs) {
    Vector h = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const auto& layer = model.layers[i];
      const int layer_id = static_cast<int>(i);
      if (!layer.is_moe()) {
        const auto r = ffn_forward(layer.ffn(), h.span(), true);
        profiler.record({layer_id, -1}, *r.trace);
        add(h, r.output);
        continue;
      }
      Vector y(h.size());
      for (const auto& [e, weight] : route(layer.moe(), h.span())) {
        const auto r = ffn_forward(layer.moe().expert(e), h.span(), true);
        profiler.record({layer_id, static_cast<int>(e)}, *r.trace);
        add_scaled(y, r.output, weight);
      }
      add(h, y);
    }
  }
}

}  // namespace

ProfileResult profile_model(const Model& model, std::span<const Vector> inputs, const ProfileOptions& options) {
  if (!std::is_sorted(options.thresholds.begin(), options.thresholds.end())) {
    throw DomainError("profile: thresholds must be ascending");
  }
  const std::size_t chunk = options.chunk_size == 0 ? std::max<std::size_t>(inputs.size(), 1) : options.chunk_size;
  ProfileResult total;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    ProfileResult part;
    profile_chunk(model, inputs.subspan(start, std::min(chunk, inputs.size() - start)), options, part);
    total.report.merge(part.report);
    for (const auto& [unit, hists] : part.histograms) {
      auto [it, inserted] = total.histograms.try_emplace(unit, hists);
      if (inserted) continue;
      it->second.gate_pre.merge(hists.gate_pre);
      it->second.up_pre.merge(hists.up_pre);
      it->second.combined.merge(hists.combined);
    }
  }
  return total;
}

std::vector<std::vector<std::vector<Vector>>> unit_inputs(const Model& model, std::span<const Vector> inputs) {
  std::vector<std::vector<std::vector<Vector>>> out(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    out[i].resize(model.layers[i].is_moe() ? model.layers[i].moe().num_experts() : 1);
  }
  for (const auto& x : inputs) {
    Vector h = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const auto& layer = model.layers[i];
      if (!layer.is_moe()) {
        out[i].front().push_back(h);
        add(h, ffn_forward(layer.ffn(), h.span()).output);
        continue;
      }
      Vector y(h.size());
      for (const auto& [e, weight] : route(layer.moe(), h.span())) {
        out[i][e].push_back(h);
        add_scaled(y, ffn_forward(layer.moe().expert(e), h.span()).output, weight);
      }
      add(h, y);
    }
  }
  return out;
}

std::vector<DeviationRow> sweep_model(const Model& model, std::span<const Vector> inputs,
                                      std::span<const double> keep_fractions) {
  if (inputs.empty()) throw DomainError("sweep: empty input batch");
  validate_keep_fractions(keep_fractions);

  std::vector<DeviationRow> rows;
  for (double keep : keep_fractions) rows.push_back({keep, 0.0, 0.0});
  std::vector<std::size_t> unit_evals(rows.size(), 0);

  for (const auto& x : inputs) {
    // Dense trajectory; keep every evaluated combined vector.
    std::vector<Vector> combined;
    Vector dense = x;
    for (const auto& layer : model.layers) {
      if (!layer.is_moe()) {
        auto r = ffn_forward(layer.ffn(), dense.span(), true);
        combined.push_back(std::move(r.trace->combined));
        add(dense, r.output);
        continue;
      }
      Vector y(dense.size());
      for (const auto& [e, weight] : route(layer.moe(), dense.span())) {
        auto r = ffn_forward(layer.moe().expert(e), dense.span(), true);
        combined.push_back(std::move(r.trace->combined));
        add_scaled(y, r.output, weight);
      }
      add(dense, y);
    }

    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double keep = rows[k].keep_fraction;
      for (const auto& c : combined) {
        rows[k].combined_deviation += relative_l2(c.span(), apply_mask(c.span(), topk_mask(c.span(), keep)).span());
      }
      unit_evals[k] += combined.size();

      Vector masked = x;
      for (const auto& layer : model.layers) {
        const Vector y = layer.is_moe() ? moe_forward(layer.moe(), masked.span(), MoeExecution{keep, std::nullopt})
                                        : masked_ffn_forward(layer.ffn(), masked.span(), keep);
        add(masked, y);
      }
      const double update = l2_distance(dense.span(), x.span());
      const double error = l2_distance(dense.span(), masked.span());
      rows[k].output_deviation += update == 0.0 ? (error == 0.0 ? 0.0 : INFINITY) : error / update;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].combined_deviation /= static_cast<double>(std::max<std::size_t>(unit_evals[k], 1));
    rows[k].output_deviation /= static_cast<double>(inputs.size());
  }
  return rows;
}

}  // namespace sparsegate
