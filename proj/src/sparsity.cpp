#include "sparsegate/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace sparsegate {

NeuronMask::NeuronMask(std::size_t n, std::vector<std::uint32_t> active) : n_(n), active_(std::move(active)) {
  for (std::size_t i = 0; i < active_.size(); ++i) {
    if (active_[i] >= n_) throw ShapeError(fmt::format("mask index {} out of range for n={}", active_[i], n_));
    if (i > 0 && active_[i] <= active_[i - 1]) throw DomainError("mask indices must be strictly ascending");
  }
}

NeuronMask NeuronMask::full(std::size_t n) {
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0U);
  return NeuronMask(n, std::move(all));
}

NeuronMask NeuronMask::none(std::size_t n) { return NeuronMask(n, {}); }

NeuronMask NeuronMask::from_nonzero(std::span<const float> values) {
  std::vector<std::uint32_t> active;
  for (std::size_t j = 0; j < values.size(); ++j)
    if (values[j] != 0.0F) active.push_back(static_cast<std::uint32_t>(j));
  return NeuronMask(values.size(), std::move(active));
}

double NeuronMask::sparsity() const {
  if (n_ == 0) return 0.0;
  return 1.0 - static_cast<double>(active_.size()) / static_cast<double>(n_);
}

bool NeuronMask::contains(std::size_t j) const {
  return std::binary_search(active_.begin(), active_.end(), static_cast<std::uint32_t>(j));
}

bool NeuronMask::is_superset_of(const NeuronMask& other) const {
  return n_ == other.n_ && std::includes(active_.begin(), active_.end(), other.active_.begin(), other.active_.end());
}

std::size_t kept_count(double keep_fraction, std::size_t n) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
    throw DomainError(fmt::format("keep fraction must lie in [0, 1], got {}", keep_fraction));
  }
  return static_cast<std::size_t>(std::round(keep_fraction * static_cast<double>(n)));
}

NeuronMask topk_mask(std::span<const float> combined, double keep_fraction) {
  const std::size_t n = combined.size();
  const std::size_t k = kept_count(keep_fraction, n);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    const float ma = std::fabs(combined[a]);
    const float mb = std::fabs(combined[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (k < n) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return NeuronMask(n, std::move(order));
}

Vector apply_mask(std::span<const float> values, const NeuronMask& mask) {
  if (mask.n() != values.size()) throw ShapeError("apply_mask: mask size does not match values");
  Vector out(values.size());
  for (auto j : mask.active()) out[j] = values[j];
  return out;
}

Vector masked_ffn_forward(const FfnWeights& w, std::span<const float> x, double keep_fraction) {
  const auto result = ffn_forward(w, x, true);
  const auto& comb = result.trace->combined;
  const auto mask = topk_mask(comb.span(), keep_fraction);
  const auto kept = apply_mask(comb.span(), mask);
  return matvec(w.w_down(), kept.span());
}

double UnitSparsity::zero_fraction() const {
  return samples == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(samples);
}

double UnitSparsity::threshold_fraction(std::size_t i) const {
  return samples == 0 ? 0.0 : static_cast<double>(at_or_below.at(i)) / static_cast<double>(samples);
}

void SparsityReport::record(UnitId unit, std::span<const float> values, std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw DomainError("thresholds must be ascending");
  auto& stats = units_[unit];
  if (stats.vectors == 0 && stats.thresholds.empty()) {
    stats.thresholds.assign(thresholds.begin(), thresholds.end());
    stats.at_or_below.assign(thresholds.size(), 0);
  } else if (!std::equal(stats.thresholds.begin(), stats.thresholds.end(), thresholds.begin(), thresholds.end())) {
    throw DomainError("thresholds differ from earlier records of this unit");
  }
  ++stats.vectors;
  stats.samples += values.size();
  for (float v : values) {
    if (v == 0.0F) ++stats.zeros;
    const double mag = std::fabs(static_cast<double>(v));
    // Thresholds are ascending, so every threshold from the first one that
    // covers |v| onwards covers it as well.
    const auto first = std::lower_bound(stats.thresholds.begin(), stats.thresholds.end(), mag);
    for (auto it = first; it != stats.thresholds.end(); ++it) ++stats.at_or_below[it - stats.thresholds.begin()];
  }
}

void SparsityReport::merge(const SparsityReport& other) {
  for (const auto& [unit, theirs] : other.units_) {
    auto [it, inserted] = units_.try_emplace(unit, theirs);
    if (inserted) continue;
    auto& mine = it->second;
    if (mine.thresholds != theirs.thresholds) throw DomainError("cannot merge reports with different thresholds");
    mine.vectors += theirs.vectors;
    mine.samples += theirs.samples;
    mine.zeros += theirs.zeros;
    for (std::size_t i = 0; i < mine.at_or_below.size(); ++i) mine.at_or_below[i] += theirs.at_or_below[i];
  }
}

const UnitSparsity& SparsityReport::at(UnitId unit) const {
  const auto it = units_.find(unit);
  if (it == units_.end()) throw DomainError(fmt::format("no records for layer {} expert {}", unit.layer, unit.expert));
  return it->second;
}

SparsityReport record_sparsity(SparsityReport report, UnitId unit, const FfnTrace& trace,
                               std::span<const double> thresholds) {
  report.record(unit, trace.combined.span(), thresholds);
  return report;
}

SparsityReport merge(SparsityReport a, const SparsityReport& b) {
  a.merge(b);
  return a;
}

std::string signal_name(Signal s) {
  switch (s) {
    case Signal::gate_pre:
      return "gate_pre";
    case Signal::up_pre:
      return "up_pre";
    case Signal::combined:
      return "combined";
  }
  return "unknown";
}

Signal parse_signal(std::string_view text) {
  if (text == "gate_pre") return Signal::gate_pre;
  if (text == "up_pre") return Signal::up_pre;
  if (text == "combined") return Signal::combined;
  throw DomainError(fmt::format("unknown signal '{}'", text));
}

ActivationHistogram::ActivationHistogram(Signal signal, double limit, std::size_t bins)
    : signal_(signal), limit_(limit), counts_(bins, 0) {
  if (!(limit > 0.0) || !std::isfinite(limit)) throw DomainError("histogram limit must be positive");
  if (bins == 0) throw DomainError("histogram needs at least one bin");
}

std::size_t ActivationHistogram::bin_of(double value) const {
  const double width = 2.0 * limit_ / static_cast<double>(counts_.size());
  const auto bin = static_cast<std::size_t>(std::floor((value + limit_) / width));
  return std::min(bin, counts_.size() - 1);
}

double ActivationHistogram::bin_lower(std::size_t bin) const {
  return -limit_ + 2.0 * limit_ * static_cast<double>(bin) / static_cast<double>(counts_.size());
}

double ActivationHistogram::bin_upper(std::size_t bin) const { return bin_lower(bin + 1); }

void ActivationHistogram::record(std::span<const float> values) {
  for (float v : values) {
    const double x = v;
    if (x < -limit_) {
      ++underflow_;
    } else if (x > limit_) {
      ++overflow_;
    } else {
      ++counts_[bin_of(x)];
    }
  }
  samples_ += values.size();
}

void ActivationHistogram::record(const FfnTrace& trace) {
  switch (signal_) {
    case Signal::gate_pre:
      record(trace.gate_pre.span());
      break;
    case Signal::up_pre:
      record(trace.up_pre.span());
      break;
    case Signal::combined:
      record(trace.combined.span());
      break;
  }
}

void ActivationHistogram::merge(const ActivationHistogram& other) {
  if (other.signal_ != signal_ || other.limit_ != limit_ || other.counts_.size() != counts_.size()) {
    throw DomainError("cannot merge histograms with different signal or binning");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  underflow_ += other.underflow_;
  overflow_ += other.overflow_;
  samples_ += other.samples_;
}

ActivationHistogram record_histogram(ActivationHistogram hist, const FfnTrace& trace) {
  hist.record(trace);
  return hist;
}

void validate_keep_fractions(std::span<const double> keep_fractions) {
  for (double k : keep_fractions) {
    if (!(k >= 0.0 && k <= 1.0)) throw DomainError(fmt::format("keep fraction {} outside [0, 1]", k));
  }
  if (!std::is_sorted(keep_fractions.begin(), keep_fractions.end())) {
    throw DomainError("keep fractions must be ascending");
  }
}

std::vector<DeviationRow> deviation_sweep(const FfnWeights& w, std::span<const Vector> inputs,
                                          std::span<const double> keep_fractions) {
  if (inputs.empty()) throw DomainError("deviation_sweep: empty input batch");
  validate_keep_fractions(keep_fractions);
  std::vector<DeviationRow> rows;
  rows.reserve(keep_fractions.size());
  for (double keep : keep_fractions) rows.push_back({keep, 0.0, 0.0});

  for (const auto& x : inputs) {
    const auto result = ffn_forward(w, x.span(), true);
    const auto& comb = result.trace->combined;
    for (auto& row : rows) {
      const auto kept = apply_mask(comb.span(), topk_mask(comb.span(), row.keep_fraction));
      const auto out = matvec(w.w_down(), kept.span());
      row.combined_deviation += relative_l2(comb.span(), kept.span());
      row.output_deviation += relative_l2(result.output.span(), out.span());
    }
  }
  const auto count = static_cast<double>(inputs.size());
  for (auto& row : rows) {
    row.combined_deviation /= count;
    row.output_deviation /= count;
  }
  return rows;
}

}  // namespace sparsegate
