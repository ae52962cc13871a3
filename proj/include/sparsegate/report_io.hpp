#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsegate/analysis.hpp"
#include "sparsegate/moe.hpp"
#include "sparsegate/predictor.hpp"
#include "sparsegate/sparse_ffn.hpp"
#include "sparsegate/sparsity.hpp"

namespace sparsegate {

// CSV schemas (header row first, one record per line):
//
//   sparsity:   layer,expert,vectors,samples,zero_fraction,le_<t>...
//               (expert = -1 for dense blocks; one le_ column per threshold)
//   histogram:  layer,expert,signal,bin,lower,upper,count
//               (bin -1 is underflow, bin == bins is overflow)
//   sweep:      keep_fraction,combined_deviation,output_deviation
//   bench:      d,n,sparsity,dense_us,sparse_us,speedup,flops_dense,flops_sparse,
//               active,iterations,checksum_dense,checksum_sparse

std::string sparsity_csv(const SparsityReport& report);
nlohmann::json sparsity_json(const SparsityReport& report);

std::string histogram_csv(const std::map<UnitId, UnitHistograms>& histograms);
nlohmann::json histogram_json(const std::map<UnitId, UnitHistograms>& histograms);

std::string sweep_csv(const std::vector<DeviationRow>& rows);
nlohmann::json sweep_json(const std::vector<DeviationRow>& rows);

std::string bench_csv(const std::vector<BenchResult>& results);
nlohmann::json bench_json(const BenchReport& report);
nlohmann::json machine_json(const MachineInfo& machine);

nlohmann::json composition_json(const SparsityComposition& c);
nlohmann::json activated_params_json(const ActivatedParams& p);
nlohmann::json predictor_metrics_json(const PredictorMetrics& m);

}  // namespace sparsegate
