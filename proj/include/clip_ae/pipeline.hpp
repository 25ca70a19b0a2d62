#pragma once

#include "clip_ae/evaluation.hpp"
#include "clip_ae/localization.hpp"
#include "clip_ae/trainer.hpp"

#include <string>
#include <vector>

namespace clip_ae {

struct LocalizationOutput {
  std::vector<Tcam> tcams;
  std::vector<Proposal> proposals;  // class_index is the model's cluster id
};

LocalizationOutput localize_dataset(const ModelParams& params, const ModelConfig& config, const Dataset& dataset,
                                    const LocalizationOptions& options, int threads = 1);

/// Cluster-aligned evaluation of a localization run against the dataset's
/// ground truth.
EvalReport evaluate_localization(const LocalizationOutput& output, const Dataset& dataset,
                                 std::span<const double> thresholds);

struct AblationRow {
  std::string name;  // "baseline", "CAF", "CCP", "CAF+CCP"
  bool caf_enabled = false;
  bool ccp_enabled = false;
  double map_050 = 0.0;
  double map_075 = 0.0;
  double map_095 = 0.0;
  double average = 0.0;  // mean mAP over 0.5:0.05:0.95
  EvalReport report;
};

/// Trains and evaluates {none, CAF, CCP, CAF+CCP} with identical seeds.
std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& base_config,
                                      const LocalizationOptions& options);

/// Plain-text rendering of the ablation table, values in percent.
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace clip_ae
