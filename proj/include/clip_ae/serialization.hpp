#pragma once

#include "clip_ae/pipeline.hpp"

#include <json.hpp>

#include <filesystem>

namespace clip_ae {

using Json = nlohmann::json;

/// Everything a config file may set. Unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  LocalizationOptions localization;
};

RunConfig parse_run_config(const Json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
Json to_json(const RunConfig& config);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& what);

struct Checkpoint {
  ModelConfig model_config;
  RunConfig run_config;
  ModelParams params;
  MemoryBanks banks;
  std::vector<EpochRecord> loss_history;
  std::vector<LabelRecord> label_history;
  PseudoLabels final_labels;
};

Checkpoint make_checkpoint(const TrainResult& result, const RunConfig& config);
Json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const Json& doc);

Json proposals_to_json(std::span<const Proposal> proposals);
std::vector<Proposal> proposals_from_json(const Json& doc);
Json tcams_to_json(std::span<const Tcam> tcams);

Json to_json(const EvalReport& report);
Json ablation_to_json(const std::vector<AblationRow>& rows);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& doc, const std::filesystem::path& path);

}  // namespace clip_ae
