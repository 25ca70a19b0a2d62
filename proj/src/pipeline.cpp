#include "clip_ae/pipeline.hpp"

#include <cstdio>

namespace clip_ae {

LocalizationOutput localize_dataset(const ModelParams& params, const ModelConfig& config, const Dataset& dataset,
                                    const LocalizationOptions& options, int threads) {
  options.validate();
  LocalizationOutput out;
  out.tcams.resize(dataset.videos.size());
  std::vector<std::vector<Proposal>> per_video(dataset.videos.size());
  parallel_for(dataset.videos.size(), threads, [&](std::size_t i) {
    const VideoFeatures& v = dataset.videos[i];
    const VideoForward fwd = forward_video(params, config, v);
    out.tcams[i] = compute_tcam(v.video_id, fwd.head_input, params.head, v.segment_duration_s);
    per_video[i] = localize_video(out.tcams[i], options);
  });
  for (auto& p : per_video) out.proposals.insert(out.proposals.end(), p.begin(), p.end());
  return out;
}

EvalReport evaluate_localization(const LocalizationOutput& output, const Dataset& dataset,
                                 std::span<const double> thresholds) {
  const auto gts = dataset.ground_truth();
  const auto aligned = align_proposal_classes(output.proposals, gts, dataset.num_classes());
  return evaluate(aligned, gts, thresholds);
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const TrainConfig& base_config,
                                      const LocalizationOptions& options) {
  require(dataset.has_ground_truth(), ErrorCode::SchemaError, "ablation needs ground truth for every video");
  struct Variant {
    const char* name;
    bool caf;
    bool ccp;
  };
  static constexpr Variant kVariants[] = {
      {"baseline", false, false}, {"CAF", true, false}, {"CCP", false, true}, {"CAF+CCP", true, true}};

  const auto thresholds = default_iou_thresholds();
  std::vector<AblationRow> rows;
  for (const auto& v : kVariants) {
    TrainConfig cfg = base_config;
    cfg.model.caf_enabled = v.caf;
    cfg.model.ccp_enabled = v.ccp;
    const TrainResult trained = train(dataset, cfg);
    const LocalizationOutput loc = localize_dataset(trained.params, trained.model_config, dataset, options, cfg.threads);

    AblationRow row;
    row.name = v.name;
    row.caf_enabled = v.caf;
    row.ccp_enabled = v.ccp;
    row.report = evaluate_localization(loc, dataset, thresholds);
    row.map_050 = row.report.map_at(0.5);
    row.map_075 = row.report.map_at(0.75);
    row.map_095 = row.report.map_at(0.95);
    row.average = row.report.averages.at("0.5:0.95");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "CAF  CCP   mAP@0.5  mAP@0.75  mAP@0.95    AVG\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-4s %-4s %8.2f %9.2f %9.2f %6.2f\n", r.caf_enabled ? "x" : "-",
                  r.ccp_enabled ? "x" : "-", 100.0 * r.map_050, 100.0 * r.map_075, 100.0 * r.map_095,
                  100.0 * r.average);
    out += line;
  }
  return out;
}

}  // namespace clip_ae
