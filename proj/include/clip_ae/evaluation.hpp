#pragma once

#include "clip_ae/feature_io.hpp"
#include "clip_ae/localization.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace clip_ae {

/// |a ∩ b| / |a ∪ b|. Throws InvalidInterval unless start < end for both.
double temporal_iou(double a_start, double a_end, double b_start, double b_end);

/// Interpolation-free AP for one class: proposals are ranked by
/// proposal_before, each matches the unmatched same-video GT of highest IoU
/// (lowest index on ties) when that IoU >= threshold, and
///   AP = sum over true-positive ranks of precision@rank / |GT|.
/// Empty GT gives 1 with no proposals and 0 otherwise.
double average_precision(std::span<const Proposal> proposals, std::span<const GroundTruthSegment> gts,
                         double iou_threshold);

/// IoU thresholds used for Tables of mAP@IoU: 0.1..0.7 step 0.1 plus 0.5..0.95 step 0.05.
std::vector<double> default_iou_thresholds();

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> map;                         // mAP per threshold, fraction in [0, 1]
  std::map<std::string, double> averages;          // "0.1:0.5", "0.3:0.7", "0.1:0.7", "0.5:0.95"
  std::map<int, std::vector<double>> class_ap;     // class -> AP per threshold (classes with GT)

  /// mAP at a threshold listed in `thresholds`; throws InvalidArgument otherwise.
  double map_at(double threshold) const;
};

/// mAP@theta = mean AP over classes with at least one GT segment.
EvalReport evaluate(std::span<const Proposal> proposals, std::span<const GroundTruthSegment> gts,
                    std::span<const double> thresholds);

/// Renames cluster ids in `proposals` to ground-truth class ids using the
/// maximum-agreement one-to-one mapping between each video's top-scoring
/// proposal class and its ground-truth class.
std::vector<Proposal> align_proposal_classes(std::span<const Proposal> proposals,
                                             std::span<const GroundTruthSegment> gts, int num_classes);

}  // namespace clip_ae
