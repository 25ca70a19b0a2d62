#pragma once

#include "clip_ae/caf_fusion.hpp"

#include <span>
#include <string>
#include <vector>

namespace clip_ae {

/// Per-segment class probabilities (T x K, rows sum to 1).
struct Tcam {
  std::string video_id;
  Matrix scores;
  double segment_duration_s = 1.0;
};

struct Proposal {
  std::string video_id;
  int class_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;
};

/// Ranking used by NMS and AP: score descending, then earlier start, then
/// shorter length, then video id.
bool proposal_before(const Proposal& a, const Proposal& b);

struct LocalizationOptions {
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double margin_fraction = 0.25;
  double nms_iou = 0.5;
  int classes_per_video = 1;

  void validate() const;
};

/// Row softmax of head(features). `features` is T x d, segment-major.
Tcam compute_tcam(const std::string& video_id, const Matrix& features, const AffineMap& head,
                  double segment_duration_s = 1.0);

/// Maximal runs with score >= theta for every theta. A run [s, e) scores
///   mean(inside) - mean(flanks),
/// with flanks of max(1, round(margin_fraction * len)) segments on each side,
/// clamped to the video; missing flanks contribute 0.
std::vector<Proposal> extract_proposals(const Tcam& tcam, int class_index, std::span<const double> thresholds,
                                        double margin_fraction = 0.25);

/// Greedy class-wise NMS under the proposal_before ranking.
std::vector<Proposal> temporal_nms(std::vector<Proposal> proposals, double iou_threshold);

/// Extracts proposals for the `classes_per_video` classes with the highest
/// mean activation, then applies NMS.
std::vector<Proposal> localize_video(const Tcam& tcam, const LocalizationOptions& options);

}  // namespace clip_ae
