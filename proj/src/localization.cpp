#include "clip_ae/localization.hpp"

#include "clip_ae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace clip_ae {

bool proposal_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  const double la = a.end_s - a.start_s, lb = b.end_s - b.start_s;
  if (la != lb) return la < lb;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  return a.class_index < b.class_index;
}

void LocalizationOptions::validate() const {
  require(!thresholds.empty(), ErrorCode::InvalidArgument, "at least one activation threshold is required");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    require(thresholds[i] > 0.0 && thresholds[i] < 1.0, ErrorCode::InvalidArgument, "thresholds must lie in (0, 1)");
    require(i == 0 || thresholds[i] > thresholds[i - 1], ErrorCode::InvalidArgument, "thresholds must ascend");
  }
  require(margin_fraction >= 0.0, ErrorCode::InvalidArgument, "margin_fraction must be >= 0");
  require(nms_iou >= 0.0 && nms_iou <= 1.0, ErrorCode::InvalidArgument, "nms_iou must be in [0, 1]");
  require(classes_per_video >= 1, ErrorCode::InvalidArgument, "classes_per_video must be >= 1");
}

Tcam compute_tcam(const std::string& video_id, const Matrix& features, const AffineMap& head,
                  double segment_duration_s) {
  require(features.cols() == head.in_dim(), ErrorCode::DimensionMismatch,
          "features " + shape_str(features) + " vs head input " + std::to_string(head.in_dim()));
  Matrix logits = features * head.weight.transpose();
  logits.rowwise() += head.bias.transpose();
  return Tcam{video_id, row_softmax(logits), segment_duration_s};
}

std::vector<Proposal> extract_proposals(const Tcam& tcam, int class_index, std::span<const double> thresholds,
                                        double margin_fraction) {
  require(class_index >= 0 && class_index < tcam.scores.cols(), ErrorCode::IndexOutOfRange,
          "class " + std::to_string(class_index));
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    require(thresholds[i] > 0.0 && thresholds[i] < 1.0 && (i == 0 || thresholds[i] > thresholds[i - 1]),
            ErrorCode::InvalidArgument, "thresholds must ascend within (0, 1)");

  const Vector act = tcam.scores.col(class_index);
  const Index length = act.size();
  std::vector<Proposal> out;
  for (double theta : thresholds) {
    Index t = 0;
    while (t < length) {
      if (act(t) < theta) {
        ++t;
        continue;
      }
      const Index start = t;
      while (t < length && act(t) >= theta) ++t;
      const Index stop = t;
      const Index run = stop - start;

      const Index margin = std::max<Index>(1, static_cast<Index>(std::lround(margin_fraction * static_cast<double>(run))));
      const Index left = std::max<Index>(0, start - margin);
      const Index right = std::min<Index>(length, stop + margin);
      const Index outer_count = (start - left) + (right - stop);
      const double outer_sum = act.segment(left, start - left).sum() + act.segment(stop, right - stop).sum();
      const double inner = act.segment(start, run).mean();
      const double outer = outer_count > 0 ? outer_sum / static_cast<double>(outer_count) : 0.0;

      out.push_back(Proposal{tcam.video_id, class_index, static_cast<double>(start) * tcam.segment_duration_s,
                             static_cast<double>(stop) * tcam.segment_duration_s, inner - outer});
    }
  }
  return out;
}

std::vector<Proposal> temporal_nms(std::vector<Proposal> proposals, double iou_threshold) {
  require(iou_threshold >= 0.0 && iou_threshold <= 1.0, ErrorCode::InvalidArgument, "iou_threshold must be in [0, 1]");
  std::stable_sort(proposals.begin(), proposals.end(), proposal_before);
  std::vector<Proposal> kept;
  for (const auto& p : proposals) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return k.video_id == p.video_id && k.class_index == p.class_index &&
             temporal_iou(k.start_s, k.end_s, p.start_s, p.end_s) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Proposal> localize_video(const Tcam& tcam, const LocalizationOptions& options) {
  options.validate();
  const Vector mean_score = tcam.scores.colwise().mean().transpose();
  std::vector<int> classes(static_cast<std::size_t>(mean_score.size()));
  std::iota(classes.begin(), classes.end(), 0);
  std::stable_sort(classes.begin(), classes.end(), [&](int a, int b) { return mean_score(a) > mean_score(b); });
  classes.resize(std::min<std::size_t>(classes.size(), static_cast<std::size_t>(options.classes_per_video)));

  std::vector<Proposal> all;
  for (int c : classes) {
    auto p = extract_proposals(tcam, c, options.thresholds, options.margin_fraction);
    all.insert(all.end(), p.begin(), p.end());
  }
  return temporal_nms(std::move(all), options.nms_iou);
}

}  // namespace clip_ae
