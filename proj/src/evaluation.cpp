#include "clip_ae/evaluation.hpp"

#include "clip_ae/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace clip_ae {

double temporal_iou(double a_start, double a_end, double b_start, double b_end) {
  require(a_start < a_end && b_start < b_end, ErrorCode::InvalidInterval,
          "[" + std::to_string(a_start) + ", " + std::to_string(a_end) + "] vs [" + std::to_string(b_start) + ", " +
              std::to_string(b_end) + "]");
  const double inter = std::max(0.0, std::min(a_end, b_end) - std::max(a_start, b_start));
  const double uni = (a_end - a_start) + (b_end - b_start) - inter;
  return inter / uni;
}

double average_precision(std::span<const Proposal> proposals, std::span<const GroundTruthSegment> gts,
                         double iou_threshold) {
  if (gts.empty()) return proposals.empty() ? 1.0 : 0.0;

  std::vector<Proposal> ranked(proposals.begin(), proposals.end());
  std::stable_sort(ranked.begin(), ranked.end(), proposal_before);

  std::unordered_map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) by_video[gts[g].video_id].push_back(g);
  std::vector<char> matched(gts.size(), 0);

  double precision_sum = 0.0;
  std::size_t true_positives = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const Proposal& p = ranked[r];
    const auto it = by_video.find(p.video_id);
    double best_iou = -1.0;
    std::size_t best = 0;
    if (it != by_video.end()) {
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const double iou = temporal_iou(p.start_s, p.end_s, gts[g].start_s, gts[g].end_s);
        if (iou > best_iou) {
          best_iou = iou;
          best = g;
        }
      }
    }
    if (best_iou >= iou_threshold) {
      matched[best] = 1;
      ++true_positives;
      precision_sum += static_cast<double>(true_positives) / static_cast<double>(r + 1);
    }
  }
  return precision_sum / static_cast<double>(gts.size());
}

std::vector<double> default_iou_thresholds() {
  return {0.10, 0.20, 0.30, 0.40, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
}

namespace {

struct Window {
  const char* name;
  std::vector<double> thresholds;
};

const std::vector<Window>& average_windows() {
  static const std::vector<Window> windows{
      {"0.1:0.5", {0.1, 0.2, 0.3, 0.4, 0.5}},
      {"0.3:0.7", {0.3, 0.4, 0.5, 0.6, 0.7}},
      {"0.1:0.7", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}},
      {"0.5:0.95", {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95}},
  };
  return windows;
}

std::ptrdiff_t find_threshold(const std::vector<double>& list, double t) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (std::abs(list[i] - t) < 1e-9) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

}  // namespace

double EvalReport::map_at(double threshold) const {
  const auto i = find_threshold(thresholds, threshold);
  require(i >= 0, ErrorCode::InvalidArgument, "threshold " + std::to_string(threshold) + " not evaluated");
  return map[static_cast<std::size_t>(i)];
}

EvalReport evaluate(std::span<const Proposal> proposals, std::span<const GroundTruthSegment> gts,
                    std::span<const double> thresholds) {
  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());

  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_index);

  for (int c : classes) {
    std::vector<Proposal> cp;
    std::vector<GroundTruthSegment> cg;
    for (const auto& p : proposals)
      if (p.class_index == c) cp.push_back(p);
    for (const auto& g : gts)
      if (g.class_index == c) cg.push_back(g);
    auto& aps = report.class_ap[c];
    for (double t : thresholds) aps.push_back(average_precision(cp, cg, t));
  }

  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    double sum = 0.0;
    for (const auto& [_, aps] : report.class_ap) sum += aps[k];
    report.map.push_back(report.class_ap.empty() ? 0.0 : sum / static_cast<double>(report.class_ap.size()));
  }

  for (const auto& w : average_windows()) {
    double sum = 0.0;
    bool complete = true;
    for (double t : w.thresholds) {
      const auto i = find_threshold(report.thresholds, t);
      if (i < 0) {
        complete = false;
        break;
      }
      sum += report.map[static_cast<std::size_t>(i)];
    }
    if (complete) report.averages[w.name] = sum / static_cast<double>(w.thresholds.size());
  }
  return report;
}

std::vector<Proposal> align_proposal_classes(std::span<const Proposal> proposals,
                                             std::span<const GroundTruthSegment> gts, int num_classes) {
  std::unordered_map<std::string, int> truth;
  for (const auto& g : gts)
    if (!truth.contains(g.video_id)) truth[g.video_id] = g.class_index;

  std::unordered_map<std::string, const Proposal*> top;
  for (const auto& p : proposals) {
    require(p.class_index >= 0 && p.class_index < num_classes, ErrorCode::IndexOutOfRange,
            "proposal class " + std::to_string(p.class_index));
    auto& slot = top[p.video_id];
    if (slot == nullptr || proposal_before(p, *slot)) slot = &p;
  }

  Matrix overlap = Matrix::Zero(num_classes, num_classes);
  for (const auto& [video, p] : top) {
    const auto it = truth.find(video);
    if (it != truth.end() && it->second >= 0 && it->second < num_classes) overlap(p->class_index, it->second) += 1.0;
  }
  const std::vector<int> mapping = max_weight_assignment(overlap);

  std::vector<Proposal> out(proposals.begin(), proposals.end());
  for (auto& p : out) p.class_index = mapping[static_cast<std::size_t>(p.class_index)];
  return out;
}

}  // namespace clip_ae
