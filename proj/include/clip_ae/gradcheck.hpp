#pragma once

#include "clip_ae/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clip_ae {

struct TensorCheck {
  std::string name;
  Index entries = 0;
  Index checked = 0;  // entries with |analytic| above the floor
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  Index checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double grad_floor = 1e-8;
  int threads = 1;
};

/// Compares the analytic batch gradient against central finite differences
/// of the batch objective, entry by entry. Relative error is
/// |a - n| / max(|a|, |n|) over entries with |a| > grad_floor.
GradCheckReport gradient_check(const ModelParams& params, const ModelConfig& config,
                               std::span<const VideoFeatures> videos, std::span<const int> labels,
                               const MemoryBanks* banks, const GradCheckOptions& options = {});

/// Seeded tiny problem: 2 videos with T in [4, 6] and d in [6, 8], two fusion
/// stages, K = 3, both modules on, random banks and labels.
struct GradCheckProblem {
  ModelConfig config;
  ModelParams params;
  std::vector<VideoFeatures> videos;
  std::vector<int> labels;
  MemoryBanks banks;
};

GradCheckProblem make_gradcheck_problem(std::uint64_t seed);

}  // namespace clip_ae
