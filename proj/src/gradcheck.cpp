#include "clip_ae/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace clip_ae {

GradCheckReport gradient_check(const ModelParams& params, const ModelConfig& config,
                               std::span<const VideoFeatures> videos, std::span<const int> labels,
                               const MemoryBanks* banks, const GradCheckOptions& options) {
  std::vector<Index> indices(videos.size());
  std::iota(indices.begin(), indices.end(), Index{0});

  const BatchObjective base = batch_objective(params, config, videos, indices, labels, banks, true, options.threads);
  ModelParams analytic = *base.grad;

  std::vector<std::pair<std::string, const double*>> grads;
  for_each_tensor(analytic, [&](const std::string& name, const auto& t) {
    for (Index i = 0; i < t.size(); ++i)
      require(std::isfinite(t.data()[i]), ErrorCode::NonFiniteGradient, name + "[" + std::to_string(i) + "]");
    grads.emplace_back(name, t.data());
  });

  ModelParams probe = params;
  GradCheckReport report;
  std::size_t k = 0;
  for_each_tensor(probe, [&](const std::string& name, auto& t) {
    TensorCheck check{name, t.size(), 0, 0.0, 0.0};
    const double* g = grads[k++].second;
    for (Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + options.step;
      const double plus = batch_objective(probe, config, videos, indices, labels, banks, false, options.threads).objective;
      t.data()[i] = saved - options.step;
      const double minus = batch_objective(probe, config, videos, indices, labels, banks, false, options.threads).objective;
      t.data()[i] = saved;

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::abs(g[i] - numeric);
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      if (std::abs(g[i]) > options.grad_floor) {
        ++check.checked;
        check.max_rel_error = std::max(check.max_rel_error, abs_err / std::max(std::abs(g[i]), std::abs(numeric)));
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.checked += check.checked;
    report.tensors.push_back(std::move(check));
  });
  return report;
}

GradCheckProblem make_gradcheck_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length_dist(4, 6);
  std::uniform_int_distribution<int> dim_dist(6, 8);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
  };

  GradCheckProblem p;
  p.config.audio_dim = dim_dist(rng);
  p.config.cbp_dim = dim_dist(rng);
  p.config.vlp_dim = p.config.cbp_dim;
  p.config.fused_dim = dim_dist(rng);
  p.config.num_classes = 3;
  p.config.stages = 2;

  for (int v = 0; v < 2; ++v) {
    const Index length = length_dist(rng);
    VideoFeatures vf;
    vf.video_id = "grad_" + std::to_string(v);
    vf.audio = gaussian(length, p.config.audio_dim);
    vf.cbp = gaussian(length, p.config.cbp_dim);
    vf.vlp = gaussian(length, p.config.vlp_dim);
    p.videos.push_back(std::move(vf));
    p.labels.push_back(std::uniform_int_distribution<int>(0, p.config.num_classes - 1)(rng));
  }

  p.params = init_model(p.config, rng());
  // Move the cross-correlation weights and head bias off their structured init.
  for (auto& w : p.params.fusion.weights) w += 0.3 * gaussian(w.rows(), w.cols());
  for (Index i = 0; i < p.params.head.bias.size(); ++i) p.params.head.bias(i) = 0.1 * normal(rng);
  for (Index i = 0; i < p.params.fusion.enc_cbp.bias.size(); ++i) p.params.fusion.enc_cbp.bias(i) = 0.1 * normal(rng);
  for (Index i = 0; i < p.params.fusion.enc_audio.bias.size(); ++i)
    p.params.fusion.enc_audio.bias(i) = 0.1 * normal(rng);
  p.banks = init_banks(2, p.config.resolved_value_dim(), 0.5, rng());
  return p;
}

}  // namespace clip_ae
