#include "clip_ae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace clip_ae {

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument, "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
  require(epochs >= 0, ErrorCode::InvalidArgument, "epochs must be >= 0");
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  require(num_clusters == 0 || num_clusters >= 2, ErrorCode::InvalidArgument, "num_clusters must be 0 or >= 2");
  require(refresh_period >= 1, ErrorCode::InvalidArgument, "refresh_period must be >= 1");
  require(bank_momentum >= 0.0 && bank_momentum <= 1.0, ErrorCode::InvalidArgument, "bank_momentum must be in [0, 1]");
  require(threads >= 1, ErrorCode::InvalidArgument, "threads must be >= 1");
}

ModelConfig resolve_model_config(const TrainConfig& config, const Dataset& dataset) {
  require(!dataset.videos.empty(), ErrorCode::TooFewVideos, "dataset has no videos");
  ModelConfig m = config.model;
  const VideoFeatures& first = dataset.videos.front();
  m.audio_dim = first.audio.cols();
  m.cbp_dim = first.cbp.cols();
  m.vlp_dim = first.vlp.cols();
  m.num_classes = config.num_clusters > 0 ? config.num_clusters : dataset.num_classes();
  for (const auto& v : dataset.videos)
    require(v.audio.cols() == m.audio_dim && v.cbp.cols() == m.cbp_dim && v.vlp.cols() == m.vlp_dim,
            ErrorCode::DimensionMismatch, "video '" + v.video_id + "' feature dims differ from the first video");
  m.validate();
  return m;
}

Matrix pooled_embeddings(const ModelParams& params, const ModelConfig& config, std::span<const VideoFeatures> videos,
                         int threads) {
  Matrix pooled(static_cast<Index>(videos.size()), config.fused_dim);
  parallel_for(videos.size(), threads, [&](std::size_t i) {
    pooled.row(static_cast<Index>(i)) = video_embedding(forward_video(params, config, videos[i])).transpose();
  });
  return pooled;
}

std::vector<int> video_classes(const Dataset& dataset) {
  std::vector<int> out;
  for (const auto& e : dataset.manifest.entries)
    out.push_back(e.ground_truth && !e.ground_truth->empty() ? e.ground_truth->front().class_index : -1);
  return out;
}

namespace {

PseudoLabels refresh_labels(const ModelParams& params, const ModelConfig& config, const Dataset& dataset,
                            std::uint64_t seed, const PseudoLabels* previous, int threads) {
  // Directions carry the class; magnitudes track how much of the video is action.
  Matrix pooled = pooled_embeddings(params, config, dataset.videos, threads);
  for (Index i = 0; i < pooled.rows(); ++i) {
    const double norm = pooled.row(i).norm();
    if (norm > 0.0) pooled.row(i) /= norm;
  }
  PseudoLabels labels = cluster_pseudo_labels(pooled, config.num_classes, seed);
  // Keep cluster ids stable across refreshes so the head's classes keep their meaning.
  if (previous != nullptr) labels.labels = align_labels(labels.labels, previous->labels, config.num_classes);
  return labels;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.model_config = resolve_model_config(config, dataset);
  const ModelConfig& mc = result.model_config;
  const auto n = static_cast<Index>(dataset.videos.size());
  require(n >= mc.num_classes, ErrorCode::TooFewVideos,
          std::to_string(n) + " videos for " + std::to_string(mc.num_classes) + " clusters");

  result.params = init_model(mc, config.seed);
  result.banks = init_banks(n, mc.resolved_value_dim(), config.bank_momentum, config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 order_rng(config.seed + 1);
  ModelParams velocity = zeros_like(result.params);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  PseudoLabels current;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch % config.refresh_period == 0) {
      current = refresh_labels(result.params, mc, dataset, config.seed + static_cast<std::uint64_t>(epoch),
                               result.label_history.empty() ? nullptr : &current, config.threads);
      result.label_history.push_back({epoch, current});
    }
    std::shuffle(order.begin(), order.end(), order_rng);

    EpochRecord record;
    record.epoch = epoch;
    double de_cor = 0.0, ins_dis = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> batch(order.data() + start, stop - start);
      BatchObjective bo = batch_objective(result.params, mc, dataset.videos, batch, current.labels, &result.banks,
                                          true, config.threads);
      require(std::isfinite(bo.objective) && bo.objective <= config.divergence_limit, ErrorCode::DivergenceDetected,
              "objective " + std::to_string(bo.objective) + " at epoch " + std::to_string(epoch));

      const auto weight = static_cast<double>(batch.size());
      de_cor += weight * bo.ssl.de_cor;
      ins_dis += weight * bo.ssl.ins_dis;
      record.cls += weight * bo.cls;
      record.objective += weight * bo.objective;

      // SGD step. Disabled modules have exactly-zero gradients and stay put.
      std::vector<double*> vel;
      for_each_tensor(velocity, [&](const std::string&, auto& t) { vel.push_back(t.data()); });
      std::vector<const double*> grads;
      for_each_tensor(*bo.grad, [&](const std::string& name, const auto& t) {
        for (Index i = 0; i < t.size(); ++i)
          require(std::isfinite(t.data()[i]), ErrorCode::NonFiniteGradient, name);
        grads.push_back(t.data());
      });
      std::size_t k = 0;
      for_each_tensor(result.params, [&](const std::string&, auto& t) {
        double* v = vel[k];
        const double* g = grads[k];
        ++k;
        for (Index i = 0; i < t.size(); ++i) {
          v[i] = config.momentum * v[i] + g[i];
          t.data()[i] -= config.learning_rate * v[i];
        }
      });

      if (mc.ccp_enabled) {
        for (std::size_t j = 0; j < batch.size(); ++j) {
          result.banks.vlp.update(batch[j], bo.per_video[j].z_vlp);
          result.banks.cbp.update(batch[j], bo.per_video[j].z_cbp);
        }
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    record.ssl = total_loss(de_cor * inv, ins_dis * inv);
    record.cls *= inv;
    record.objective *= inv;
    result.loss_history.push_back(record);
  }

  result.final_labels =
      refresh_labels(result.params, mc, dataset, config.seed + static_cast<std::uint64_t>(config.epochs),
                     result.label_history.empty() ? nullptr : &current, config.threads);
  return result;
}

}  // namespace clip_ae
