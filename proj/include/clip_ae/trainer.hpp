#pragma once

#include "clip_ae/clustering.hpp"
#include "clip_ae/feature_io.hpp"
#include "clip_ae/model.hpp"

#include <cstdint>
#include <vector>

namespace clip_ae {

struct TrainConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1e-2;
  double momentum = 0.0;  // heavy-ball momentum; 0 = plain SGD
  int epochs = 20;
  int batch_size = 8;
  int num_clusters = 0;  // 0 = dataset's num_classes
  int refresh_period = 5;
  double bank_momentum = 0.5;
  double divergence_limit = 1e6;
  int threads = 1;
  ModelConfig model;  // input dims and num_classes are filled from the dataset

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown ssl;  // mean per-video L_self over the epoch
  double cls = 0.0;
  double objective = 0.0;
};

struct LabelRecord {
  int epoch = 0;
  PseudoLabels labels;
};

struct TrainResult {
  ModelConfig model_config;
  ModelParams params;
  MemoryBanks banks;
  std::vector<EpochRecord> loss_history;
  std::vector<LabelRecord> label_history;
  PseudoLabels final_labels;  // clustering of the trained embeddings
};

/// Copies input dims and cluster count from the dataset into the model config.
ModelConfig resolve_model_config(const TrainConfig& config, const Dataset& dataset);

/// Pooled CBP-stream embedding of every video, one row each. Pseudo-labels
/// cluster these rows after L2 normalization.
Matrix pooled_embeddings(const ModelParams& params, const ModelConfig& config, std::span<const VideoFeatures> videos,
                         int threads = 1);

/// Alternates pseudo-label refresh (every refresh_period epochs, starting at
/// epoch 0) with mini-batch SGD on the weighted L_self + cls objective. Memory
/// banks are updated after each batch's gradient step from that batch's
/// pooled features.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Generator class of each video (its first ground-truth segment); -1 when absent.
std::vector<int> video_classes(const Dataset& dataset);

}  // namespace clip_ae
