#pragma once

#include "clip_ae/caf_fusion.hpp"
#include "clip_ae/ccp_attention.hpp"
#include "clip_ae/feature_io.hpp"
#include "clip_ae/ssl_losses.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clip_ae {

struct ModelConfig {
  Index audio_dim = 0;
  Index cbp_dim = 0;
  Index vlp_dim = 0;
  int num_classes = 2;

  bool caf_enabled = true;
  bool ccp_enabled = true;

  Index fused_dim = 16;
  int stages = 2;
  bool share_weights = true;
  bool encoder_tanh = false;

  Index key_dim = 0;    // 0 = view dim
  Index value_dim = 0;  // 0 = view dim

  bool decor_normalize = true;
  double tau = 1.0;
  double decor_weight = 1.0;
  double ins_dis_weight = 1.0;
  double cls_weight = 1.0;

  Index resolved_key_dim() const { return key_dim > 0 ? key_dim : cbp_dim; }
  Index resolved_value_dim() const { return value_dim > 0 ? value_dim : cbp_dim; }
  /// Per-segment head input: fused CBP stream, then Z_cbp and Z_vlp when CCP is on.
  Index head_input_dim() const { return fused_dim + (ccp_enabled ? 2 * resolved_value_dim() : 0); }

  void validate() const;
};

struct ModelParams {
  FusionParams fusion;
  CcpParams ccp;
  AffineMap head;  // head_input_dim -> num_classes
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Same shapes as `params`, all zeros.
ModelParams zeros_like(const ModelParams& params);

/// Visits every learnable tensor in a fixed order with a stable name.
template <class P, class F>
void for_each_tensor(P& params, F&& fn) {
  fn(std::string("enc_audio.weight"), params.fusion.enc_audio.weight);
  fn(std::string("enc_audio.bias"), params.fusion.enc_audio.bias);
  fn(std::string("enc_cbp.weight"), params.fusion.enc_cbp.weight);
  fn(std::string("enc_cbp.bias"), params.fusion.enc_cbp.bias);
  for (std::size_t i = 0; i < params.fusion.weights.size(); ++i)
    fn(params.fusion.weights.size() == 1 ? std::string("caf.W") : "caf.W." + std::to_string(i + 1),
       params.fusion.weights[i]);
  fn(std::string("ccp.query"), params.ccp.query);
  fn(std::string("ccp.key"), params.ccp.key);
  fn(std::string("ccp.value_cbp"), params.ccp.value_cbp);
  fn(std::string("ccp.value_vlp"), params.ccp.value_vlp);
  fn(std::string("head.weight"), params.head.weight);
  fn(std::string("head.bias"), params.head.bias);
}

struct VideoForward {
  Matrix encoded_audio;  // d_x x L
  Matrix encoded_cbp;
  std::optional<FusionResult> fusion;
  Matrix stream_cbp;  // fused CBP when CAF is on, encoded CBP otherwise; d_x x L
  std::optional<CcpResult> ccp;
  Matrix head_input;  // L x head_input_dim
  Matrix logits;      // L x K
};

VideoForward forward_video(const ModelParams& params, const ModelConfig& config, const VideoFeatures& video);

/// Average-pooled CBP stream, used for pseudo-label clustering.
Vector video_embedding(const VideoForward& fwd);

/// Row softmax of the per-segment logits.
Matrix segment_probabilities(const VideoForward& fwd);

struct MemoryBanks {
  MemoryBank vlp;
  MemoryBank cbp;
};

MemoryBanks init_banks(Index size, Index dim, double momentum, std::uint64_t seed);

struct VideoObjective {
  LossBreakdown ssl;
  double cls = 0.0;
  double objective = 0.0;  // decor_w * de_cor + ins_w * ins_dis + cls_w * cls
  Vector z_vlp;            // normalized pooled CCP features, for the bank update
  Vector z_cbp;
};

/// Forward (and optionally backward) for one video. `label < 0` drops the
/// classification term. `banks == nullptr` drops the instance term. When
/// `grad` is given, this video's gradient is accumulated into it.
VideoObjective video_objective(const ModelParams& params, const ModelConfig& config, const VideoFeatures& video,
                               const MemoryBanks* banks, Index bank_index, int label, ModelParams* grad);

struct BatchObjective {
  LossBreakdown ssl;  // mean over the batch
  double cls = 0.0;
  double objective = 0.0;
  std::vector<VideoObjective> per_video;
  std::optional<ModelParams> grad;  // mean gradient
};

/// Mean objective over `indices` of `videos`. Bank row i belongs to videos[i].
/// Per-video work may run on `threads` workers; reduction is in index order.
BatchObjective batch_objective(const ModelParams& params, const ModelConfig& config,
                               std::span<const VideoFeatures> videos, std::span<const Index> indices,
                               std::span<const int> labels, const MemoryBanks* banks, bool with_grad,
                               int threads = 1);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace clip_ae
