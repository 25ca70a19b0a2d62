#include "clip_ae/model.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace clip_ae {

void ModelConfig::validate() const {
  require(audio_dim >= 1 && cbp_dim >= 1 && vlp_dim >= 1, ErrorCode::InvalidArgument, "input dims must be >= 1");
  require(num_classes >= 2, ErrorCode::InvalidArgument, "num_classes must be >= 2");
  require(fused_dim >= 1, ErrorCode::InvalidArgument, "fused_dim must be >= 1");
  require(stages >= 1, ErrorCode::InvalidArgument, "stages must be >= 1");
  require(key_dim >= 0 && value_dim >= 0, ErrorCode::InvalidArgument, "key_dim/value_dim must be >= 0");
  require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  if (ccp_enabled)
    require(cbp_dim == vlp_dim, ErrorCode::DimensionMismatch,
            "CCP concatenates equal-width views; cbp d=" + std::to_string(cbp_dim) +
                ", vlp d=" + std::to_string(vlp_dim));
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.fusion = init_fusion_params(config.audio_dim, config.cbp_dim, config.fused_dim, config.stages,
                                config.share_weights, config.encoder_tanh, rng);
  p.ccp = init_ccp_params(config.cbp_dim, config.resolved_key_dim(), config.resolved_value_dim(), rng);
  p.head = init_affine(config.head_input_dim(), config.num_classes, rng);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

namespace {

struct TensorRef {
  double* data;
  Index size;
};

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> out;
  for_each_tensor(p, [&](const std::string&, auto& t) { out.push_back({t.data(), t.size()}); });
  return out;
}

void accumulate(ModelParams& dst, const ModelParams& src, double scale) {
  auto d = tensor_refs(dst);
  auto s = tensor_refs(const_cast<ModelParams&>(src));
  for (std::size_t k = 0; k < d.size(); ++k)
    for (Index i = 0; i < d[k].size; ++i) d[k].data[i] += scale * s[k].data[i];
}

}  // namespace

VideoForward forward_video(const ModelParams& params, const ModelConfig& config, const VideoFeatures& video) {
  require(video.audio.rows() == video.cbp.rows() && video.vlp.rows() == video.cbp.rows(), ErrorCode::LengthMismatch,
          video.video_id);
  VideoForward fwd;
  const bool tanh_enc = params.fusion.encoder_tanh;
  fwd.encoded_cbp = encode_modality(video.cbp, params.fusion.enc_cbp, tanh_enc);
  if (config.caf_enabled) {
    fwd.encoded_audio = encode_modality(video.audio, params.fusion.enc_audio, tanh_enc);
    fwd.fusion = caf_forward(fwd.encoded_audio, fwd.encoded_cbp, params.fusion);
    fwd.stream_cbp = fwd.fusion->cbp;
  } else {
    fwd.stream_cbp = fwd.encoded_cbp;
  }

  const Index length = video.length();
  if (config.ccp_enabled) {
    fwd.ccp = ccp_forward(video.cbp, video.vlp, params.ccp);
    fwd.head_input.resize(length, config.head_input_dim());
    fwd.head_input << fwd.stream_cbp.transpose(), fwd.ccp->z_cbp, fwd.ccp->z_vlp;
  } else {
    fwd.head_input = fwd.stream_cbp.transpose();
  }
  require(fwd.head_input.cols() == params.head.in_dim(), ErrorCode::DimensionMismatch,
          "head expects " + std::to_string(params.head.in_dim()) + " inputs, got " +
              std::to_string(fwd.head_input.cols()));
  fwd.logits = fwd.head_input * params.head.weight.transpose();
  fwd.logits.rowwise() += params.head.bias.transpose();
  return fwd;
}

Vector video_embedding(const VideoForward& fwd) { return fwd.stream_cbp.rowwise().mean(); }

Matrix segment_probabilities(const VideoForward& fwd) { return row_softmax(fwd.logits); }

MemoryBanks init_banks(Index size, Index dim, double momentum, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MemoryBank vlp(size, dim, momentum, "vlp", rng);
  MemoryBank cbp(size, dim, momentum, "cbp", rng);
  return MemoryBanks{std::move(vlp), std::move(cbp)};
}

VideoObjective video_objective(const ModelParams& params, const ModelConfig& config, const VideoFeatures& video,
                               const MemoryBanks* banks, Index bank_index, int label, ModelParams* grad) {
  require(label < config.num_classes, ErrorCode::IndexOutOfRange, "label " + std::to_string(label));
  const VideoForward fwd = forward_video(params, config, video);
  const Index length = video.length();
  const Index fused = config.fused_dim;

  VideoObjective out;
  std::optional<DecorrelationResult> decor;
  if (config.caf_enabled) {
    decor = decorrelation_loss_with_grad(fwd.fusion->audio, fwd.fusion->cbp, config.decor_normalize);
  }
  std::optional<ViewInstanceLoss> inst_vlp, inst_cbp;
  if (config.ccp_enabled && banks != nullptr) {
    inst_vlp = view_instance_loss(avg_pool(fwd.ccp->z_vlp), bank_index, banks->vlp, config.tau);
    inst_cbp = view_instance_loss(avg_pool(fwd.ccp->z_cbp), bank_index, banks->cbp, config.tau);
    out.z_vlp = inst_vlp->normalized;
    out.z_cbp = inst_cbp->normalized;
  }
  out.ssl = total_loss(decor ? decor->loss : 0.0, inst_vlp ? inst_vlp->loss + inst_cbp->loss : 0.0);

  Vector class_probs;
  if (label >= 0) {
    const Vector video_logits = fwd.logits.colwise().mean().transpose();
    const double peak = video_logits.maxCoeff();
    const Vector shifted = (video_logits.array() - peak).exp().matrix();
    const double partition = shifted.sum();
    out.cls = std::log(partition) - (video_logits(label) - peak);
    class_probs = shifted / partition;
  }
  out.objective = config.decor_weight * out.ssl.de_cor + config.ins_dis_weight * out.ssl.ins_dis +
                  config.cls_weight * out.cls;
  if (grad == nullptr) return out;

  // Head.
  Matrix grad_head_input = Matrix::Zero(length, fwd.head_input.cols());
  if (label >= 0) {
    Vector grad_video_logits = class_probs;
    grad_video_logits(label) -= 1.0;
    grad_video_logits *= config.cls_weight / static_cast<double>(length);
    const Matrix grad_logits = Vector::Ones(length) * grad_video_logits.transpose();
    grad->head.weight += grad_logits.transpose() * fwd.head_input;
    grad->head.bias += grad_logits.colwise().sum().transpose();
    grad_head_input = grad_logits * params.head.weight;
  }
  Matrix grad_stream = grad_head_input.leftCols(fused).transpose();

  // CCP.
  if (config.ccp_enabled) {
    const Index value_dim = config.resolved_value_dim();
    Matrix grad_z_cbp = grad_head_input.middleCols(fused, value_dim);
    Matrix grad_z_vlp = grad_head_input.middleCols(fused + value_dim, value_dim);
    if (inst_vlp) {
      const double per_row = config.ins_dis_weight / static_cast<double>(length);
      grad_z_vlp.rowwise() += per_row * inst_vlp->grad_z.transpose();
      grad_z_cbp.rowwise() += per_row * inst_cbp->grad_z.transpose();
    }
    const CcpParams g = ccp_backward(*fwd.ccp, video.cbp, video.vlp, params.ccp, grad_z_cbp, grad_z_vlp);
    grad->ccp.query += g.query;
    grad->ccp.key += g.key;
    grad->ccp.value_cbp += g.value_cbp;
    grad->ccp.value_vlp += g.value_vlp;
  }

  // CAF and encoders. With CAF off the encoded CBP stream is a fixed projection.
  if (config.caf_enabled) {
    Matrix grad_audio = config.decor_weight * decor->grad_audio;
    grad_stream += config.decor_weight * decor->grad_cbp;
    const FusionGradients g = caf_backward(fwd.fusion->state, params.fusion, grad_audio, grad_stream);
    for (std::size_t i = 0; i < g.weights.size(); ++i) grad->fusion.weights[i] += g.weights[i];
    const bool tanh_enc = params.fusion.encoder_tanh;
    const AffineMap ga = encode_modality_backward(video.audio, fwd.encoded_audio, g.input_audio, tanh_enc);
    const AffineMap gc = encode_modality_backward(video.cbp, fwd.encoded_cbp, g.input_cbp, tanh_enc);
    grad->fusion.enc_audio.weight += ga.weight;
    grad->fusion.enc_audio.bias += ga.bias;
    grad->fusion.enc_cbp.weight += gc.weight;
    grad->fusion.enc_cbp.bias += gc.bias;
  }
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            return;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

BatchObjective batch_objective(const ModelParams& params, const ModelConfig& config,
                               std::span<const VideoFeatures> videos, std::span<const Index> indices,
                               std::span<const int> labels, const MemoryBanks* banks, bool with_grad, int threads) {
  require(!indices.empty(), ErrorCode::InvalidArgument, "empty batch");
  require(labels.empty() || labels.size() == videos.size(), ErrorCode::DimensionMismatch,
          "labels must cover every video");
  const std::size_t n = indices.size();
  std::vector<VideoObjective> results(n);
  std::vector<std::optional<ModelParams>> grads(n);

  parallel_for(n, threads, [&](std::size_t k) {
    const Index idx = indices[k];
    require(idx >= 0 && static_cast<std::size_t>(idx) < videos.size(), ErrorCode::IndexOutOfRange,
            "video index " + std::to_string(idx));
    const int label = labels.empty() ? -1 : labels[static_cast<std::size_t>(idx)];
    ModelParams* g = nullptr;
    if (with_grad) {
      grads[k] = zeros_like(params);
      g = &*grads[k];
    }
    results[k] = video_objective(params, config, videos[static_cast<std::size_t>(idx)], banks, idx, label, g);
  });

  BatchObjective out;
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<LossBreakdown> parts;
  for (std::size_t k = 0; k < n; ++k) {
    parts.push_back(results[k].ssl);
    out.cls += results[k].cls;
    out.objective += results[k].objective;
  }
  out.ssl = mean_loss(parts);
  out.cls *= scale;
  out.objective *= scale;
  if (with_grad) {
    out.grad = zeros_like(params);
    for (std::size_t k = 0; k < n; ++k) accumulate(*out.grad, *grads[k], scale);
  }
  out.per_video = std::move(results);
  return out;
}

}  // namespace clip_ae
