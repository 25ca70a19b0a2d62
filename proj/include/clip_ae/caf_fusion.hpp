#pragma once

#include "clip_ae/common.hpp"

#include <random>
#include <string_view>
#include <vector>

namespace clip_ae {

/// y = weight * x + bias, applied per segment. weight is out x in.
struct AffineMap {
  Matrix weight;
  Vector bias;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

/// Fan-in uniform init in [-1/sqrt(in), 1/sqrt(in)], zero bias.
AffineMap init_affine(Index in_dim, Index out_dim, std::mt19937_64& rng);

// Audio-visual cross-attention fusion. Internally everything is feature-major
// (d_x x L, one column per segment); callers hand in segment-major feature
// files and encode_modality() does the transpose.

struct FusionParams {
  AffineMap enc_audio;
  AffineMap enc_cbp;
  std::vector<Matrix> weights;  // one d_x x d_x matrix if shared, else one per stage
  int stages = 2;
  bool share_weights = true;
  bool encoder_tanh = false;

  Index fused_dim() const { return enc_cbp.out_dim(); }
  const Matrix& stage_weight(int stage) const { return weights[share_weights ? 0 : static_cast<std::size_t>(stage - 1)]; }
  Matrix& stage_weight(int stage) { return weights[share_weights ? 0 : static_cast<std::size_t>(stage - 1)]; }
};

/// Encoders get fan-in init; cross-correlation weights start at identity.
FusionParams init_fusion_params(Index audio_dim, Index cbp_dim, Index fused_dim, int stages, bool share_weights,
                                bool encoder_tanh, std::mt19937_64& rng);

/// Returns a d_x x L matrix whose column l is enc(raw.row(l)).
Matrix encode_modality(const Matrix& raw, const AffineMap& enc, bool apply_tanh = false);

/// Gradient of encode_modality w.r.t. the encoder, given dL/d(output).
AffineMap encode_modality_backward(const Matrix& raw, const Matrix& encoded, const Matrix& grad_encoded,
                                   bool apply_tanh);

Matrix normalize_columns(const Matrix& x, std::string_view modality);

/// Lambda = normalize(X_audio)^T W normalize(X_cbp). Lambda(i, j) correlates audio
/// segment i with cbp segment j.
Matrix cross_correlation(const Matrix& audio, const Matrix& cbp, const Matrix& weight);

struct AttentionPair {
  Matrix audio;  // column softmax of Lambda
  Matrix cbp;    // column softmax of Lambda^T
};

AttentionPair attention_weights(const Matrix& lambda);

/// X * A: column l is a convex combination of X's columns weighted by A(:, l).
Matrix apply_attention(const Matrix& x, const Matrix& attention);

struct FusionStage {
  Matrix norm_audio;  // column-normalized inputs of the stage
  Matrix norm_cbp;
  Vector col_norms_audio;
  Vector col_norms_cbp;
  Matrix lambda;
  AttentionPair attention;
  Matrix attended_audio;  // X~^(t)
  Matrix attended_cbp;
};

struct FusionState {
  std::vector<Matrix> fused_audio;  // [0] = encoded input, [t] = stage t output
  std::vector<Matrix> fused_cbp;
  std::vector<FusionStage> stages;  // stages[t - 1] caches stage t
};

struct FusionResult {
  Matrix audio;
  Matrix cbp;
  FusionState state;
};

/// Multi-stage dense cross-attention:
///   F^(0) = X,  F^(t) = tanh(sum_{i<t} F^(i) + F^(t-1) A^(t)),
/// with A^(t) recomputed from F^(t-1) of both modalities at every stage.
FusionResult caf_forward(const Matrix& audio, const Matrix& cbp, const FusionParams& params);

struct FusionGradients {
  std::vector<Matrix> weights;  // same layout as FusionParams::weights
  Matrix input_audio;           // dL/dX_audio (encoded features)
  Matrix input_cbp;
};

FusionGradients caf_backward(const FusionState& state, const FusionParams& params, const Matrix& grad_audio,
                             const Matrix& grad_cbp);

}  // namespace clip_ae
