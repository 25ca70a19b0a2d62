#pragma once

#include "clip_ae/common.hpp"

#include <random>

namespace clip_ae {

// Cross-view collaboration between the classification-pretrained (CBP) and
// vision-language-pretrained (VLP) views. Segment-major throughout.

struct CcpParams {
  Matrix query;      // 2d x d_k
  Matrix key;        // 2d x d_k
  Matrix value_cbp;  // d x d_v
  Matrix value_vlp;  // d x d_v

  Index view_dim() const { return value_cbp.rows(); }
  Index key_dim() const { return query.cols(); }
  Index value_dim() const { return value_cbp.cols(); }
};

/// Fan-in uniform init for every projection.
CcpParams init_ccp_params(Index view_dim, Index key_dim, Index value_dim, std::mt19937_64& rng);

/// M = [X_cbp | X_vlp] along the feature axis: columns [0, d) are CBP.
Matrix concat_views(const Matrix& cbp, const Matrix& vlp);

/// softmax(M W_Q (M W_K)^T / sqrt(d_k)), row-stochastic T x T. Shared by both views.
Matrix collaborative_scores(const Matrix& joint, const CcpParams& params);

/// Z = softmax(Q K^T / sqrt(d_k)) (X_view W_V).
Matrix collaborative_attention(const Matrix& joint, const Matrix& view, const Matrix& value_weight,
                               const CcpParams& params);

struct CcpResult {
  Matrix joint;      // M
  Matrix query;      // Q = M W_Q
  Matrix key;        // K = M W_K
  Matrix attention;  // row softmax of Q K^T / sqrt(d_k)
  Matrix value_cbp;  // V_cbp
  Matrix value_vlp;
  Matrix z_cbp;
  Matrix z_vlp;
};

CcpResult ccp_forward(const Matrix& cbp, const Matrix& vlp, const CcpParams& params);

/// Parameter gradients for given dL/dZ_cbp and dL/dZ_vlp. The views are raw
/// extractor features, so no input gradient is produced.
CcpParams ccp_backward(const CcpResult& fwd, const Matrix& cbp, const Matrix& vlp, const CcpParams& params,
                       const Matrix& grad_z_cbp, const Matrix& grad_z_vlp);

}  // namespace clip_ae
