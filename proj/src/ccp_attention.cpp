#include "clip_ae/ccp_attention.hpp"

#include <cmath>

namespace clip_ae {

namespace {

Matrix fan_in_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

void check_params(const CcpParams& p) {
  const Index d = p.view_dim();
  require(p.query.rows() == 2 * d && p.key.rows() == 2 * d && p.query.cols() == p.key.cols() && p.key_dim() >= 1,
          ErrorCode::DimensionMismatch, "W_Q " + shape_str(p.query) + ", W_K " + shape_str(p.key));
  require(p.value_vlp.rows() == d && p.value_vlp.cols() == p.value_cbp.cols() && p.value_dim() >= 1,
          ErrorCode::DimensionMismatch, "W_V cbp " + shape_str(p.value_cbp) + ", vlp " + shape_str(p.value_vlp));
}

}  // namespace

CcpParams init_ccp_params(Index view_dim, Index key_dim, Index value_dim, std::mt19937_64& rng) {
  require(view_dim >= 1 && key_dim >= 1 && value_dim >= 1, ErrorCode::InvalidArgument, "CCP dimensions must be >= 1");
  CcpParams p;
  p.query = fan_in_uniform(2 * view_dim, key_dim, rng);
  p.key = fan_in_uniform(2 * view_dim, key_dim, rng);
  p.value_cbp = fan_in_uniform(view_dim, value_dim, rng);
  p.value_vlp = fan_in_uniform(view_dim, value_dim, rng);
  return p;
}

Matrix concat_views(const Matrix& cbp, const Matrix& vlp) {
  require(cbp.rows() == vlp.rows() && cbp.cols() == vlp.cols(), ErrorCode::DimensionMismatch,
          "cbp " + shape_str(cbp) + " vs vlp " + shape_str(vlp));
  Matrix joint(cbp.rows(), 2 * cbp.cols());
  joint << cbp, vlp;
  return joint;
}

Matrix collaborative_scores(const Matrix& joint, const CcpParams& params) {
  check_params(params);
  require(joint.cols() == params.query.rows(), ErrorCode::DimensionMismatch,
          "joint features " + shape_str(joint) + " vs W_Q " + shape_str(params.query));
  const Matrix q = joint * params.query;
  const Matrix k = joint * params.key;
  return row_softmax(q * k.transpose() / std::sqrt(static_cast<double>(params.key_dim())));
}

Matrix collaborative_attention(const Matrix& joint, const Matrix& view, const Matrix& value_weight,
                               const CcpParams& params) {
  require(view.rows() == joint.rows() && view.cols() == value_weight.rows(), ErrorCode::DimensionMismatch,
          "view " + shape_str(view) + " vs W_V " + shape_str(value_weight));
  return collaborative_scores(joint, params) * (view * value_weight);
}

CcpResult ccp_forward(const Matrix& cbp, const Matrix& vlp, const CcpParams& params) {
  check_params(params);
  CcpResult r;
  r.joint = concat_views(cbp, vlp);
  require(cbp.cols() == params.view_dim(), ErrorCode::DimensionMismatch,
          "views have d=" + std::to_string(cbp.cols()) + " but CCP expects " + std::to_string(params.view_dim()));
  r.query = r.joint * params.query;
  r.key = r.joint * params.key;
  r.attention = row_softmax(r.query * r.key.transpose() / std::sqrt(static_cast<double>(params.key_dim())));
  r.value_cbp = cbp * params.value_cbp;
  r.value_vlp = vlp * params.value_vlp;
  r.z_cbp = r.attention * r.value_cbp;
  r.z_vlp = r.attention * r.value_vlp;
  return r;
}

CcpParams ccp_backward(const CcpResult& fwd, const Matrix& cbp, const Matrix& vlp, const CcpParams& params,
                       const Matrix& grad_z_cbp, const Matrix& grad_z_vlp) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.key_dim()));
  CcpParams g;
  g.value_cbp = cbp.transpose() * (fwd.attention.transpose() * grad_z_cbp);
  g.value_vlp = vlp.transpose() * (fwd.attention.transpose() * grad_z_vlp);

  const Matrix grad_attention = grad_z_cbp * fwd.value_cbp.transpose() + grad_z_vlp * fwd.value_vlp.transpose();
  const Matrix grad_scores = row_softmax_backward(fwd.attention, grad_attention) * scale;
  g.query = fwd.joint.transpose() * (grad_scores * fwd.key);
  g.key = fwd.joint.transpose() * (grad_scores.transpose() * fwd.query);
  return g;
}

}  // namespace clip_ae
