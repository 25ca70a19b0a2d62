#include "clip_ae/caf_fusion.hpp"

#include <cmath>

namespace clip_ae {

AffineMap init_affine(Index in_dim, Index out_dim, std::mt19937_64& rng) {
  require(in_dim >= 1 && out_dim >= 1, ErrorCode::InvalidArgument, "affine map dimensions must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  AffineMap map{Matrix(out_dim, in_dim), Vector::Zero(out_dim)};
  for (Index r = 0; r < out_dim; ++r)
    for (Index c = 0; c < in_dim; ++c) map.weight(r, c) = dist(rng);
  return map;
}

FusionParams init_fusion_params(Index audio_dim, Index cbp_dim, Index fused_dim, int stages, bool share_weights,
                                bool encoder_tanh, std::mt19937_64& rng) {
  require(stages >= 1, ErrorCode::InvalidArgument, "fusion needs at least one stage");
  FusionParams p;
  p.enc_audio = init_affine(audio_dim, fused_dim, rng);
  p.enc_cbp = init_affine(cbp_dim, fused_dim, rng);
  p.stages = stages;
  p.share_weights = share_weights;
  p.encoder_tanh = encoder_tanh;
  p.weights.assign(share_weights ? 1 : static_cast<std::size_t>(stages), Matrix::Identity(fused_dim, fused_dim));
  return p;
}

Matrix encode_modality(const Matrix& raw, const AffineMap& enc, bool apply_tanh) {
  require(raw.cols() == enc.in_dim(), ErrorCode::DimensionMismatch,
          "features have d=" + std::to_string(raw.cols()) + " but encoder expects " + std::to_string(enc.in_dim()));
  Matrix out = enc.weight * raw.transpose();
  out.colwise() += enc.bias;
  if (apply_tanh) out = out.array().tanh().matrix();
  return out;
}

AffineMap encode_modality_backward(const Matrix& raw, const Matrix& encoded, const Matrix& grad_encoded,
                                   bool apply_tanh) {
  Matrix pre_grad = grad_encoded;
  if (apply_tanh) pre_grad.array() *= 1.0 - encoded.array().square();
  return AffineMap{pre_grad * raw, pre_grad.rowwise().sum()};
}

namespace {

Vector column_norms(const Matrix& x, std::string_view modality) {
  Vector norms = x.colwise().norm().transpose();
  for (Index j = 0; j < norms.size(); ++j)
    require(norms(j) > 0.0, ErrorCode::ZeroNormColumn, std::string(modality) + " column " + std::to_string(j));
  return norms;
}

// d(x / |x|) per column.
Matrix normalize_columns_backward(const Matrix& normalized, const Vector& norms, const Matrix& grad_normalized) {
  Matrix out(normalized.rows(), normalized.cols());
  for (Index j = 0; j < normalized.cols(); ++j) {
    const double radial = normalized.col(j).dot(grad_normalized.col(j));
    out.col(j) = (grad_normalized.col(j) - radial * normalized.col(j)) / norms(j);
  }
  return out;
}

}  // namespace

Matrix normalize_columns(const Matrix& x, std::string_view modality) {
  const Vector norms = column_norms(x, modality);
  return x * norms.cwiseInverse().asDiagonal();
}

Matrix cross_correlation(const Matrix& audio, const Matrix& cbp, const Matrix& weight) {
  require(audio.rows() == cbp.rows() && audio.cols() == cbp.cols(), ErrorCode::DimensionMismatch,
          "audio " + shape_str(audio) + " vs cbp " + shape_str(cbp));
  require(weight.rows() == audio.rows() && weight.cols() == audio.rows(), ErrorCode::DimensionMismatch,
          "cross-correlation weight is " + shape_str(weight));
  return normalize_columns(audio, "audio").transpose() * weight * normalize_columns(cbp, "cbp");
}

AttentionPair attention_weights(const Matrix& lambda) {
  return AttentionPair{column_softmax(lambda), column_softmax(lambda.transpose())};
}

Matrix apply_attention(const Matrix& x, const Matrix& attention) {
  require(x.cols() == attention.rows(), ErrorCode::DimensionMismatch,
          "features " + shape_str(x) + " vs attention " + shape_str(attention));
  return x * attention;
}

FusionResult caf_forward(const Matrix& audio, const Matrix& cbp, const FusionParams& params) {
  require(audio.rows() == cbp.rows() && audio.cols() == cbp.cols(), ErrorCode::DimensionMismatch,
          "audio " + shape_str(audio) + " vs cbp " + shape_str(cbp));
  require(params.stages >= 1, ErrorCode::InvalidArgument, "fusion needs at least one stage");

  FusionState st;
  st.fused_audio.push_back(audio);
  st.fused_cbp.push_back(cbp);
  Matrix dense_audio = audio;  // running sum of all previous stage outputs
  Matrix dense_cbp = cbp;

  for (int t = 1; t <= params.stages; ++t) {
    const Matrix& prev_audio = st.fused_audio.back();
    const Matrix& prev_cbp = st.fused_cbp.back();
    const Matrix& weight = params.stage_weight(t);
    require(weight.rows() == audio.rows() && weight.cols() == audio.rows(), ErrorCode::DimensionMismatch,
            "cross-correlation weight is " + shape_str(weight));

    FusionStage s;
    s.col_norms_audio = column_norms(prev_audio, "audio");
    s.col_norms_cbp = column_norms(prev_cbp, "cbp");
    s.norm_audio = prev_audio * s.col_norms_audio.cwiseInverse().asDiagonal();
    s.norm_cbp = prev_cbp * s.col_norms_cbp.cwiseInverse().asDiagonal();
    s.lambda = s.norm_audio.transpose() * weight * s.norm_cbp;
    s.attention = attention_weights(s.lambda);
    s.attended_audio = prev_audio * s.attention.audio;
    s.attended_cbp = prev_cbp * s.attention.cbp;

    Matrix next_audio = (dense_audio + s.attended_audio).array().tanh().matrix();
    Matrix next_cbp = (dense_cbp + s.attended_cbp).array().tanh().matrix();
    dense_audio += next_audio;
    dense_cbp += next_cbp;
    st.stages.push_back(std::move(s));
    st.fused_audio.push_back(std::move(next_audio));
    st.fused_cbp.push_back(std::move(next_cbp));
  }

  FusionResult r{st.fused_audio.back(), st.fused_cbp.back(), {}};
  r.state = std::move(st);
  return r;
}

FusionGradients caf_backward(const FusionState& state, const FusionParams& params, const Matrix& grad_audio,
                             const Matrix& grad_cbp) {
  const int stages = static_cast<int>(state.stages.size());
  const Index dim = state.fused_audio[0].rows();

  std::vector<Matrix> g_audio(static_cast<std::size_t>(stages + 1), Matrix::Zero(dim, state.fused_audio[0].cols()));
  std::vector<Matrix> g_cbp = g_audio;
  g_audio.back() = grad_audio;
  g_cbp.back() = grad_cbp;

  FusionGradients out;
  for (const auto& w : params.weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));

  for (int t = stages; t >= 1; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const FusionStage& s = state.stages[ti - 1];
    const Matrix& prev_audio = state.fused_audio[ti - 1];
    const Matrix& prev_cbp = state.fused_cbp[ti - 1];

    const Matrix pre_audio =
        g_audio[ti].cwiseProduct((1.0 - state.fused_audio[ti].array().square()).matrix());
    const Matrix pre_cbp = g_cbp[ti].cwiseProduct((1.0 - state.fused_cbp[ti].array().square()).matrix());
    for (std::size_t i = 0; i < ti; ++i) {
      g_audio[i] += pre_audio;
      g_cbp[i] += pre_cbp;
    }

    // attended = prev * A
    g_audio[ti - 1] += pre_audio * s.attention.audio.transpose();
    g_cbp[ti - 1] += pre_cbp * s.attention.cbp.transpose();
    const Matrix grad_att_audio = prev_audio.transpose() * pre_audio;
    const Matrix grad_att_cbp = prev_cbp.transpose() * pre_cbp;

    const Matrix grad_lambda = column_softmax_backward(s.attention.audio, grad_att_audio) +
                               column_softmax_backward(s.attention.cbp, grad_att_cbp).transpose();

    const Matrix& weight = params.stage_weight(t);
    const Matrix grad_norm_audio = weight * s.norm_cbp * grad_lambda.transpose();
    const Matrix grad_norm_cbp = weight.transpose() * s.norm_audio * grad_lambda;
    out.weights[params.share_weights ? 0 : ti - 1] += s.norm_audio * grad_lambda * s.norm_cbp.transpose();

    g_audio[ti - 1] += normalize_columns_backward(s.norm_audio, s.col_norms_audio, grad_norm_audio);
    g_cbp[ti - 1] += normalize_columns_backward(s.norm_cbp, s.col_norms_cbp, grad_norm_cbp);
  }

  out.input_audio = std::move(g_audio[0]);
  out.input_cbp = std::move(g_cbp[0]);
  return out;
}

}  // namespace clip_ae
