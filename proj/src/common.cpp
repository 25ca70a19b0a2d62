#include "clip_ae/common.hpp"

namespace clip_ae {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::DimensionZero: return "DimensionZero";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNormColumn: return "ZeroNormColumn";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::DegenerateUpdate: return "DegenerateUpdate";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::TooFewVideos: return "TooFewVideos";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

Matrix column_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - peak).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  return column_softmax(logits.transpose()).transpose();
}

Matrix column_softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  Matrix out(probs.rows(), probs.cols());
  for (Index j = 0; j < probs.cols(); ++j) {
    const double inner = probs.col(j).dot(grad_probs.col(j));
    out.col(j) = probs.col(j).cwiseProduct((grad_probs.col(j).array() - inner).matrix());
  }
  return out;
}

Matrix row_softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  return column_softmax_backward(probs.transpose(), grad_probs.transpose()).transpose();
}

}  // namespace clip_ae
