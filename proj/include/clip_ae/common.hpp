#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace clip_ae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  MagicMismatch,
  UnsupportedVersion,
  TruncatedFile,
  TrailingData,
  DimensionZero,
  NonFiniteValue,
  IoFailure,
  SchemaError,
  LengthMismatch,
  MissingFile,
  InvalidArgument,
  DimensionMismatch,
  ZeroNormColumn,
  ZeroNormRow,
  ZeroNormVector,
  IndexOutOfRange,
  EmptyBank,
  DegenerateUpdate,
  NonFiniteGradient,
  TooFewVideos,
  DivergenceDetected,
  InvalidInterval,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `what()` is a single line of the form
/// "<ErrorCode>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

inline void require(bool condition, ErrorCode code, const std::string& detail) {
  if (!condition) fail(code, detail);
}

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Numerically stable softmax helpers. Both are total on finite input.
Matrix column_softmax(const Matrix& logits);
Matrix row_softmax(const Matrix& logits);

// Backward of a column/row softmax: given probabilities P and dL/dP, returns
// dL/dlogits.
Matrix column_softmax_backward(const Matrix& probs, const Matrix& grad_probs);
Matrix row_softmax_backward(const Matrix& probs, const Matrix& grad_probs);

}  // namespace clip_ae
