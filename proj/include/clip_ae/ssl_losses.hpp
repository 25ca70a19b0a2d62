#pragma once

#include "clip_ae/common.hpp"

#include <random>
#include <span>
#include <string>
#include <string_view>

namespace clip_ae {

struct DecorrelationResult {
  double loss = 0.0;
  Matrix grad_audio;  // dL/dX_audio, same shape as the input
  Matrix grad_cbp;
};

/// ||N_a N_a^T - I||_F^2 + ||N_c N_c^T - I||_F^2 on d_x x L inputs, where N is the
/// row-normalized input when `normalize_rows` is set and the raw input otherwise.
double decorrelation_loss(const Matrix& audio, const Matrix& cbp, bool normalize_rows = true);
DecorrelationResult decorrelation_loss_with_grad(const Matrix& audio, const Matrix& cbp, bool normalize_rows = true);

/// Mean over rows (segments) of a T x d_v matrix.
Vector avg_pool(const Matrix& z);

/// Momentum-updated table of unit vectors, one row per training video.
class MemoryBank {
 public:
  MemoryBank() = default;
  /// Seeded random unit vectors.
  MemoryBank(Index size, Index dim, double momentum, std::string view, std::mt19937_64& rng);
  /// Adopts the given rows; each must have nonzero norm and is normalized.
  MemoryBank(Matrix entries, double momentum, std::string view);
  /// Adopts saved rows verbatim; each must already be unit norm.
  static MemoryBank restore(Matrix entries, double momentum, std::string view);

  Index size() const { return entries_.rows(); }
  Index dim() const { return entries_.cols(); }
  double momentum() const { return momentum_; }
  const std::string& view() const { return view_; }
  const Matrix& entries() const { return entries_; }
  Vector entry(Index i) const { return entries_.row(i).transpose(); }

  /// m_i <- normalize(mu * m_i + (1 - mu) * normalize(z)).
  void update(Index index, const Vector& z);

 private:
  Matrix entries_;
  double momentum_ = 0.5;
  std::string view_;
};

struct ViewInstanceLoss {
  double loss = 0.0;
  Vector normalized;  // z / |z|
  Vector grad_z;      // dL/dz for the un-normalized pooled vector
};

/// -log softmax_i(z^ . m_i / tau)[index] for a single view.
ViewInstanceLoss view_instance_loss(const Vector& z, Index index, const MemoryBank& bank, double tau);

/// Sum of the VLP and CBP view terms; each view scores against its own bank.
double instance_discrimination_loss(const Vector& z_vlp, const Vector& z_cbp, Index index, const MemoryBank& bank_vlp,
                                    const MemoryBank& bank_cbp, double tau);

void update_memory_bank(MemoryBank& bank, Index index, const Vector& z);

struct LossBreakdown {
  double de_cor = 0.0;
  double ins_dis = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(double de_cor, double ins_dis);

/// Component-wise mean over per-video breakdowns, summed in index order.
LossBreakdown mean_loss(std::span<const LossBreakdown> parts);

}  // namespace clip_ae
