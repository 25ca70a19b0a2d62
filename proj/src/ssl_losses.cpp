#include "clip_ae/ssl_losses.hpp"

#include <cmath>

namespace clip_ae {

namespace {

struct GramTerm {
  double loss = 0.0;
  Matrix grad;
};

GramTerm gram_term(const Matrix& x, bool normalize_rows, std::string_view modality) {
  Matrix n = x;
  Vector norms;
  if (normalize_rows) {
    norms = x.rowwise().norm();
    for (Index k = 0; k < norms.size(); ++k)
      require(norms(k) > 0.0, ErrorCode::ZeroNormRow, std::string(modality) + " row " + std::to_string(k));
    n = norms.cwiseInverse().asDiagonal() * x;
  }
  const Matrix residual = n * n.transpose() - Matrix::Identity(x.rows(), x.rows());
  GramTerm out;
  out.loss = residual.squaredNorm();
  // residual is symmetric, so d/dN ||N N^T - I||^2 = 4 (N N^T - I) N.
  Matrix grad_n = 4.0 * residual * n;
  if (normalize_rows) {
    for (Index k = 0; k < n.rows(); ++k) {
      const double radial = n.row(k).dot(grad_n.row(k));
      grad_n.row(k) = (grad_n.row(k) - radial * n.row(k)) / norms(k);
    }
  }
  out.grad = std::move(grad_n);
  return out;
}

}  // namespace

DecorrelationResult decorrelation_loss_with_grad(const Matrix& audio, const Matrix& cbp, bool normalize_rows) {
  require(audio.allFinite() && cbp.allFinite(), ErrorCode::NonFiniteValue, "decorrelation input");
  GramTerm a = gram_term(audio, normalize_rows, "audio");
  GramTerm c = gram_term(cbp, normalize_rows, "cbp");
  return DecorrelationResult{a.loss + c.loss, std::move(a.grad), std::move(c.grad)};
}

double decorrelation_loss(const Matrix& audio, const Matrix& cbp, bool normalize_rows) {
  return decorrelation_loss_with_grad(audio, cbp, normalize_rows).loss;
}

Vector avg_pool(const Matrix& z) {
  require(z.rows() >= 1, ErrorCode::DimensionZero, "cannot pool zero segments");
  return z.colwise().mean().transpose();
}

MemoryBank::MemoryBank(Index size, Index dim, double momentum, std::string view, std::mt19937_64& rng)
    : momentum_(momentum), view_(std::move(view)) {
  require(size >= 1 && dim >= 1, ErrorCode::EmptyBank, "memory bank '" + view_ + "' needs size and dim >= 1");
  require(momentum >= 0.0 && momentum <= 1.0, ErrorCode::InvalidArgument, "bank momentum must be in [0, 1]");
  std::normal_distribution<double> dist(0.0, 1.0);
  entries_.resize(size, dim);
  for (Index i = 0; i < size; ++i) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (Index k = 0; k < dim; ++k) entries_(i, k) = dist(rng);
      norm = entries_.row(i).norm();
    }
    entries_.row(i) /= norm;
  }
}

MemoryBank MemoryBank::restore(Matrix entries, double momentum, std::string view) {
  for (Index i = 0; i < entries.rows(); ++i) {
    const double norm = entries.row(i).norm();
    require(std::abs(norm - 1.0) <= 1e-9, ErrorCode::SchemaError,
            "bank '" + view + "' entry " + std::to_string(i) + " has norm " + std::to_string(norm));
  }
  require(momentum >= 0.0 && momentum <= 1.0, ErrorCode::InvalidArgument, "bank momentum must be in [0, 1]");
  MemoryBank bank;
  bank.entries_ = std::move(entries);
  bank.momentum_ = momentum;
  bank.view_ = std::move(view);
  return bank;
}

MemoryBank::MemoryBank(Matrix entries, double momentum, std::string view)
    : entries_(std::move(entries)), momentum_(momentum), view_(std::move(view)) {
  require(momentum >= 0.0 && momentum <= 1.0, ErrorCode::InvalidArgument, "bank momentum must be in [0, 1]");
  for (Index i = 0; i < entries_.rows(); ++i) {
    const double norm = entries_.row(i).norm();
    require(norm > 0.0 && std::isfinite(norm), ErrorCode::ZeroNormVector,
            "bank '" + view_ + "' entry " + std::to_string(i));
    entries_.row(i) /= norm;
  }
}

void MemoryBank::update(Index index, const Vector& z) {
  require(index >= 0 && index < size(), ErrorCode::IndexOutOfRange,
          "bank '" + view_ + "' index " + std::to_string(index) + " of " + std::to_string(size()));
  require(z.size() == dim(), ErrorCode::DimensionMismatch, "bank '" + view_ + "' expects dim " + std::to_string(dim()));
  const double z_norm = z.norm();
  require(z_norm > 0.0, ErrorCode::ZeroNormVector, "bank update vector");
  if (momentum_ == 1.0) return;
  const Vector blended = momentum_ * entry(index) + (1.0 - momentum_) * (z / z_norm);
  const double norm = blended.norm();
  require(norm >= 1e-12, ErrorCode::DegenerateUpdate,
          "bank '" + view_ + "' entry " + std::to_string(index) + " blends to norm " + std::to_string(norm));
  entries_.row(index) = (blended / norm).transpose();
}

ViewInstanceLoss view_instance_loss(const Vector& z, Index index, const MemoryBank& bank, double tau) {
  require(bank.size() >= 1, ErrorCode::EmptyBank, "bank '" + bank.view() + "'");
  require(index >= 0 && index < bank.size(), ErrorCode::IndexOutOfRange,
          "index " + std::to_string(index) + " of bank size " + std::to_string(bank.size()));
  require(z.size() == bank.dim(), ErrorCode::DimensionMismatch,
          "pooled vector dim " + std::to_string(z.size()) + " vs bank dim " + std::to_string(bank.dim()));
  require(tau > 0.0, ErrorCode::InvalidArgument, "temperature must be positive");
  const double z_norm = z.norm();
  require(z_norm > 0.0, ErrorCode::ZeroNormVector, "pooled " + bank.view() + " feature");

  ViewInstanceLoss out;
  out.normalized = z / z_norm;
  const Vector logits = bank.entries() * out.normalized / tau;
  const double peak = logits.maxCoeff();
  const Vector shifted = (logits.array() - peak).exp().matrix();
  const double partition = shifted.sum();
  out.loss = std::log(partition) - (logits(index) - peak);

  Vector grad_logits = shifted / partition;
  grad_logits(index) -= 1.0;
  const Vector grad_normalized = bank.entries().transpose() * grad_logits / tau;
  out.grad_z = (grad_normalized - out.normalized * out.normalized.dot(grad_normalized)) / z_norm;
  return out;
}

double instance_discrimination_loss(const Vector& z_vlp, const Vector& z_cbp, Index index, const MemoryBank& bank_vlp,
                                    const MemoryBank& bank_cbp, double tau) {
  return view_instance_loss(z_vlp, index, bank_vlp, tau).loss + view_instance_loss(z_cbp, index, bank_cbp, tau).loss;
}

void update_memory_bank(MemoryBank& bank, Index index, const Vector& z) { bank.update(index, z); }

LossBreakdown total_loss(double de_cor, double ins_dis) { return LossBreakdown{de_cor, ins_dis, de_cor + ins_dis}; }

LossBreakdown mean_loss(std::span<const LossBreakdown> parts) {
  if (parts.empty()) return {};
  double de_cor = 0.0;
  double ins_dis = 0.0;
  for (const auto& p : parts) {
    de_cor += p.de_cor;
    ins_dis += p.ins_dis;
  }
  const auto n = static_cast<double>(parts.size());
  return total_loss(de_cor / n, ins_dis / n);
}

}  // namespace clip_ae
