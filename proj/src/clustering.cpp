#include "clip_ae/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

namespace clip_ae {

namespace {

int nearest(const Matrix& centroids, const Eigen::RowVectorXd& point, double* best_dist, double* second_dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  double second_d = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      second_d = best_d;
      best_d = d;
      best = static_cast<int>(c);
    } else if (d < second_d) {
      second_d = d;
    }
  }
  if (best_dist) *best_dist = best_d;
  if (second_dist) *second_dist = second_d;
  return best;
}

Matrix kmeans_plus_plus(const Matrix& points, int k, std::mt19937_64& rng) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  Vector dist2(n);
  for (Index i = 0; i < n; ++i) dist2(i) = (points.row(i) - centroids.row(0)).squaredNorm();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      chosen = n - 1;
      for (Index i = 0; i < n; ++i) {
        running += dist2(i);
        if (running > target && dist2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centroids.row(c) = points.row(chosen);
    for (Index i = 0; i < n; ++i) dist2(i) = std::min(dist2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

}  // namespace

namespace {

KMeansResult lloyd(const Matrix& points, int k, std::mt19937_64& rng, const KMeansOptions& options) {
  const Index n = points.rows();
  Matrix centroids = kmeans_plus_plus(points, k, rng);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);

  KMeansResult result;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    for (Index i = 0; i < n; ++i)
      labels[static_cast<std::size_t>(i)] = nearest(centroids, points.row(i), nullptr, nullptr);

    Matrix next = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = labels[static_cast<std::size_t>(i)];
      next.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its current centroid.
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d = (points.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(c) = points.row(far);
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    if (shift < options.tolerance) break;
  }

  result.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    double d = 0.0;
    labels[static_cast<std::size_t>(i)] = nearest(centroids, points.row(i), &d, nullptr);
    result.inertia += d;
  }

  // Canonical numbering by first appearance; unused clusters go last.
  std::vector<int> rename(static_cast<std::size_t>(k), -1);
  int next_id = 0;
  for (int l : labels)
    if (rename[static_cast<std::size_t>(l)] < 0) rename[static_cast<std::size_t>(l)] = next_id++;
  for (auto& r : rename)
    if (r < 0) r = next_id++;
  result.centroids.resize(k, points.cols());
  for (int c = 0; c < k; ++c) result.centroids.row(rename[static_cast<std::size_t>(c)]) = centroids.row(c);
  for (auto& l : labels) l = rename[static_cast<std::size_t>(l)];
  result.labels = std::move(labels);
  return result;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  require(points.rows() >= k, ErrorCode::TooFewVideos,
          std::to_string(points.rows()) + " points for " + std::to_string(k) + " clusters");
  require(points.allFinite(), ErrorCode::NonFiniteValue, "k-means input");
  require(options.restarts >= 1 && options.max_iterations >= 1, ErrorCode::InvalidArgument,
          "k-means needs at least one restart and one iteration");

  std::mt19937_64 rng(seed);
  KMeansResult best = lloyd(points, k, rng, options);
  for (int r = 1; r < options.restarts; ++r) {
    KMeansResult candidate = lloyd(points, k, rng, options);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

PseudoLabels cluster_pseudo_labels(const Matrix& pooled, int k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::InvalidArgument, "cluster count must be >= 2");
  const KMeansResult km = kmeans(pooled, k, seed);
  PseudoLabels out;
  out.labels = km.labels;
  out.confidence.reserve(out.labels.size());
  for (Index i = 0; i < pooled.rows(); ++i) {
    double best = 0.0, second = 0.0;
    nearest(km.centroids, pooled.row(i), &best, &second);
    best = std::sqrt(best);
    second = std::sqrt(second);
    out.confidence.push_back(second > 0.0 ? 1.0 - best / second : 0.0);
  }
  return out;
}

double clustering_purity(std::span<const int> labels, std::span<const int> truth) {
  require(labels.size() == truth.size() && !labels.empty(), ErrorCode::DimensionMismatch,
          "purity needs equal, non-empty label lists");
  std::map<int, std::map<int, int>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[labels[i]][truth[i]];
  int agree = 0;
  for (const auto& [_, by_truth] : counts) {
    int best = 0;
    for (const auto& [__, c] : by_truth) best = std::max(best, c);
    agree += best;
  }
  return static_cast<double>(agree) / static_cast<double>(labels.size());
}

std::vector<int> max_weight_assignment(const Matrix& weight) {
  require(weight.rows() == weight.cols(), ErrorCode::DimensionMismatch, "assignment needs a square matrix");
  const int n = static_cast<int>(weight.rows());
  if (n == 0) return {};
  // Minimize cost = -weight with the O(n^3) potential-based Hungarian method (1-indexed).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), 0);
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return assignment;
}

std::vector<int> align_labels(std::span<const int> labels, std::span<const int> reference, int k) {
  require(labels.size() == reference.size(), ErrorCode::DimensionMismatch, "label lists differ in length");
  Matrix overlap = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < k && reference[i] >= 0 && reference[i] < k, ErrorCode::IndexOutOfRange,
            "label outside [0, k)");
    overlap(labels[i], reference[i]) += 1.0;
  }
  const std::vector<int> mapping = max_weight_assignment(overlap);
  std::vector<int> out(labels.begin(), labels.end());
  for (auto& l : out) l = mapping[static_cast<std::size_t>(l)];
  return out;
}

}  // namespace clip_ae
