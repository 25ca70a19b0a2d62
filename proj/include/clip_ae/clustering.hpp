#pragma once

#include "clip_ae/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace clip_ae {

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // stop once no centroid moves farther than this
  int restarts = 10;        // independent k-means++ seedings; lowest inertia wins
};

struct KMeansResult {
  std::vector<int> labels;  // canonical: clusters numbered by first appearance
  Matrix centroids;         // k x d, rows follow the canonical numbering
  int iterations = 0;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding on the rows of `points`. All
/// restarts draw from one generator seeded with `seed`.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

struct PseudoLabels {
  std::vector<int> labels;
  /// 1 - d_nearest / d_second_nearest, in [0, 1]; higher is more confident.
  std::vector<double> confidence;
};

/// Throws TooFewVideos when there are fewer rows than clusters.
PseudoLabels cluster_pseudo_labels(const Matrix& pooled, int k, std::uint64_t seed);

/// Fraction of items whose cluster's majority truth label matches their own.
double clustering_purity(std::span<const int> labels, std::span<const int> truth);

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns assignment[row] = column.
std::vector<int> max_weight_assignment(const Matrix& weight);

/// Renames `labels` to agree as much as possible with `reference`, via the
/// maximum-overlap one-to-one mapping of label values in [0, k).
std::vector<int> align_labels(std::span<const int> labels, std::span<const int> reference, int k);

}  // namespace clip_ae
