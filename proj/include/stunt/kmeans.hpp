#pragma once

#include "stunt/types.hpp"

#include <cstdint>
#include <vector>

namespace stunt {

struct KMeansOptions {
  int max_iter = 100;
  /// Stop once (previous - current) inertia <= tol * previous.
  double tol = 1e-4;
};

struct ClusteringResult {
  Matrix centroids;              // k x d'
  std::vector<int> assignments;  // nearest centroid of each point
  /// Mean squared distance of points to their assigned centroid.
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after every assignment step, first to last.
  std::vector<double> inertia_history;
};

/// Lloyd's algorithm from k-means++ seeding.
///
/// Points are processed in a canonical order fixed by their contents, so the result does not
/// depend on the order rows are passed in: permuting the input permutes the
/// assignments the same way. An empty cluster is moved onto the point that is
/// farthest from its own centroid. On return `assignments` is exactly
/// assign(points, centroids).
ClusteringResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Index of the nearest centroid (squared Euclidean) per row; ties go to the
/// lowest centroid index.
std::vector<int> assign(const Matrix& points, const Matrix& centroids);

double clustering_inertia(const Matrix& points, const Matrix& centroids, const std::vector<int>& assignments);

}  // namespace stunt
