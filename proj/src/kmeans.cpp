#include "stunt/kmeans.hpp"

#include "stunt/rng.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>
#include <string>

namespace stunt {

namespace {

double squared_distance(const double* a, const double* b, Index d) {
  double sum = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    sum += diff * diff;
  }
  return sum;
}

/// Squared distances of every row to every centroid (n x k) in the expanded
/// form |x|^2 - 2 x.c + |c|^2, clamped at zero.
Matrix distance_table(const Matrix& points, const Vector& point_norms, const Matrix& centroids) {
  Matrix d2 = -2.0 * points * centroids.transpose();
  d2.colwise() += point_norms;
  d2.rowwise() += centroids.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

void nearest_all(const Matrix& points, const Vector& point_norms, const Matrix& centroids, std::vector<int>& labels,
                 std::vector<double>& dist) {
  const Matrix d2 = distance_table(points, point_norms, centroids);
  labels.resize(static_cast<std::size_t>(points.rows()));
  dist.resize(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < d2.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < d2.cols(); ++c) {
      if (d2(i, c) < d2(i, best)) best = c;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    dist[static_cast<std::size_t>(i)] = d2(i, best);
  }
}

/// Canonical row order: by a hash of the row's bits, exact ties broken
/// lexicographically. Depends only on row contents.
std::vector<std::size_t> canonical_order(const Matrix& points) {
  const Index d = points.cols();
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (Index j = 0; j < d; ++j) h = mix64(h ^ std::bit_cast<std::uint64_t>(points(i, j)));
    keys[static_cast<std::size_t>(i)] = h;
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  // identical rows may stay in input order; genuine hash collisions get sorted
  auto row = [&](std::size_t i) { return points.row(static_cast<Index>(i)).data(); };
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    bool identical = true;
    while (hi < order.size() && keys[order[hi]] == keys[order[lo]]) {
      identical = identical && std::equal(row(order[lo]), row(order[lo]) + d, row(order[hi]));
      ++hi;
    }
    if (!identical) {
      std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi),
                       [&](std::size_t a, std::size_t b) {
                         return std::lexicographical_compare(row(a), row(a) + d, row(b), row(b) + d);
                       });
    }
    lo = hi;
  }
  return order;
}

Matrix seed_plus_plus(const Matrix& pts, int k, Rng& rng) {
  const Index n = pts.rows();
  Matrix centroids(k, pts.cols());
  centroids.row(0) = pts.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> min_d(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    min_d[static_cast<std::size_t>(i)] = squared_distance(pts.row(i).data(), centroids.row(0).data(), pts.cols());
  }
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(min_d.begin(), min_d.end(), 0.0);
    Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double w = min_d[static_cast<std::size_t>(i)];
        if (w <= 0.0) continue;
        cumulative += w;
        if (cumulative > target) {
          pick = i;
          break;
        }
      }
      // Rounding can leave `target` past the last cumulative sum.
      while (min_d[static_cast<std::size_t>(pick)] <= 0.0) --pick;
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = pts.row(pick);
    for (Index i = 0; i < n; ++i) {
      auto& m = min_d[static_cast<std::size_t>(i)];
      m = std::min(m, squared_distance(pts.row(i).data(), centroids.row(c).data(), pts.cols()));
    }
  }
  return centroids;
}

}  // namespace

std::vector<int> assign(const Matrix& points, const Matrix& centroids) {
  if (centroids.rows() == 0) throw DataError("assign: no centroids");
  if (points.cols() != centroids.cols()) {
    throw DataError("assign: points have " + std::to_string(points.cols()) + " dims, centroids " +
                    std::to_string(centroids.cols()));
  }
  std::vector<int> labels;
  std::vector<double> dist;
  nearest_all(points, points.rowwise().squaredNorm(), centroids, labels, dist);
  return labels;
}

double clustering_inertia(const Matrix& points, const Matrix& centroids, const std::vector<int>& assignments) {
  if (points.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    sum += squared_distance(points.row(i).data(), centroids.row(assignments[static_cast<std::size_t>(i)]).data(),
                            points.cols());
  }
  return sum / static_cast<double>(points.rows());
}

ClusteringResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Index n = points.rows();
  const Index d = points.cols();
  if (k < 1) throw DataError("kmeans: k must be >= 1");
  if (n < k) {
    throw DataError("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  }
  if (!points.allFinite()) throw DataError("kmeans: non-finite input");

  const auto order = canonical_order(points);
  Matrix pts(n, d);
  for (Index i = 0; i < n; ++i) pts.row(i) = points.row(static_cast<Index>(order[static_cast<std::size_t>(i)]));

  const Vector norms = pts.rowwise().squaredNorm();

  Rng rng(seed);
  ClusteringResult result;
  result.centroids = seed_plus_plus(pts, k, rng);

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<int> previous;
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<Index> counts(static_cast<std::size_t>(k));

  for (int iter = 1;; ++iter) {
    previous = labels;
    nearest_all(pts, norms, result.centroids, labels, dist);
    std::fill(counts.begin(), counts.end(), 0);
    for (int c : labels) ++counts[static_cast<std::size_t>(c)];

    bool repaired = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] != 0) continue;
      Index far = -1;
      double far_d = 0.0;
      for (Index i = 0; i < n; ++i) {
        const auto owner = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
        if (counts[owner] > 1 && dist[static_cast<std::size_t>(i)] > far_d) {
          far_d = dist[static_cast<std::size_t>(i)];
          far = i;
        }
      }
      if (far < 0) continue;  // fewer distinct points than clusters
      const auto owner = static_cast<std::size_t>(labels[static_cast<std::size_t>(far)]);
      --counts[owner];
      ++counts[static_cast<std::size_t>(c)];
      labels[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0.0;
      result.centroids.row(c) = pts.row(far);
      repaired = true;
    }
    if (repaired) {
      nearest_all(pts, norms, result.centroids, labels, dist);
    }

    const double inertia = std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(n);
    const double prev_inertia = result.inertia_history.empty() ? 0.0 : result.inertia_history.back();
    result.inertia_history.push_back(inertia);
    result.iterations = iter;

    const bool stalled = labels == previous;
    const bool small_change = iter > 1 && prev_inertia - inertia <= options.tol * prev_inertia;
    if (inertia == 0.0 || stalled || small_change || iter >= options.max_iter) break;

    Matrix sums = Matrix::Zero(k, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      const auto c = labels[static_cast<std::size_t>(i)];
      double* acc = sums.row(c).data();
      const double* p = pts.row(i).data();
      for (Index j = 0; j < d; ++j) acc[j] += p[j];
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }

  result.inertia = result.inertia_history.back();
  result.assignments.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    result.assignments[order[static_cast<std::size_t>(i)]] = labels[static_cast<std::size_t>(i)];
  }
  return result;
}

}  // namespace stunt
