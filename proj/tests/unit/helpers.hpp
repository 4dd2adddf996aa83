#pragma once

#include "stunt/protonet.hpp"
#include "stunt/rng.hpp"
#include "stunt/types.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace stunt::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// `per_blob` gaussian points around each center.
inline Matrix blobs(const Matrix& centers, int per_blob, double sigma, Rng& rng, std::vector<int>* labels = nullptr) {
  Matrix x(centers.rows() * per_blob, centers.cols());
  for (Index c = 0; c < centers.rows(); ++c) {
    for (int i = 0; i < per_blob; ++i) {
      const Index r = c * per_blob + i;
      for (Index j = 0; j < centers.cols(); ++j) x(r, j) = centers(c, j) + sigma * rng.normal();
      if (labels) labels->push_back(static_cast<int>(c));
    }
  }
  return x;
}

/// d = H = D encoder with identity weights: encode(x) = x for x >= 0.
inline EncoderParams identity_encoder(Index d) {
  EncoderParams p;
  p.w1 = Matrix::Identity(d, d);
  p.w2 = Matrix::Identity(d, d);
  p.b1 = RowVector::Zero(d);
  p.b2 = RowVector::Zero(d);
  return p;
}

/// Adjusted Rand index between two labelings.
inline double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  int ka = 0, kb = 0;
  for (int v : a) ka = std::max(ka, v + 1);
  for (int v : b) kb = std::max(kb, v + 1);
  std::vector<std::vector<double>> n(ka, std::vector<double>(kb, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) n[a[i]][b[i]] += 1.0;
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (int i = 0; i < ka; ++i) {
    double row = 0;
    for (int j = 0; j < kb; ++j) {
      sum_ij += c2(n[i][j]);
      row += n[i][j];
    }
    sum_a += c2(row);
  }
  for (int j = 0; j < kb; ++j) {
    double col = 0;
    for (int i = 0; i < ka; ++i) col += n[i][j];
    sum_b += c2(col);
  }
  const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

/// Random d x H x D encoder and a way-way shot-shot episode with `query` rows
/// per class drawn from N(0, 1).
inline std::pair<EncoderParams, Episode> random_instance(Rng& rng, Index d, Index h, Index e, int way, int shot,
                                                         int query) {
  auto params = init_encoder(d, h, e, rng.next());
  params.b1 = random_matrix(1, h, rng, -0.1, 0.1);
  params.b2 = random_matrix(1, e, rng, -0.1, 0.1);
  Episode ep;
  ep.shot = shot;
  ep.query_per_class = query;
  ep.support.resize(way * shot, d);
  ep.query.resize(way * query, d);
  for (Index i = 0; i < ep.support.size(); ++i) ep.support.data()[i] = rng.normal();
  for (Index i = 0; i < ep.query.size(); ++i) ep.query.data()[i] = rng.normal();
  for (int c = 0; c < way; ++c) {
    ep.classes.push_back(c);
    for (int s = 0; s < shot; ++s) ep.support_labels.push_back(c);
    for (int q = 0; q < query; ++q) ep.query_labels.push_back(c);
  }
  return {params, ep};
}

/// Largest elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// against central differences with step h.
inline double max_gradient_error(const EncoderParams& params, const Episode& ep, double h = 1e-6,
                                 double floor = 1e-4) {
  const auto analytic = episode_loss_and_grad(params, ep).grad;
  double worst = 0.0;
  auto check = [&](auto member) {
    auto probe = params;
    auto& block = probe.*member;
    const auto& grad = analytic.*member;
    for (Index i = 0; i < block.size(); ++i) {
      const double saved = block.data()[i];
      block.data()[i] = saved + h;
      const double up = episode_loss(probe, ep);
      block.data()[i] = saved - h;
      const double down = episode_loss(probe, ep);
      block.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grad.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  };
  check(&EncoderParams::w1);
  check(&EncoderParams::b1);
  check(&EncoderParams::w2);
  check(&EncoderParams::b2);
  return worst;
}

}  // namespace stunt::testing
