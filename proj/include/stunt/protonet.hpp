#pragma once

#include "stunt/tasks.hpp"
#include "stunt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace stunt {

/// Two-layer MLP f(x) = relu(x W1 + b1) W2 + b2.
struct EncoderParams {
  Matrix w1;  // d x H
  RowVector b1;
  Matrix w2;  // H x D
  RowVector b2;

  Index input_dim() const { return w1.rows(); }
  Index hidden_dim() const { return w1.cols(); }
  Index embed_dim() const { return w2.cols(); }

  /// Same shapes, all zero.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;
};

/// Weights uniform in ±sqrt(6 / fan_in), biases zero.
EncoderParams init_encoder(Index input_dim, Index hidden_dim, Index embed_dim, std::uint64_t seed);

Matrix encode(const EncoderParams& params, const Matrix& x);

/// Class means of the embedded support rows; labels in [0, way).
Matrix class_prototypes(const Matrix& support_embed, std::span<const int> labels, int way);

/// Euclidean (not squared) distances, queries x prototypes. A small constant
/// inside the square root keeps the gradient finite at zero distance.
Matrix prototype_distances(const Matrix& query_embed, const Matrix& prototypes);

inline constexpr double kDistanceEpsilon = 1e-12;

/// Row-wise softmax over negative distances.
Matrix class_probabilities(const Matrix& distances);

struct EpisodeOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
  EncoderParams grad;
};

/// Mean query cross-entropy of the prototypical classifier and its exact
/// gradient; prototypes are differentiated through, not treated as constants.
EpisodeOutcome episode_loss_and_grad(const EncoderParams& params, const Episode& episode);
double episode_loss(const EncoderParams& params, const Episode& episode);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Added to the gradient of the weight matrices (not the biases) before the
  /// moment updates.
  double weight_decay = 1e-4;
};

struct AdamState {
  EncoderParams m;
  EncoderParams v;
  long step = 0;

  static AdamState for_params(const EncoderParams& params);
};

void adam_step(EncoderParams& params, const EncoderParams& grad, AdamState& state, const AdamOptions& options);

struct Checkpoint {
  EncoderParams params;
  std::uint64_t config_hash = 0;
  long step = 0;
  double pseudo_val_accuracy = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stunt
