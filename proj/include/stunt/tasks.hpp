#pragma once

#include "stunt/kmeans.hpp"
#include "stunt/rng.hpp"
#include "stunt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace stunt {

struct FeatureMask {
  std::vector<std::uint8_t> bits;
  /// Sampled masking ratio p (1.0 for a full mask).
  double ratio = 0.0;

  Index size() const { return static_cast<Index>(bits.size()); }
  std::size_t count() const;
  std::vector<Index> selected() const;
  static FeatureMask full(Index d);
};

/// p ~ U(r1, r2), then exactly floor(d * p) of the d positions are set, chosen
/// uniformly without replacement. Requires 0 < r1 < r2 < 1, d >= 2 and
/// floor(d * r1) >= 1.
FeatureMask sample_mask(Index d, double r1, double r2, Rng& rng);

/// Keeps the masked columns only: sq(x ⊙ m).
Matrix squeeze(const Matrix& x, const FeatureMask& mask);

enum class MaskStrategy { marginal, zero, gaussian, none };

std::string_view to_string(MaskStrategy strategy);
MaskStrategy parse_mask_strategy(std::string_view text);

struct Corruption {
  MaskStrategy strategy = MaskStrategy::marginal;
  /// Noise scale of the gaussian strategy.
  double sigma = 0.1;
};

/// Replacement values for the masked cells of one table.
///
/// Every masked cell (i, j) gets its own counter-based random draw keyed by
/// (seed, i, j), so corrupting a subset of rows yields exactly the rows that
/// corrupting the full table would. Unmasked cells are always copied verbatim.
class CorruptionPlan {
 public:
  CorruptionPlan() = default;
  CorruptionPlan(FeatureMask mask, Corruption corruption, std::uint64_t seed)
      : mask_(std::move(mask)), corruption_(corruption), seed_(seed) {}

  const FeatureMask& mask() const { return mask_; }
  const Corruption& corruption() const { return corruption_; }

  Matrix apply(const Matrix& clean) const;
  Matrix apply_rows(const Matrix& clean, std::span<const Index> rows) const;

 private:
  void corrupt_row(const Matrix& clean, Index row, double* out) const;

  FeatureMask mask_;
  Corruption corruption_;
  std::uint64_t seed_ = 0;
};

/// x~ = m ⊙ x^ + (1 - m) ⊙ x. marginal: each masked cell takes the value of
/// a uniformly drawn row of the same column; zero: 0; gaussian: x + N(0, sigma²);
/// none: identity.
Matrix corrupt(const Matrix& clean, const FeatureMask& mask, const Corruption& corruption, Rng& rng);

struct TaskOptions {
  int way = 5;
  double r1 = 0.2;
  double r2 = 0.5;
  Corruption corruption;
  KMeansOptions kmeans;
};

struct StuntTask {
  /// Corrupted rows x~. Left empty by generate_task_labels; rows are then
  /// produced on demand through `corruption`.
  Matrix inputs;
  std::vector<int> pseudo_labels;
  int way = 0;
  FeatureMask mask;
  /// Centroids over the squeezed clean columns; assign() on sq(x ⊙ m) with
  /// them reproduces pseudo_labels.
  Matrix centroids;
  CorruptionPlan corruption;

  bool materialized() const { return inputs.rows() == static_cast<Index>(pseudo_labels.size()); }
};

/// Samples a mask, clusters the clean masked columns of every row into `way`
/// pseudo-classes, and corrupts the masked columns of the full-width rows.
StuntTask generate_stunt_task(const Matrix& unlabeled, const TaskOptions& options, Rng& rng);
/// Same with a caller-provided mask.
StuntTask generate_stunt_task(const Matrix& unlabeled, const FeatureMask& mask, int way,
                              const Corruption& corruption, const KMeansOptions& kmeans, Rng& rng);
/// Mask, pseudo-labels and corruption plan without materializing inputs;
/// consumes the random stream exactly like generate_stunt_task.
StuntTask generate_task_labels(const Matrix& unlabeled, const TaskOptions& options, Rng& rng);

/// Row indices of one episode. Support and query rows are grouped by episode
/// class; episode class e corresponds to pseudo-class classes[e].
struct EpisodeRows {
  std::vector<Index> support_rows;
  std::vector<int> support_labels;
  std::vector<Index> query_rows;
  std::vector<int> query_labels;
  std::vector<int> classes;
  int shot = 0;
  int query_per_class = 0;

  int way() const { return static_cast<int>(classes.size()); }
};

struct Episode : EpisodeRows {
  Matrix support;
  Matrix query;
};

/// For every pseudo-class with at least shot + query_per_class members (in
/// ascending class order) draws that many rows without replacement; the first
/// `shot` go to the support set. Classes that are too small are skipped;
/// throws EpisodeError if fewer than two classes remain.
EpisodeRows sample_episode_rows(std::span<const int> labels, int way, int shot, int query_per_class, Rng& rng);

/// Episode over a materialized task.
Episode sample_episode(const StuntTask& task, int shot, int query_per_class, Rng& rng);
/// Episode over a lazily generated task; `clean` is the table the task was
/// generated from.
Episode sample_episode(const StuntTask& task, const Matrix& clean, int shot, int query_per_class, Rng& rng);

inline constexpr int kMaxTaskAttempts = 20;

struct TaskEpisode {
  StuntTask task;
  Episode episode;
  int attempts = 1;
};

/// Generates a lazy task and samples one episode from it, regenerating the task
/// with a fresh mask while no episode can be formed. Throws DataError after
/// kMaxTaskAttempts failures.
TaskEpisode generate_episode(const Matrix& unlabeled, const TaskOptions& options, int shot, int query_per_class,
                             Rng& rng);

/// Validation task: full mask, clean inputs, k = num_classes clusters.
StuntTask build_pseudo_val_task(const Matrix& validation, int num_classes, Rng& rng,
                                const KMeansOptions& kmeans = {});

/// Debug dump: corrupted inputs followed by a pseudo_label column.
void write_task_csv(const std::filesystem::path& path, const StuntTask& task);

}  // namespace stunt
