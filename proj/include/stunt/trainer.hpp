#pragma once

#include "stunt/protonet.hpp"
#include "stunt/tasks.hpp"
#include "stunt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stunt {

struct TrainConfig {
  int shot = 1;
  int query_per_class = 15;
  int way = 5;
  double r1 = 0.2;
  double r2 = 0.5;
  MaskStrategy strategy = MaskStrategy::marginal;
  double sigma = 0.1;
  int meta_batch = 4;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int hidden = 1024;
  int embed = 1024;
  long total_steps = 10000;
  long val_interval = 200;
  int val_episodes = 100;
  /// Queries per class in pseudo-validation episodes (always 1-shot).
  int val_query = 15;
  std::uint64_t seed = 0;
  /// Seeds the pseudo-validation tasks. Grid points share it, so every point is
  /// scored on the same validation task at the same call index.
  std::uint64_t val_seed = 0;
  /// Worker threads for the tasks of one meta-batch. Results do not depend on it.
  int threads = 1;

  void validate() const;
  /// Canonical `key = value` text of every field that affects results.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// H = D = 256 and 2000 steps instead of 1024 and 10000.
TrainConfig fast_profile(TrainConfig config);

/// Applies `key = value` overrides; unknown keys and bad values throw ConfigError.
void apply_config_text(TrainConfig& config, std::string_view text, std::string_view source);
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct LogRecord {
  long step = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> pseudo_val_accuracy;
  /// Total task regenerations in this step beyond the first attempt.
  int retries = 0;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint final;
  std::vector<LogRecord> log;
};

struct TrainCallbacks {
  /// Called with the new best checkpoint whenever pseudo-validation improves.
  std::function<void(const Checkpoint&)> on_improvement;
  std::function<void(const LogRecord&)> on_record;
};

/// Averages the per-task gradients in the given order.
EncoderParams average_gradients(const std::vector<EncoderParams>& grads);

/// Mean 1-shot ProtoNet accuracy over `episodes` episodes of one validation
/// task (full mask, clean rows, k = num_classes). Deterministic in `seed`.
double pseudo_validate(const EncoderParams& params, const Matrix& validation, int num_classes, int episodes,
                       int query_per_class, std::uint64_t seed);

/// Meta-training loop. Step s (1-based) generates meta_batch tasks with seeds
/// derived from (config.seed, s, j), averages their episode gradients and takes
/// one Adam step. Pseudo-validation runs every val_interval steps and after the
/// last step, call i seeded from (config.val_seed, i); the best checkpoint keeps
/// the earliest step among ties.
TrainResult meta_train(const Matrix& unlabeled, const Matrix& validation, int num_classes, const TrainConfig& config,
                       const TrainCallbacks& callbacks = {});

std::string log_record_json(const LogRecord& record);

struct GridSpec {
  std::vector<std::pair<int, int>> shot_query;
  std::vector<int> ways;

  std::size_t size() const { return shot_query.size() * ways.size(); }
};

GridSpec load_grid(const std::filesystem::path& path);
GridSpec parse_grid(std::string_view text, std::string_view source);

struct GridPoint {
  std::size_t index = 0;
  TrainConfig config;
  std::optional<TrainResult> result;
  std::string error;

  double best_accuracy() const { return result ? result->best.pseudo_val_accuracy : -1.0; }
};

/// One config per grid point, pairs outer and ways inner; point i gets the
/// seed derived from (base.seed, "grid", i).
std::vector<TrainConfig> grid_configs(const GridSpec& grid, const TrainConfig& base);

/// Trains every (shot, query) x way combination (pairs outer, ways inner) with
/// seeds derived from (base.seed, index). Failures are recorded on the point.
/// Returned sorted by best pseudo-validation accuracy, descending, stable.
std::vector<GridPoint> grid_search(const Matrix& unlabeled, const Matrix& validation, int num_classes,
                                   const GridSpec& grid, const TrainConfig& base,
                                   const std::function<void(const GridPoint&)>& on_point = {});

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception is
/// rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace stunt
