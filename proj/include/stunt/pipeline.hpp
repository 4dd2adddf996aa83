#pragma once

// Glue shared by the command-line tool, the Python module and the acceptance
// harness: dataset preparation from a schema and training runs persisted to a
// directory.

#include "stunt/table.hpp"
#include "stunt/trainer.hpp"

#include <filesystem>
#include <optional>

namespace stunt {

/// Loads `<schema dir>/<name>.csv` (or `csv` when given), encodes, splits and
/// scales with the schema's scaling mode unless `mode` overrides it.
DatasetSplits prepare_from_schema(const std::filesystem::path& schema_path, std::uint64_t seed,
                                  std::optional<ScaleMode> mode = std::nullopt,
                                  const std::filesystem::path& csv = {});

/// Cluster count of the pseudo-validation task: the class count, or the
/// training way for regression tables.
int pseudo_val_classes(const DatasetSplits& splits, const TrainConfig& config);

/// meta_train on the splits, writing best.ckpt, final.ckpt, log.jsonl,
/// train_config.txt and run_key.txt (config plus split identity) into `dir`.
TrainResult train_to_dir(const DatasetSplits& splits, const TrainConfig& config, const std::filesystem::path& dir);

/// Reuses best.ckpt / final.ckpt from `dir` when both carry the hash of this
/// config and split; trains otherwise. Returns {best, final}.
std::pair<Checkpoint, Checkpoint> train_or_load(const DatasetSplits& splits, const TrainConfig& config,
                                                const std::filesystem::path& dir);

}  // namespace stunt
