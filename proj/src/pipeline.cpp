#include "stunt/pipeline.hpp"

#include "stunt/text_util.hpp"

#include <fstream>

namespace fs = std::filesystem;

namespace stunt {

DatasetSplits prepare_from_schema(const fs::path& schema_path, std::uint64_t seed, std::optional<ScaleMode> mode,
                                  const fs::path& csv) {
  const auto schema = load_schema(schema_path);
  const auto data = csv.empty() ? schema_path.parent_path() / (schema.name + ".csv") : csv;
  return prepare_dataset(data, schema, mode.value_or(schema.scaling), seed);
}

int pseudo_val_classes(const DatasetSplits& splits, const TrainConfig& config) {
  return splits.is_regression() ? config.way : splits.num_classes;
}

namespace {

std::string run_key(const DatasetSplits& splits, const TrainConfig& config) {
  return config.canonical() + "dataset = " + splits.name + "\nsplit_seed = " + std::to_string(splits.seed) +
         "\nrows = " + std::to_string(splits.train_unlabeled.rows()) + "," + std::to_string(splits.pseudo_val.rows()) +
         "\ndims = " + std::to_string(splits.train_unlabeled.dims()) + "\n";
}

}  // namespace

TrainResult train_to_dir(const DatasetSplits& splits, const TrainConfig& config, const fs::path& dir) {
  config.validate();
  fs::create_directories(dir);
  std::ofstream log(dir / "log.jsonl", std::ios::binary);
  if (!log) throw LoadError("cannot write " + (dir / "log.jsonl").string());
  TrainCallbacks callbacks;
  callbacks.on_record = [&log](const LogRecord& r) { log << log_record_json(r) << '\n'; };
  auto result = meta_train(splits.train_unlabeled.values, splits.pseudo_val.values, pseudo_val_classes(splits, config),
                           config, callbacks);
  log.close();
  save_checkpoint(dir / "best.ckpt", result.best);
  save_checkpoint(dir / "final.ckpt", result.final);
  detail::write_file(dir / "train_config.txt", config.canonical());
  detail::write_file(dir / "run_key.txt", run_key(splits, config));
  return result;
}

std::pair<Checkpoint, Checkpoint> train_or_load(const DatasetSplits& splits, const TrainConfig& config,
                                                const fs::path& dir) {
  const auto key = run_key(splits, config);
  if (fs::exists(dir / "run_key.txt") && fs::exists(dir / "best.ckpt") && fs::exists(dir / "final.ckpt")) {
    try {
      if (detail::read_file(dir / "run_key.txt") == key) {
        auto best = load_checkpoint(dir / "best.ckpt");
        auto final = load_checkpoint(dir / "final.ckpt");
        if (best.config_hash == config.hash() && final.config_hash == config.hash()) return {best, final};
      }
    } catch (const LoadError&) {
      // fall through and retrain
    }
  }
  auto result = train_to_dir(splits, config, dir);
  return {std::move(result.best), std::move(result.final)};
}

}  // namespace stunt
