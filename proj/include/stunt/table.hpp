#pragma once

#include "stunt/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stunt {

enum class ColumnKind { numerical, categorical, target };
enum class ScaleMode { min_max, standardize };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(ScaleMode mode);
ScaleMode parse_scale_mode(std::string_view text);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numerical;
  /// Ordered category labels. For a target column a non-empty list makes the
  /// dataset a classification task (class id = position); an empty list makes
  /// it a regression target.
  std::vector<std::string> categories;
};

/// Column typing for one dataset, read from a key-value sidecar file:
///
///     name = diabetes
///     scaling = min_max
///     predefined_test = adult_test.csv      (optional, relative to the schema)
///     column.plas = numerical
///     column.sex = categorical: M, F
///     column.class = target: tested_negative, tested_positive
struct Schema {
  std::string name;
  std::vector<ColumnSchema> columns;
  ScaleMode scaling = ScaleMode::min_max;
  std::optional<std::filesystem::path> predefined_test;

  std::size_t target_index() const;
  const ColumnSchema& target() const { return columns[target_index()]; }
  bool is_regression() const { return target().categories.empty(); }
  /// Class count C; 0 for regression.
  int num_classes() const;
  /// Throws ConfigError unless there is exactly one target and every category
  /// list is non-empty and duplicate-free.
  void validate() const;
};

Schema parse_schema(std::string_view text, const std::filesystem::path& base_dir = {});
Schema load_schema(const std::filesystem::path& path);

/// Parsed CSV in schema column order. Numerical cells hold their value,
/// categorical cells the category index, the target the class index (or the
/// real value for regression).
struct RawTable {
  std::vector<ColumnSchema> columns;
  Matrix cells;
};

/// Reads a comma-separated file with a header row naming exactly the schema
/// columns (any order). Errors carry the 1-based file line and column name.
RawTable load_csv(const std::filesystem::path& path, const Schema& schema);
RawTable parse_csv(std::string_view text, const Schema& schema, std::string_view source = "<memory>");

struct EncodedTable {
  Matrix values;
  /// Encoded column -> index of the source feature column in the schema.
  std::vector<std::size_t> feature_origin;
  std::vector<std::string> feature_names;
  /// True for columns that belong to a one-hot block.
  std::vector<bool> one_hot;
  std::optional<Vector> target;
  /// Class count C for classification targets, 0 for regression or unlabeled.
  int num_classes = 0;
  /// Row position in the source file (0-based, header excluded).
  std::vector<std::size_t> row_ids;

  Index rows() const { return values.rows(); }
  Index dims() const { return values.cols(); }
  bool is_regression() const { return target.has_value() && num_classes == 0; }

  EncodedTable select_rows(std::span<const std::size_t> rows) const;
  EncodedTable without_target() const;
  /// Class label of row i as an integer; requires a classification target.
  int label(Index i) const { return static_cast<int>((*target)[i]); }
};

/// One-hot encodes categorical columns (m categories -> m binary columns in
/// category order); numerical columns pass through.
EncodedTable encode(const RawTable& raw);

struct ScalerStats {
  ScaleMode mode = ScaleMode::min_max;
  /// Per encoded column: x' = (x - offset) / scale. Columns with scaled[j]
  /// false (one-hot indicators) are left unchanged; scale == 0 marks a
  /// constant column, which maps to 0.
  Vector offset;
  Vector scale;
  std::vector<bool> scaled;
  /// Min-max range of a regression target.
  std::optional<std::pair<double, double>> target_range;

  bool operator==(const ScalerStats&) const = default;
};

/// Fits statistics on `table` only. Numerical source columns are scaled;
/// one-hot indicators stay 0/1 so each block keeps a row sum of 1.
ScalerStats fit_scaler(const EncodedTable& table, ScaleMode mode);
EncodedTable apply_scaler(const EncodedTable& table, const ScalerStats& stats);
std::pair<EncodedTable, ScalerStats> fit_and_scale(const EncodedTable& table, ScaleMode mode);

struct SplitIndices {
  std::vector<std::size_t> train_unlabeled;
  std::vector<std::size_t> pseudo_val;
  std::vector<std::size_t> test;
};

struct DatasetSplits {
  std::string name;
  EncodedTable train_unlabeled;
  EncodedTable pseudo_val;
  EncodedTable test;
  /// All training rows (train_unlabeled and pseudo_val) with labels kept; only
  /// used to draw the few-shot labeled set.
  EncodedTable labeled_pool;
  int num_classes = 0;
  std::uint64_t seed = 0;
  SplitIndices indices;
  std::optional<ScalerStats> scaler;

  bool is_regression() const { return labeled_pool.is_regression(); }
};

inline constexpr double kTestFraction = 0.2;
inline constexpr double kPseudoValFraction = 0.2;

/// Shuffles rows under `seed`: 20% test, then 20% of the remaining training
/// rows become the pseudo-validation set. With a predefined test table only the
/// pseudo-validation carve-out is random. Returned tables are unscaled.
DatasetSplits make_splits(const EncodedTable& table, std::uint64_t seed,
                          const EncodedTable* predefined_test = nullptr);

/// Fits the scaler on training rows and applies it to all four tables.
void scale_splits(DatasetSplits& splits, ScaleMode mode);

/// Load + encode + split + scale in one call.
DatasetSplits prepare_dataset(const std::filesystem::path& csv, const Schema& schema,
                              ScaleMode mode, std::uint64_t seed);

/// Equal-frequency bins used to stratify few-shot draws on regression targets.
inline constexpr int kRegressionStrata = 10;

/// Draws exactly `shots_per_class` rows per class without replacement,
/// deterministic under `seed`. Regression pools are stratified into
/// kRegressionStrata equal-frequency target bins which play the role of classes.
EncodedTable sample_labeled(const EncodedTable& labeled_pool, int shots_per_class, std::uint64_t seed);

/// Persisted split layout: train_unlabeled.csv, pseudo_val.csv, test.csv,
/// labeled_pool.csv, scaler.txt, dataset.txt and split_manifest.txt.
void write_splits(const std::filesystem::path& dir, const DatasetSplits& splits);
DatasetSplits read_splits(const std::filesystem::path& dir);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace stunt
