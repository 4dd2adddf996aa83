#pragma once

#include "stunt/protonet.hpp"
#include "stunt/table.hpp"
#include "stunt/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stunt {

/// Nearest-prototype prediction with prototypes built from the embedded
/// labeled rows. Ties go to the lowest class index. Classes absent from the
/// labeled set are never predicted.
std::vector<int> adapt_and_classify(const EncoderParams& params, const Matrix& labeled_x, std::span<const int> labels,
                                    int num_classes, const Matrix& test_x);

/// Same rule with the identity embedding.
std::vector<int> raw_prototype_baseline(const Matrix& labeled_x, std::span<const int> labels, int num_classes,
                                        const Matrix& test_x);

/// Unweighted mean target of the k nearest labeled rows per test row; distance
/// ties are broken by the lower labeled-row index.
Vector knn_predict(const Matrix& labeled_embed, const Vector& targets, const Matrix& test_embed, int k);
Vector knn_regress(const EncoderParams& params, const Matrix& labeled_x, const Vector& targets, const Matrix& test_x,
                   int k);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double mean_squared_error(const Vector& predicted, const Vector& truth);

struct SeedStats {
  std::vector<double> values;
  double mean = 0.0;
  /// Population standard deviation (divides by n).
  double std = 0.0;

  static SeedStats from(std::vector<double> values);
};

struct FewShotResult {
  std::string dataset;
  int shots = 0;
  std::vector<std::uint64_t> seeds;
  SeedStats stunt;
  /// Raw-input nearest-prototype baseline on the same labeled draws.
  SeedStats raw;
  std::uint64_t config_hash = 0;
};

struct RegressionResult {
  std::string dataset;
  int shots = 0;
  int k = 0;
  std::vector<std::uint64_t> seeds;
  SeedStats stunt;
  SeedStats raw;
  std::uint64_t config_hash = 0;
};

/// Seeds 0..n-1.
std::vector<std::uint64_t> seed_range(int n);

/// For every seed: sample_labeled(labeled_pool, shots, seed), adapt, score
/// the whole test split. Errors carry the seed.
FewShotResult evaluate_seeds(const DatasetSplits& splits, const Checkpoint& checkpoint, int shots,
                             std::span<const std::uint64_t> seeds, int threads = 1);
RegressionResult evaluate_regression(const DatasetSplits& splits, const Checkpoint& checkpoint, int shots, int k,
                                     std::span<const std::uint64_t> seeds, int threads = 1);

/// Structured result files: one JSON object per line, per-seed records then an
/// aggregate record.
std::string result_jsonl(const FewShotResult& result);
std::string result_jsonl(const RegressionResult& result);

struct ReportRow {
  std::string dataset;
  std::string metric;
  int shots = 0;
  double stunt = 0.0;
  double stunt_std = 0.0;
  double raw = 0.0;
  double raw_std = 0.0;
};

/// Reads the aggregate record of a result file.
ReportRow read_report_row(const std::filesystem::path& path);
/// Datasets x methods markdown table.
std::string markdown_table(const std::vector<ReportRow>& rows);

}  // namespace stunt
