#include "stunt/evaluation.hpp"

#include "stunt/text_util.hpp"
#include "stunt/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace stunt {

namespace {

std::vector<int> nearest_prototype(const Matrix& labeled, std::span<const int> labels, int num_classes,
                                   const Matrix& test) {
  if (num_classes < 1) throw DataError("need at least one class");
  if (labeled.rows() != static_cast<Index>(labels.size())) throw DataError("labeled rows and labels differ in count");
  if (labeled.cols() != test.cols()) throw DataError("labeled and test rows differ in width");
  Matrix protos = Matrix::Zero(num_classes, labeled.cols());
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= num_classes) throw DataError("label " + std::to_string(c) + " outside [0, num_classes)");
    protos.row(c) += labeled.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(c)];
  }
  std::vector<int> present;
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    protos.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    present.push_back(c);
  }
  if (present.empty()) throw DataError("labeled set is empty");
  std::vector<int> out(static_cast<std::size_t>(test.rows()));
  for (Index i = 0; i < test.rows(); ++i) {
    int best = present.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (int c : present) {
      const double d = (test.row(i) - protos.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace

std::vector<int> adapt_and_classify(const EncoderParams& params, const Matrix& labeled_x, std::span<const int> labels,
                                    int num_classes, const Matrix& test_x) {
  return nearest_prototype(encode(params, labeled_x), labels, num_classes, encode(params, test_x));
}

std::vector<int> raw_prototype_baseline(const Matrix& labeled_x, std::span<const int> labels, int num_classes,
                                        const Matrix& test_x) {
  return nearest_prototype(labeled_x, labels, num_classes, test_x);
}

Vector knn_predict(const Matrix& labeled_embed, const Vector& targets, const Matrix& test_embed, int k) {
  const Index n = labeled_embed.rows();
  if (targets.size() != n) throw DataError("labeled rows and targets differ in count");
  if (k < 1 || k > n) {
    throw DataError("k = " + std::to_string(k) + " needs between 1 and " + std::to_string(n) + " labeled rows");
  }
  if (labeled_embed.cols() != test_embed.cols()) throw DataError("labeled and test rows differ in width");
  Vector out(test_embed.rows());
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
  for (Index i = 0; i < test_embed.rows(); ++i) {
    for (Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = {(labeled_embed.row(j) - test_embed.row(i)).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    double sum = 0.0;
    for (int t = 0; t < k; ++t) sum += targets[dist[static_cast<std::size_t>(t)].second];
    out[i] = sum / static_cast<double>(k);
  }
  return out;
}

Vector knn_regress(const EncoderParams& params, const Matrix& labeled_x, const Vector& targets, const Matrix& test_x,
                   int k) {
  return knn_predict(encode(params, labeled_x), targets, encode(params, test_x), k);
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DataError("accuracy: size mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double mean_squared_error(const Vector& predicted, const Vector& truth) {
  if (predicted.size() != truth.size() || truth.size() == 0) throw DataError("mse: size mismatch or empty");
  return (predicted - truth).squaredNorm() / static_cast<double>(truth.size());
}

SeedStats SeedStats::from(std::vector<double> values) {
  SeedStats s;
  s.values = std::move(values);
  if (s.values.empty()) return s;
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

std::vector<std::uint64_t> seed_range(int n) {
  if (n < 1) throw ConfigError("need at least one seed");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  return seeds;
}

namespace {

std::vector<int> labels_of(const EncodedTable& t) {
  std::vector<int> out(static_cast<std::size_t>(t.rows()));
  for (Index i = 0; i < t.rows(); ++i) out[static_cast<std::size_t>(i)] = t.label(i);
  return out;
}

template <class Fn>
void for_seeds(std::span<const std::uint64_t> seeds, int threads, Fn&& fn) {
  parallel_for(seeds.size(), threads, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const Error& e) {
      throw DataError("seed " + std::to_string(seeds[i]) + ": " + e.what());
    }
  });
}

}  // namespace

FewShotResult evaluate_seeds(const DatasetSplits& splits, const Checkpoint& checkpoint, int shots,
                             std::span<const std::uint64_t> seeds, int threads) {
  if (splits.is_regression()) throw ConfigError(splits.name + " is a regression dataset; use regress");
  if (seeds.empty()) throw ConfigError("need at least one seed");
  const auto truth = labels_of(splits.test);
  const Matrix test_embed = encode(checkpoint.params, splits.test.values);
  std::vector<double> stunt(seeds.size());
  std::vector<double> raw(seeds.size());
  for_seeds(seeds, threads, [&](std::size_t i) {
    const auto labeled = sample_labeled(splits.labeled_pool, shots, seeds[i]);
    const auto labels = labels_of(labeled);
    stunt[i] = accuracy(nearest_prototype(encode(checkpoint.params, labeled.values), labels, splits.num_classes,
                                          test_embed),
                        truth);
    raw[i] = accuracy(raw_prototype_baseline(labeled.values, labels, splits.num_classes, splits.test.values), truth);
  });
  FewShotResult r;
  r.dataset = splits.name;
  r.shots = shots;
  r.seeds.assign(seeds.begin(), seeds.end());
  r.stunt = SeedStats::from(std::move(stunt));
  r.raw = SeedStats::from(std::move(raw));
  r.config_hash = checkpoint.config_hash;
  return r;
}

RegressionResult evaluate_regression(const DatasetSplits& splits, const Checkpoint& checkpoint, int shots, int k,
                                     std::span<const std::uint64_t> seeds, int threads) {
  if (!splits.is_regression()) throw ConfigError(splits.name + " is a classification dataset; use evaluate");
  if (seeds.empty()) throw ConfigError("need at least one seed");
  const Vector& truth = *splits.test.target;
  const Matrix test_embed = encode(checkpoint.params, splits.test.values);
  std::vector<double> stunt(seeds.size());
  std::vector<double> raw(seeds.size());
  for_seeds(seeds, threads, [&](std::size_t i) {
    const auto labeled = sample_labeled(splits.labeled_pool, shots, seeds[i]);
    stunt[i] = mean_squared_error(knn_predict(encode(checkpoint.params, labeled.values), *labeled.target, test_embed, k),
                                  truth);
    raw[i] = mean_squared_error(knn_predict(labeled.values, *labeled.target, splits.test.values, k), truth);
  });
  RegressionResult r;
  r.dataset = splits.name;
  r.shots = shots;
  r.k = k;
  r.seeds.assign(seeds.begin(), seeds.end());
  r.stunt = SeedStats::from(std::move(stunt));
  r.raw = SeedStats::from(std::move(raw));
  r.config_hash = checkpoint.config_hash;
  return r;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <class R>
std::string jsonl(const R& r, std::string_view metric, const nlohmann::ordered_json& extra) {
  std::string out;
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    nlohmann::ordered_json j;
    j["record"] = "seed";
    j["seed"] = r.seeds[i];
    j[std::string(metric)] = r.stunt.values[i];
    j[std::string("raw_") + std::string(metric)] = r.raw.values[i];
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json agg;
  agg["record"] = "aggregate";
  agg["dataset"] = r.dataset;
  agg["metric"] = metric;
  agg["shots"] = r.shots;
  for (const auto& [key, value] : extra.items()) agg[key] = value;
  agg["n_seeds"] = r.seeds.size();
  agg["mean"] = r.stunt.mean;
  agg["std"] = r.stunt.std;
  agg["raw_mean"] = r.raw.mean;
  agg["raw_std"] = r.raw.std;
  agg["config_hash"] = hex64(r.config_hash);
  out += agg.dump() + "\n";
  return out;
}

}  // namespace

std::string result_jsonl(const FewShotResult& r) { return jsonl(r, "accuracy", nlohmann::ordered_json::object()); }

std::string result_jsonl(const RegressionResult& r) {
  nlohmann::ordered_json extra;
  extra["k"] = r.k;
  return jsonl(r, "mse", extra);
}

ReportRow read_report_row(const std::filesystem::path& path) {
  const auto lines = detail::split_lines(detail::read_file(path));
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (detail::trim(*it).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(*it);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": " + e.what());
    }
    if (j.value("record", "") != "aggregate") break;
    try {
      ReportRow row;
      row.dataset = j.at("dataset").get<std::string>();
      row.metric = j.at("metric").get<std::string>();
      row.shots = j.at("shots").get<int>();
      row.stunt = j.at("mean").get<double>();
      row.stunt_std = j.at("std").get<double>();
      row.raw = j.at("raw_mean").get<double>();
      row.raw_std = j.at("raw_std").get<double>();
      return row;
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": " + e.what());
    }
  }
  throw LoadError(path.string() + " has no aggregate record");
}

std::string markdown_table(const std::vector<ReportRow>& rows) {
  auto cell = [](const ReportRow& r, double mean, double sd) {
    char buf[64];
    if (r.metric == "accuracy") {
      std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100.0 * mean, 100.0 * sd);
    } else {
      std::snprintf(buf, sizeof(buf), "%.3e ± %.1e", mean, sd);
    }
    return std::string(buf);
  };
  std::string out = "| Dataset | Metric | Shots | Raw | STUNT |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.dataset + " | " + r.metric + " | " + std::to_string(r.shots) + " | " + cell(r, r.raw, r.raw_std) +
           " | " + cell(r, r.stunt, r.stunt_std) + " |\n";
  }
  return out;
}

}  // namespace stunt
