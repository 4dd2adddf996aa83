#include "stunt/tasks.hpp"

#include "stunt/table.hpp"
#include "stunt/text_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace stunt {

std::size_t FeatureMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<Index> FeatureMask::selected() const {
  std::vector<Index> out;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j]) out.push_back(static_cast<Index>(j));
  }
  return out;
}

FeatureMask FeatureMask::full(Index d) {
  FeatureMask m;
  m.bits.assign(static_cast<std::size_t>(d), 1);
  m.ratio = 1.0;
  return m;
}

FeatureMask sample_mask(Index d, double r1, double r2, Rng& rng) {
  if (!(r1 > 0.0 && r1 < r2 && r2 < 1.0)) {
    throw ConfigError("masking ratio range must satisfy 0 < r1 < r2 < 1, got [" + std::to_string(r1) + ", " +
                      std::to_string(r2) + ")");
  }
  if (d < 2) throw DataError("masking needs at least 2 features, got " + std::to_string(d));
  if (std::floor(static_cast<double>(d) * r1) < 1.0) {
    throw DataError("r1 = " + std::to_string(r1) + " masks no feature of a " + std::to_string(d) + "-dim table");
  }
  FeatureMask mask;
  mask.ratio = rng.uniform(r1, r2);
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(d) * mask.ratio));
  std::vector<Index> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.partial_shuffle(std::span<Index>(perm), count);
  mask.bits.assign(static_cast<std::size_t>(d), 0);
  for (std::size_t i = 0; i < count; ++i) mask.bits[static_cast<std::size_t>(perm[i])] = 1;
  return mask;
}

Matrix squeeze(const Matrix& x, const FeatureMask& mask) {
  if (x.cols() != mask.size()) {
    throw DataError("mask has " + std::to_string(mask.size()) + " positions, table " + std::to_string(x.cols()) +
                    " columns");
  }
  const auto cols = mask.selected();
  Matrix out(x.rows(), static_cast<Index>(cols.size()));
  for (Index i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) out(i, static_cast<Index>(c)) = x(i, cols[c]);
  }
  return out;
}

std::string_view to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::marginal: return "marginal";
    case MaskStrategy::zero: return "zero";
    case MaskStrategy::gaussian: return "gaussian";
    case MaskStrategy::none: return "none";
  }
  return "?";
}

MaskStrategy parse_mask_strategy(std::string_view text) {
  for (auto s : {MaskStrategy::marginal, MaskStrategy::zero, MaskStrategy::gaussian, MaskStrategy::none}) {
    if (text == to_string(s)) return s;
  }
  throw ConfigError("unknown mask strategy '" + std::string(text) + "' (marginal, zero, gaussian, none)");
}

void CorruptionPlan::corrupt_row(const Matrix& clean, Index row, double* out) const {
  const Index d = clean.cols();
  const auto n = static_cast<std::uint64_t>(clean.rows());
  for (Index j = 0; j < d; ++j) {
    const double x = clean(row, j);
    if (!mask_.bits[static_cast<std::size_t>(j)]) {
      out[j] = x;
      continue;
    }
    const std::uint64_t h = derive_seed(seed_, "cell", static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(j));
    switch (corruption_.strategy) {
      case MaskStrategy::marginal:
        out[j] = clean(static_cast<Index>(bits_to_index(h, n)), j);
        break;
      case MaskStrategy::zero:
        out[j] = 0.0;
        break;
      case MaskStrategy::gaussian: {
        // Box-Muller from two counter-derived uniforms.
        const double u1 = 1.0 - bits_to_unit(h);
        const double u2 = bits_to_unit(mix64(h));
        out[j] = x + corruption_.sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        break;
      }
      case MaskStrategy::none:
        out[j] = x;
        break;
    }
  }
}

Matrix CorruptionPlan::apply(const Matrix& clean) const {
  if (clean.cols() != mask_.size()) throw DataError("corruption: mask does not match table width");
  Matrix out(clean.rows(), clean.cols());
  for (Index i = 0; i < clean.rows(); ++i) corrupt_row(clean, i, out.row(i).data());
  return out;
}

Matrix CorruptionPlan::apply_rows(const Matrix& clean, std::span<const Index> rows) const {
  if (clean.cols() != mask_.size()) throw DataError("corruption: mask does not match table width");
  Matrix out(static_cast<Index>(rows.size()), clean.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= clean.rows()) throw DataError("corruption: row index out of range");
    corrupt_row(clean, rows[r], out.row(static_cast<Index>(r)).data());
  }
  return out;
}

Matrix corrupt(const Matrix& clean, const FeatureMask& mask, const Corruption& corruption, Rng& rng) {
  return CorruptionPlan(mask, corruption, rng.next()).apply(clean);
}

namespace {

StuntTask label_task(const Matrix& unlabeled, FeatureMask mask, int way, const Corruption& corruption,
                     const KMeansOptions& kmeans_options, Rng& rng) {
  if (way < 2) throw ConfigError("way must be >= 2, got " + std::to_string(way));
  StuntTask task;
  task.way = way;
  const auto cluster_seed = rng.next();
  auto clustering = kmeans(squeeze(unlabeled, mask), way, cluster_seed, kmeans_options);
  task.pseudo_labels = std::move(clustering.assignments);
  task.centroids = std::move(clustering.centroids);
  task.corruption = CorruptionPlan(mask, corruption, rng.next());
  task.mask = std::move(mask);
  return task;
}

}  // namespace

StuntTask generate_stunt_task(const Matrix& unlabeled, const FeatureMask& mask, int way,
                              const Corruption& corruption, const KMeansOptions& kmeans, Rng& rng) {
  auto task = label_task(unlabeled, mask, way, corruption, kmeans, rng);
  task.inputs = task.corruption.apply(unlabeled);
  return task;
}

StuntTask generate_stunt_task(const Matrix& unlabeled, const TaskOptions& options, Rng& rng) {
  auto mask = sample_mask(unlabeled.cols(), options.r1, options.r2, rng);
  return generate_stunt_task(unlabeled, mask, options.way, options.corruption, options.kmeans, rng);
}

StuntTask generate_task_labels(const Matrix& unlabeled, const TaskOptions& options, Rng& rng) {
  auto mask = sample_mask(unlabeled.cols(), options.r1, options.r2, rng);
  return label_task(unlabeled, std::move(mask), options.way, options.corruption, options.kmeans, rng);
}

EpisodeRows sample_episode_rows(std::span<const int> labels, int way, int shot, int query_per_class, Rng& rng) {
  if (shot < 1 || query_per_class < 1) throw ConfigError("shot and query must be >= 1");
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(way));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= way) throw DataError("label " + std::to_string(c) + " outside [0, way)");
    members[static_cast<std::size_t>(c)].push_back(static_cast<Index>(i));
  }
  const auto need = static_cast<std::size_t>(shot + query_per_class);
  EpisodeRows ep;
  ep.shot = shot;
  ep.query_per_class = query_per_class;
  for (int c = 0; c < way; ++c) {
    if (members[static_cast<std::size_t>(c)].size() >= need) ep.classes.push_back(c);
  }
  if (ep.classes.size() < 2) {
    throw EpisodeError("only " + std::to_string(ep.classes.size()) + " pseudo-classes have " + std::to_string(need) +
                       " members");
  }
  for (int e = 0; e < ep.way(); ++e) {
    auto& pool = members[static_cast<std::size_t>(ep.classes[static_cast<std::size_t>(e)])];
    rng.partial_shuffle(std::span<Index>(pool), need);
    for (int s = 0; s < shot; ++s) {
      ep.support_rows.push_back(pool[static_cast<std::size_t>(s)]);
      ep.support_labels.push_back(e);
    }
    for (std::size_t q = static_cast<std::size_t>(shot); q < need; ++q) {
      ep.query_rows.push_back(pool[q]);
      ep.query_labels.push_back(e);
    }
  }
  return ep;
}

namespace {

Matrix gather(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

}  // namespace

Episode sample_episode(const StuntTask& task, int shot, int query_per_class, Rng& rng) {
  if (!task.materialized()) throw DataError("task inputs were not materialized");
  Episode ep;
  static_cast<EpisodeRows&>(ep) = sample_episode_rows(task.pseudo_labels, task.way, shot, query_per_class, rng);
  ep.support = gather(task.inputs, ep.support_rows);
  ep.query = gather(task.inputs, ep.query_rows);
  return ep;
}

Episode sample_episode(const StuntTask& task, const Matrix& clean, int shot, int query_per_class, Rng& rng) {
  if (clean.rows() != static_cast<Index>(task.pseudo_labels.size())) {
    throw DataError("table does not match the task it was generated from");
  }
  Episode ep;
  static_cast<EpisodeRows&>(ep) = sample_episode_rows(task.pseudo_labels, task.way, shot, query_per_class, rng);
  ep.support = task.corruption.apply_rows(clean, ep.support_rows);
  ep.query = task.corruption.apply_rows(clean, ep.query_rows);
  return ep;
}

TaskEpisode generate_episode(const Matrix& unlabeled, const TaskOptions& options, int shot, int query_per_class,
                             Rng& rng) {
  for (int attempt = 1; attempt <= kMaxTaskAttempts; ++attempt) {
    auto task = generate_task_labels(unlabeled, options, rng);
    try {
      auto ep = sample_episode(task, unlabeled, shot, query_per_class, rng);
      return TaskEpisode{std::move(task), std::move(ep), attempt};
    } catch (const EpisodeError&) {
    }
  }
  throw DataError("no " + std::to_string(shot) + "-shot episode with " + std::to_string(query_per_class) +
                  " queries could be formed after " + std::to_string(kMaxTaskAttempts) + " generated tasks");
}

StuntTask build_pseudo_val_task(const Matrix& validation, int num_classes, Rng& rng, const KMeansOptions& kmeans) {
  auto task = label_task(validation, FeatureMask::full(validation.cols()), num_classes,
                         Corruption{MaskStrategy::none, 0.0}, kmeans, rng);
  task.inputs = validation;
  return task;
}

void write_task_csv(const std::filesystem::path& path, const StuntTask& task) {
  if (!task.materialized()) throw DataError("task inputs were not materialized");
  std::string out;
  for (Index j = 0; j < task.inputs.cols(); ++j) out += "x" + std::to_string(j) + ",";
  out += "pseudo_label\n";
  for (Index i = 0; i < task.inputs.rows(); ++i) {
    for (Index j = 0; j < task.inputs.cols(); ++j) out += format_double(task.inputs(i, j)) + ",";
    out += std::to_string(task.pseudo_labels[static_cast<std::size_t>(i)]) + "\n";
  }
  detail::write_file(path, out);
}

}  // namespace stunt
