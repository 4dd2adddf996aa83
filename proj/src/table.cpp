#include "stunt/table.hpp"

#include "stunt/rng.hpp"
#include "stunt/text_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace stunt {

namespace fs = std::filesystem;

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numerical: return "numerical";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::target: return "target";
  }
  return "?";
}

std::string_view to_string(ScaleMode mode) {
  return mode == ScaleMode::min_max ? "min_max" : "standardize";
}

ScaleMode parse_scale_mode(std::string_view text) {
  if (text == "min_max" || text == "minmax") return ScaleMode::min_max;
  if (text == "standardize" || text == "standard") return ScaleMode::standardize;
  throw ConfigError("unknown scaling mode '" + std::string(text) + "' (expected min_max or standardize)");
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Schema

std::size_t Schema::target_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::target) return i;
  }
  throw ConfigError("schema '" + name + "' has no target column");
}

int Schema::num_classes() const { return static_cast<int>(target().categories.size()); }

void Schema::validate() const {
  int targets = 0;
  std::set<std::string> names;
  for (const auto& col : columns) {
    if (!names.insert(col.name).second) throw ConfigError("duplicate column '" + col.name + "' in schema");
    if (col.kind == ColumnKind::target) ++targets;
    if (col.kind == ColumnKind::categorical && col.categories.empty()) {
      throw ConfigError("categorical column '" + col.name + "' has an empty category list");
    }
    std::set<std::string> seen;
    for (const auto& c : col.categories) {
      if (!seen.insert(c).second) {
        throw ConfigError("column '" + col.name + "' lists category '" + c + "' twice");
      }
    }
  }
  if (targets != 1) {
    throw ConfigError("schema must declare exactly one target column, found " + std::to_string(targets));
  }
}

Schema parse_schema(std::string_view text, const fs::path& base_dir) {
  Schema schema;
  int line_no = 0;
  for (const auto& entry : detail::parse_key_values(text, "schema")) {
    line_no = entry.line;
    const auto& key = entry.key;
    const auto& value = entry.value;
    if (key == "name") {
      schema.name = value;
    } else if (key == "scaling") {
      schema.scaling = parse_scale_mode(value);
    } else if (key == "predefined_test") {
      schema.predefined_test = base_dir / fs::path(value);
    } else if (key.starts_with("column.")) {
      ColumnSchema col;
      col.name = key.substr(7);
      const auto colon = value.find(':');
      const std::string kind = detail::trim(value.substr(0, colon));
      if (kind == "numerical") {
        col.kind = ColumnKind::numerical;
      } else if (kind == "categorical") {
        col.kind = ColumnKind::categorical;
      } else if (kind == "target") {
        col.kind = ColumnKind::target;
      } else {
        throw ConfigError("schema line " + std::to_string(line_no) + ": unknown column kind '" + kind + "'");
      }
      if (colon != std::string::npos) {
        for (auto& c : detail::split(value.substr(colon + 1), ',')) {
          col.categories.push_back(detail::trim(c));
        }
      }
      if (col.kind == ColumnKind::numerical && !col.categories.empty()) {
        throw ConfigError("schema line " + std::to_string(line_no) + ": numerical column '" + col.name +
                          "' cannot list categories");
      }
      schema.columns.push_back(std::move(col));
    } else {
      throw ConfigError("schema line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  schema.validate();
  return schema;
}

Schema load_schema(const fs::path& path) {
  auto schema = parse_schema(detail::read_file(path), path.parent_path());
  if (schema.name.empty()) schema.name = path.stem().string();
  return schema;
}

// ---------------------------------------------------------------------------
// CSV

RawTable parse_csv(std::string_view text, const Schema& schema, std::string_view source) {
  const auto lines = detail::split_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && detail::trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw LoadError(std::string(source) + ": file is empty");

  const auto header = detail::split_csv_row(lines[first]);
  std::map<std::string, std::size_t> header_pos;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = detail::trim(header[i]);
    if (!header_pos.emplace(name, i).second) {
      throw LoadError(std::string(source) + ": duplicate header column '" + name + "'");
    }
  }
  std::vector<std::size_t> source_col(schema.columns.size());
  for (std::size_t j = 0; j < schema.columns.size(); ++j) {
    auto it = header_pos.find(schema.columns[j].name);
    if (it == header_pos.end()) {
      throw LoadError(std::string(source) + ": missing column '" + schema.columns[j].name + "'");
    }
    source_col[j] = it->second;
  }
  if (header_pos.size() != schema.columns.size()) {
    for (const auto& [name, pos] : header_pos) {
      bool known = std::any_of(schema.columns.begin(), schema.columns.end(),
                               [&](const ColumnSchema& c) { return c.name == name; });
      if (!known) throw LoadError(std::string(source) + ": column '" + name + "' is not in the schema");
    }
  }

  std::vector<std::map<std::string, int, std::less<>>> lookup(schema.columns.size());
  for (std::size_t j = 0; j < schema.columns.size(); ++j) {
    const auto& cats = schema.columns[j].categories;
    for (std::size_t c = 0; c < cats.size(); ++c) lookup[j].emplace(cats[c], static_cast<int>(c));
  }
  const bool regression = schema.is_regression();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_of_row;
  for (std::size_t l = first + 1; l < lines.size(); ++l) {
    if (detail::trim(lines[l]).empty()) continue;
    rows.push_back(detail::split_csv_row(lines[l]));
    line_of_row.push_back(l + 1);
  }

  RawTable raw;
  raw.columns = schema.columns;
  raw.cells.resize(static_cast<Index>(rows.size()), static_cast<Index>(schema.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto where = [&](std::size_t j) {
      return std::string(source) + ": line " + std::to_string(line_of_row[r]) + ", column '" +
             schema.columns[j].name + "'";
    };
    if (rows[r].size() != header.size()) {
      throw LoadError(std::string(source) + ": line " + std::to_string(line_of_row[r]) + " has " +
                      std::to_string(rows[r].size()) + " fields, header has " + std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      const auto cell = detail::trim(rows[r][source_col[j]]);
      const auto& col = schema.columns[j];
      double value = 0.0;
      const bool numeric = col.kind == ColumnKind::numerical || (col.kind == ColumnKind::target && regression);
      if (numeric) {
        auto parsed = detail::parse_double(cell);
        if (!parsed) throw LoadError(where(j) + ": cannot parse '" + cell + "' as a number");
        if (!std::isfinite(*parsed)) throw LoadError(where(j) + ": non-finite value '" + cell + "'");
        value = *parsed;
      } else {
        auto it = lookup[j].find(cell);
        if (it == lookup[j].end()) throw LoadError(where(j) + ": unknown category '" + cell + "'");
        value = it->second;
      }
      raw.cells(static_cast<Index>(r), static_cast<Index>(j)) = value;
    }
  }
  return raw;
}

RawTable load_csv(const fs::path& path, const Schema& schema) {
  if (!fs::exists(path)) throw LoadError("file not found: " + path.string());
  return parse_csv(detail::read_file(path), schema, path.string());
}

// ---------------------------------------------------------------------------
// Encoding

EncodedTable encode(const RawTable& raw) {
  EncodedTable out;
  std::optional<std::size_t> target_col;
  std::vector<Index> offsets;
  Index width = 0;
  for (std::size_t j = 0; j < raw.columns.size(); ++j) {
    const auto& col = raw.columns[j];
    offsets.push_back(width);
    switch (col.kind) {
      case ColumnKind::numerical:
        out.feature_origin.push_back(j);
        out.feature_names.push_back(col.name);
        out.one_hot.push_back(false);
        ++width;
        break;
      case ColumnKind::categorical:
        for (const auto& cat : col.categories) {
          out.feature_origin.push_back(j);
          out.feature_names.push_back(col.name + "=" + cat);
          out.one_hot.push_back(true);
        }
        width += static_cast<Index>(col.categories.size());
        break;
      case ColumnKind::target:
        target_col = j;
        break;
    }
  }

  const Index n = raw.cells.rows();
  out.values = Matrix::Zero(n, width);
  for (std::size_t j = 0; j < raw.columns.size(); ++j) {
    const auto& col = raw.columns[j];
    const auto src = static_cast<Index>(j);
    if (col.kind == ColumnKind::numerical) {
      out.values.col(offsets[j]) = raw.cells.col(src);
    } else if (col.kind == ColumnKind::categorical) {
      for (Index r = 0; r < n; ++r) {
        out.values(r, offsets[j] + static_cast<Index>(raw.cells(r, src))) = 1.0;
      }
    }
  }
  if (target_col) {
    out.target = raw.cells.col(static_cast<Index>(*target_col));
    out.num_classes = static_cast<int>(raw.columns[*target_col].categories.size());
  }
  out.row_ids.resize(static_cast<std::size_t>(n));
  std::iota(out.row_ids.begin(), out.row_ids.end(), std::size_t{0});
  return out;
}

EncodedTable EncodedTable::select_rows(std::span<const std::size_t> rows) const {
  EncodedTable out;
  out.feature_origin = feature_origin;
  out.feature_names = feature_names;
  out.one_hot = one_hot;
  out.num_classes = num_classes;
  out.values.resize(static_cast<Index>(rows.size()), dims());
  if (target) out.target = Vector(static_cast<Index>(rows.size()));
  out.row_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Index>(rows[i]);
    if (r >= this->rows()) throw DataError("row index out of range in select_rows");
    out.values.row(static_cast<Index>(i)) = values.row(r);
    if (target) (*out.target)[static_cast<Index>(i)] = (*target)[r];
    out.row_ids.push_back(row_ids.empty() ? rows[i] : row_ids[rows[i]]);
  }
  return out;
}

EncodedTable EncodedTable::without_target() const {
  EncodedTable out = *this;
  out.target.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Scaling

ScalerStats fit_scaler(const EncodedTable& table, ScaleMode mode) {
  if (table.rows() == 0) throw DataError("cannot fit a scaler on an empty table");
  ScalerStats stats;
  stats.mode = mode;
  stats.scaled.resize(static_cast<std::size_t>(table.dims()));
  for (std::size_t j = 0; j < stats.scaled.size(); ++j) {
    stats.scaled[j] = j >= table.one_hot.size() || !table.one_hot[j];
  }
  const Index d = table.dims();
  stats.offset = Vector::Zero(d);
  stats.scale = Vector::Ones(d);
  const auto n = static_cast<double>(table.rows());
  for (Index j = 0; j < d; ++j) {
    if (!stats.scaled[static_cast<std::size_t>(j)]) continue;
    const auto col = table.values.col(j);
    if (mode == ScaleMode::min_max) {
      const double lo = col.minCoeff();
      const double hi = col.maxCoeff();
      stats.offset[j] = lo;
      stats.scale[j] = hi - lo;
    } else {
      const double mean = col.sum() / n;
      const double var = (col.array() - mean).square().sum() / n;
      stats.offset[j] = mean;
      stats.scale[j] = std::sqrt(var);
    }
  }
  if (table.is_regression()) {
    stats.target_range = std::make_pair(table.target->minCoeff(), table.target->maxCoeff());
  }
  return stats;
}

EncodedTable apply_scaler(const EncodedTable& table, const ScalerStats& stats) {
  if (stats.offset.size() != table.dims()) {
    throw DataError("scaler was fit on " + std::to_string(stats.offset.size()) + " columns, table has " +
                    std::to_string(table.dims()));
  }
  EncodedTable out = table;
  for (Index j = 0; j < table.dims(); ++j) {
    if (!stats.scaled[static_cast<std::size_t>(j)]) continue;
    auto col = out.values.col(j);
    if (stats.scale[j] == 0.0) {
      col.setZero();
    } else {
      col = (col.array() - stats.offset[j]) / stats.scale[j];
    }
  }
  if (stats.target_range && out.target) {
    const auto [lo, hi] = *stats.target_range;
    if (hi > lo) {
      *out.target = (out.target->array() - lo) / (hi - lo);
    } else {
      out.target->setZero();
    }
  }
  return out;
}

std::pair<EncodedTable, ScalerStats> fit_and_scale(const EncodedTable& table, ScaleMode mode) {
  auto stats = fit_scaler(table, mode);
  return {apply_scaler(table, stats), std::move(stats)};
}

// ---------------------------------------------------------------------------
// Splits

DatasetSplits make_splits(const EncodedTable& table, std::uint64_t seed, const EncodedTable* predefined_test) {
  const auto n = static_cast<std::size_t>(table.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "splits"));
  rng.shuffle(std::span(perm));

  DatasetSplits splits;
  splits.seed = seed;
  splits.num_classes = table.num_classes;

  std::vector<std::size_t> train;
  if (predefined_test) {
    train = perm;
  } else {
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * kTestFraction));
    splits.indices.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  }
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(train.size()) * kPseudoValFraction));
  splits.indices.pseudo_val.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  splits.indices.train_unlabeled.assign(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());

  std::sort(splits.indices.test.begin(), splits.indices.test.end());
  std::sort(splits.indices.pseudo_val.begin(), splits.indices.pseudo_val.end());
  std::sort(splits.indices.train_unlabeled.begin(), splits.indices.train_unlabeled.end());

  const bool empty_test = predefined_test ? predefined_test->rows() == 0 : splits.indices.test.empty();
  if (splits.indices.train_unlabeled.empty() || splits.indices.pseudo_val.empty() || empty_test) {
    throw DataError("table with " + std::to_string(n) +
                    " rows is too small to form non-empty train / pseudo-validation / test splits");
  }

  splits.train_unlabeled = table.select_rows(splits.indices.train_unlabeled).without_target();
  splits.pseudo_val = table.select_rows(splits.indices.pseudo_val).without_target();
  std::sort(train.begin(), train.end());
  splits.labeled_pool = table.select_rows(train);
  if (predefined_test) {
    splits.test = *predefined_test;
    splits.indices.test.resize(static_cast<std::size_t>(predefined_test->rows()));
    std::iota(splits.indices.test.begin(), splits.indices.test.end(), std::size_t{0});
  } else {
    splits.test = table.select_rows(splits.indices.test);
  }
  return splits;
}

void scale_splits(DatasetSplits& splits, ScaleMode mode) {
  auto stats = fit_scaler(splits.labeled_pool, mode);
  splits.train_unlabeled = apply_scaler(splits.train_unlabeled, stats);
  splits.pseudo_val = apply_scaler(splits.pseudo_val, stats);
  splits.test = apply_scaler(splits.test, stats);
  splits.labeled_pool = apply_scaler(splits.labeled_pool, stats);
  splits.scaler = std::move(stats);
}

DatasetSplits prepare_dataset(const fs::path& csv, const Schema& schema, ScaleMode mode, std::uint64_t seed) {
  const auto table = encode(load_csv(csv, schema));
  std::optional<EncodedTable> test;
  if (schema.predefined_test) test = encode(load_csv(*schema.predefined_test, schema));
  auto splits = make_splits(table, seed, test ? &*test : nullptr);
  splits.name = schema.name;
  scale_splits(splits, mode);
  return splits;
}

// ---------------------------------------------------------------------------
// Few-shot labeled draws

EncodedTable sample_labeled(const EncodedTable& pool, int shots_per_class, std::uint64_t seed) {
  if (!pool.target) throw DataError("labeled pool has no target column");
  if (shots_per_class < 1) throw DataError("shots_per_class must be >= 1");
  const auto n = static_cast<std::size_t>(pool.rows());

  std::vector<std::vector<std::size_t>> groups;
  std::string unit = "class";
  if (pool.num_classes > 0) {
    groups.resize(static_cast<std::size_t>(pool.num_classes));
    for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(pool.label(static_cast<Index>(i)))].push_back(i);
  } else {
    unit = "target stratum";
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return (*pool.target)[static_cast<Index>(a)] < (*pool.target)[static_cast<Index>(b)];
    });
    groups.resize(kRegressionStrata);
    for (std::size_t rank = 0; rank < n; ++rank) {
      groups[rank * kRegressionStrata / n].push_back(order[rank]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
  }

  Rng rng(seed);
  const auto shots = static_cast<std::size_t>(shots_per_class);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& members = groups[c];
    if (members.size() < shots) {
      throw DataError(unit + " " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " rows in the labeled pool, " + std::to_string(shots) + " needed");
    }
    rng.partial_shuffle(std::span(members), shots);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(shots));
  }
  return pool.select_rows(chosen);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_table_csv(const fs::path& path, const EncodedTable& table, bool with_target) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  for (std::size_t j = 0; j < table.feature_names.size(); ++j) {
    if (j) out << ',';
    out << detail::csv_quote(table.feature_names[j]);
  }
  if (with_target) out << (table.feature_names.empty() ? "" : ",") << "target";
  out << '\n';
  for (Index r = 0; r < table.rows(); ++r) {
    for (Index j = 0; j < table.dims(); ++j) {
      if (j) out << ',';
      out << format_double(table.values(r, j));
    }
    if (with_target) out << (table.dims() ? "," : "") << format_double((*table.target)[r]);
    out << '\n';
  }
}

EncodedTable read_table_csv(const fs::path& path, bool with_target, const std::vector<std::string>& names) {
  if (!fs::exists(path)) throw LoadError("missing split file " + path.string());
  const auto text = detail::read_file(path);
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw LoadError(path.string() + ": empty split file");
  const auto header = detail::split_csv_row(lines[0]);
  const std::size_t expected = names.size() + (with_target ? 1 : 0);
  if (header.size() != expected) {
    throw LoadError(path.string() + ": header has " + std::to_string(header.size()) + " columns, expected " +
                    std::to_string(expected));
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (detail::trim(lines[l]).empty()) continue;
    const auto cells = detail::split_csv_row(lines[l]);
    if (cells.size() != expected) {
      throw LoadError(path.string() + ": line " + std::to_string(l + 1) + " has the wrong number of fields");
    }
    std::vector<double> row;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      auto v = detail::parse_double(detail::trim(cells[j]));
      if (!v) throw LoadError(path.string() + ": line " + std::to_string(l + 1) + ", column " + header[j] + ": bad number");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  EncodedTable table;
  table.feature_names = names;
  const auto d = static_cast<Index>(names.size());
  table.values.resize(static_cast<Index>(rows.size()), d);
  if (with_target) table.target = Vector(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Index j = 0; j < d; ++j) table.values(static_cast<Index>(r), j) = rows[r][static_cast<std::size_t>(j)];
    if (with_target) (*table.target)[static_cast<Index>(r)] = rows[r].back();
  }
  return table;
}

template <class Seq>
std::string join_numbers(const Seq& seq) {
  std::string out;
  for (const auto& v : seq) {
    if (!out.empty()) out += ' ';
    out += std::to_string(v);
  }
  return out;
}

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::size_t v;
  while (in >> v) out.push_back(v);
  return out;
}

}  // namespace

void write_splits(const fs::path& dir, const DatasetSplits& splits) {
  fs::create_directories(dir);
  write_table_csv(dir / "train_unlabeled.csv", splits.train_unlabeled, false);
  write_table_csv(dir / "pseudo_val.csv", splits.pseudo_val, false);
  write_table_csv(dir / "test.csv", splits.test, true);
  write_table_csv(dir / "labeled_pool.csv", splits.labeled_pool, true);

  {
    std::ofstream out(dir / "dataset.txt", std::ios::binary);
    out << "name = " << splits.name << '\n';
    out << "task = " << (splits.is_regression() ? "regression" : "classification") << '\n';
    out << "num_classes = " << splits.num_classes << '\n';
    out << "dims = " << splits.train_unlabeled.dims() << '\n';
    out << "feature_origin = " << join_numbers(splits.train_unlabeled.feature_origin) << '\n';
    out << "one_hot = " << join_numbers(splits.train_unlabeled.one_hot) << '\n';
  }
  if (splits.scaler) {
    const auto& s = *splits.scaler;
    std::ofstream out(dir / "scaler.txt", std::ios::binary);
    out << "mode = " << to_string(s.mode) << '\n';
    for (Index j = 0; j < s.offset.size(); ++j) {
      out << "column." << j << " = " << (s.scaled[static_cast<std::size_t>(j)] ? "scaled " : "passthrough ")
          << format_double(s.offset[j]) << ' ' << format_double(s.scale[j]) << '\n';
    }
    if (s.target_range) {
      out << "target_range = " << format_double(s.target_range->first) << ' '
          << format_double(s.target_range->second) << '\n';
    }
  }
  {
    std::ofstream out(dir / "split_manifest.txt", std::ios::binary);
    out << "seed = " << splits.seed << '\n';
    out << "test_fraction = " << format_double(kTestFraction) << '\n';
    out << "pseudo_val_fraction = " << format_double(kPseudoValFraction) << '\n';
    out << "train_unlabeled = " << join_numbers(splits.train_unlabeled.row_ids) << '\n';
    out << "pseudo_val = " << join_numbers(splits.pseudo_val.row_ids) << '\n';
    out << "test = " << join_numbers(splits.test.row_ids) << '\n';
  }
}

DatasetSplits read_splits(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("splits directory not found: " + dir.string());
  const auto meta_path = dir / "dataset.txt";
  if (!fs::exists(meta_path)) throw LoadError("missing " + meta_path.string());
  std::map<std::string, std::string> meta;
  for (auto& kv : detail::parse_key_values(detail::read_file(meta_path), meta_path.string())) meta[kv.key] = kv.value;

  DatasetSplits splits;
  splits.name = meta["name"];
  const bool regression = meta["task"] == "regression";
  splits.num_classes = regression ? 0 : std::stoi(meta.at("num_classes"));

  // Feature names come from the header of train_unlabeled.csv.
  const auto header_text = detail::read_file(dir / "train_unlabeled.csv");
  const auto header_lines = detail::split_lines(header_text);
  if (header_lines.empty()) throw LoadError("empty train_unlabeled.csv");
  std::vector<std::string> names;
  for (auto& h : detail::split_csv_row(header_lines[0])) names.push_back(detail::trim(h));
  const auto origin = parse_indices(meta["feature_origin"]);
  std::vector<bool> one_hot;
  for (auto flag : parse_indices(meta["one_hot"])) one_hot.push_back(flag != 0);

  auto finish = [&](EncodedTable t) {
    t.feature_origin = origin;
    t.one_hot = one_hot;
    t.num_classes = splits.num_classes;
    return t;
  };
  splits.train_unlabeled = finish(read_table_csv(dir / "train_unlabeled.csv", false, names));
  splits.pseudo_val = finish(read_table_csv(dir / "pseudo_val.csv", false, names));
  splits.test = finish(read_table_csv(dir / "test.csv", true, names));
  splits.labeled_pool = finish(read_table_csv(dir / "labeled_pool.csv", true, names));

  const auto manifest_path = dir / "split_manifest.txt";
  if (fs::exists(manifest_path)) {
    std::map<std::string, std::string> m;
    for (auto& kv : detail::parse_key_values(detail::read_file(manifest_path), manifest_path.string())) m[kv.key] = kv.value;
    splits.seed = std::stoull(m["seed"]);
    splits.indices.train_unlabeled = parse_indices(m["train_unlabeled"]);
    splits.indices.pseudo_val = parse_indices(m["pseudo_val"]);
    splits.indices.test = parse_indices(m["test"]);
    splits.train_unlabeled.row_ids = splits.indices.train_unlabeled;
    splits.pseudo_val.row_ids = splits.indices.pseudo_val;
    splits.test.row_ids = splits.indices.test;
  }

  const auto scaler_path = dir / "scaler.txt";
  if (fs::exists(scaler_path)) {
    ScalerStats s;
    const auto d = static_cast<Index>(names.size());
    s.offset = Vector::Zero(d);
    s.scale = Vector::Ones(d);
    s.scaled.assign(names.size(), false);
    const auto bad = [&](const detail::KeyValue& kv) {
      return LoadError(scaler_path.string() + " line " + std::to_string(kv.line) + ": malformed '" + kv.key + "'");
    };
    for (const auto& kv : detail::parse_key_values(detail::read_file(scaler_path), scaler_path.string())) {
      const auto parts = detail::split(kv.value, ' ');
      if (kv.key == "mode") {
        s.mode = parse_scale_mode(kv.value);
      } else if (kv.key.rfind("column.", 0) == 0) {
        const auto j = detail::parse_double(kv.key.substr(7));
        if (!j || *j < 0 || *j >= static_cast<double>(d) || parts.size() != 3) throw bad(kv);
        const auto off = detail::parse_double(parts[1]);
        const auto sc = detail::parse_double(parts[2]);
        if (!off || !sc) throw bad(kv);
        const auto col = static_cast<Index>(*j);
        s.scaled[static_cast<std::size_t>(col)] = parts[0] == "scaled";
        s.offset[col] = *off;
        s.scale[col] = *sc;
      } else if (kv.key == "target_range") {
        const auto lo = parts.size() == 2 ? detail::parse_double(parts[0]) : std::nullopt;
        const auto hi = parts.size() == 2 ? detail::parse_double(parts[1]) : std::nullopt;
        if (!lo || !hi) throw bad(kv);
        s.target_range = std::make_pair(*lo, *hi);
      }
    }
    splits.scaler = std::move(s);
  }
  return splits;
}

}  // namespace stunt
