#include "stunt/table.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace stunt;
namespace fs = std::filesystem;

namespace {

const char* kSchema = R"(name = toy
scaling = min_max
column.age = numerical
column.color = categorical: red, green, blue
column.label = target: no, yes
)";

std::string toy_csv(int rows) {
  std::string out = "color,age,label\n";
  const char* colors[] = {"red", "green", "blue"};
  for (int i = 0; i < rows; ++i) {
    out += std::string(colors[i % 3]) + "," + std::to_string(10 + i) + "," + (i % 2 ? "yes" : "no") + "\n";
  }
  return out;
}

EncodedTable toy_table(int rows) {
  const auto schema = parse_schema(kSchema);
  return encode(parse_csv(toy_csv(rows), schema));
}

}  // namespace

TEST_CASE("schema parsing") {
  const auto s = parse_schema(kSchema);
  CHECK(s.name == "toy");
  CHECK(s.columns.size() == 3);
  CHECK(s.num_classes() == 2);
  CHECK_FALSE(s.is_regression());
  CHECK(s.columns[1].categories == std::vector<std::string>{"red", "green", "blue"});

  CHECK_THROWS_AS(parse_schema("column.a = numerical\n"), ConfigError);  // no target
  CHECK_THROWS_AS(parse_schema("column.a = target\ncolumn.b = target\n"), ConfigError);
  CHECK_THROWS_AS(parse_schema("column.a = target: x, x\n"), ConfigError);
  CHECK_THROWS_AS(parse_schema("column.a = weird\ncolumn.b = target\n"), ConfigError);
  CHECK(parse_schema("column.a = numerical\ncolumn.y = target\n").is_regression());
}

TEST_CASE("csv loading reports line and column") {
  const auto schema = parse_schema(kSchema);
  CHECK_THROWS_WITH_AS(parse_csv("color,age,label\nred,abc,no\n", schema), doctest::Contains("line 2"), LoadError);
  CHECK_THROWS_WITH_AS(parse_csv("color,age,label\npurple,1,no\n", schema), doctest::Contains("color"), LoadError);
  CHECK_THROWS_AS(parse_csv("color,age\nred,1\n", schema), LoadError);
  CHECK_THROWS_AS(parse_csv("color,age,label\nred,nan,no\n", schema), LoadError);
  CHECK_THROWS_AS(parse_csv("color,age,label\nred,1\n", schema), LoadError);
}

TEST_CASE("one-hot blocks sum to one per row") {
  const auto t = toy_table(9);
  REQUIRE(t.dims() == 4);
  CHECK(t.feature_names[1] == "color=red");
  CHECK(t.feature_origin == std::vector<std::size_t>{0, 1, 1, 1});
  for (Index i = 0; i < t.rows(); ++i) CHECK(t.values.row(i).tail(3).sum() == 1.0);
  CHECK(t.values(1, 2) == 1.0);  // row 1 is green
  CHECK(t.label(1) == 1);
}

TEST_CASE("min-max scaling is fit on the given rows only") {
  const auto t = toy_table(10);
  std::vector<std::size_t> first{0, 1, 2, 3, 4};
  const auto train = t.select_rows(first);
  const auto stats = fit_scaler(train, ScaleMode::min_max);
  const auto scaled = apply_scaler(t, stats);
  // age 10..14 on the fitted rows -> [0, 1]; later rows fall above 1
  CHECK(scaled.values(0, 0) == 0.0);
  CHECK(scaled.values(4, 0) == 1.0);
  CHECK(scaled.values(9, 0) == doctest::Approx(9.0 / 4.0));
  // one-hot columns untouched
  CHECK(scaled.values.rightCols(3) == t.values.rightCols(3));
}

TEST_CASE("standardize uses the population std") {
  const auto t = toy_table(4);  // ages 10..13
  const auto [scaled, stats] = fit_and_scale(t, ScaleMode::standardize);
  const double mean = 11.5;
  const double sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 4.0);
  CHECK(stats.offset[0] == doctest::Approx(mean));
  CHECK(stats.scale[0] == doctest::Approx(sd));
  CHECK(scaled.values.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("splits are disjoint, sized by rounding and deterministic") {
  const auto t = toy_table(103);
  const auto a = make_splits(t, 7);
  const auto b = make_splits(t, 7);
  const auto c = make_splits(t, 8);
  const std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * 103));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(103 - n_test)));
  CHECK(a.indices.test.size() == n_test);
  CHECK(a.indices.pseudo_val.size() == n_val);
  CHECK(a.indices.train_unlabeled.size() == 103 - n_test - n_val);
  std::set<std::size_t> all;
  for (auto* v : {&a.indices.test, &a.indices.pseudo_val, &a.indices.train_unlabeled}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 103);
  CHECK(a.indices.test == b.indices.test);
  CHECK(a.indices.test != c.indices.test);
  CHECK_FALSE(a.train_unlabeled.target.has_value());
  CHECK_FALSE(a.pseudo_val.target.has_value());
  CHECK(a.labeled_pool.rows() == static_cast<Index>(103 - n_test));
}

TEST_CASE("few-shot draws are exact per class and seed-deterministic") {
  const auto t = toy_table(40);
  const auto a = sample_labeled(t, 3, 5);
  const auto b = sample_labeled(t, 3, 5);
  REQUIRE(a.rows() == 6);
  CHECK(a.values == b.values);
  int ones = 0;
  for (Index i = 0; i < a.rows(); ++i) ones += a.label(i);
  CHECK(ones == 3);
  std::set<std::size_t> ids(a.row_ids.begin(), a.row_ids.end());
  CHECK(ids.size() == 6);
  CHECK_THROWS_AS(sample_labeled(t, 21, 0), DataError);
}

TEST_CASE("split files round-trip exactly") {
  auto splits = make_splits(toy_table(50), 3);
  splits.name = "toy";
  scale_splits(splits, ScaleMode::min_max);
  const auto dir = fs::temp_directory_path() / "stunt_split_roundtrip";
  fs::remove_all(dir);
  write_splits(dir, splits);
  const auto back = read_splits(dir);
  CHECK(back.name == "toy");
  CHECK(back.num_classes == 2);
  CHECK(back.train_unlabeled.values == splits.train_unlabeled.values);
  CHECK(back.test.values == splits.test.values);
  CHECK(*back.test.target == *splits.test.target);
  CHECK(back.labeled_pool.one_hot == splits.labeled_pool.one_hot);
  CHECK(*back.scaler == *splits.scaler);
  fs::remove_all(dir);
}

TEST_CASE("bundled datasets load") {
  const fs::path data = STUNT_DATA_DIR;
  const auto diabetes = prepare_dataset(data / "diabetes/diabetes.csv", load_schema(data / "diabetes/diabetes.schema"),
                                        ScaleMode::min_max, 0);
  CHECK(diabetes.num_classes == 2);
  CHECK(diabetes.train_unlabeled.dims() == 8);
  CHECK(diabetes.train_unlabeled.rows() + diabetes.pseudo_val.rows() + diabetes.test.rows() == 768);
  CHECK(diabetes.train_unlabeled.values.minCoeff() >= 0.0);
  CHECK(diabetes.train_unlabeled.values.maxCoeff() <= 1.0);
}
