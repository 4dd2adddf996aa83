// stunt: prepare / train / search / evaluate / regress / report / replay.
//
// Every command writes manifest.json next to its outputs; `stunt replay
// <manifest>` re-runs the recorded argument vector.

#include "stunt/evaluation.hpp"
#include "stunt/pipeline.hpp"
#include "stunt/text_util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <map>
#include <numeric>
#include <tuple>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Relative output paths land under $STUNT_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("STUNT_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  }
  return path;
}

struct Manifest {
  json doc;

  Manifest(std::string_view command, const std::vector<std::string>& argv) {
    doc["command"] = command;
    doc["argv"] = argv;
    doc["version"] = kVersion;
    doc["started"] = utc_now();
    doc["inputs"] = json::object();
    doc["outputs"] = json::array();
  }

  void write(const fs::path& dir) {
    doc["finished"] = utc_now();
    fs::create_directories(dir);
    stunt::detail::write_file(dir / "manifest.json", doc.dump(2) + "\n");
  }
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

stunt::TrainConfig build_config(const std::string& config_file, const std::string& profile,
                                const std::vector<std::string>& overrides, int threads) {
  stunt::TrainConfig config;
  if (profile == "fast") config = stunt::fast_profile(config);
  if (!config_file.empty()) config = stunt::load_train_config(config_file, config);
  std::string text;
  for (const auto& o : overrides) text += o + "\n";
  stunt::apply_config_text(config, text, "--set");
  config.threads = threads;
  config.validate();
  return config;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  for (const auto& item : stunt::detail::split(text, ',')) {
    const auto v = stunt::detail::parse_double(stunt::detail::trim(item));
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<int>(*v))) {
      throw stunt::ConfigError(std::string("bad ") + what + " value '" + item + "'");
    }
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

void warn_hash_mismatch(const fs::path& checkpoint_path, const stunt::Checkpoint& ck) {
  const auto cfg = checkpoint_path.parent_path() / "train_config.txt";
  if (!fs::exists(cfg)) return;
  const auto expected = stunt::load_train_config(cfg).hash();
  if (expected != ck.config_hash) {
    std::cerr << "warning: checkpoint config hash " << hex64(ck.config_hash) << " does not match " << cfg.string()
              << " (" << hex64(expected) << ")\n";
  }
}

int run(int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const stunt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

namespace {

int run(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);

  CLI::App app{"Few-shot tabular learning from self-generated tasks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Encode, split and scale a dataset");
  std::string schema_path, csv_path, mode_text, out_dir;
  std::uint64_t seed = 0;
  prepare->add_option("--schema", schema_path, "Schema file")->required();
  prepare->add_option("--csv", csv_path, "Data file (default: <schema dir>/<name>.csv)");
  prepare->add_option("--mode", mode_text, "min_max or standardize (default: from schema)");
  prepare->add_option("--seed", seed, "Split seed");
  prepare->add_option("--out", out_dir, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Meta-train an encoder");
  std::string splits_dir, config_file, profile = "full";
  std::vector<std::string> overrides;
  train->add_option("--splits", splits_dir, "Prepared split directory")->required();
  train->add_option("--config", config_file, "Training config (key = value)");
  train->add_option("--profile", profile, "full or fast")->check(CLI::IsMember({"full", "fast"}));
  train->add_option("--set", overrides, "Config override key=value");
  train->add_option("--out", out_dir, "Output directory")->required();

  // search
  auto* search = app.add_subcommand("search", "Grid search ranked by pseudo-validation accuracy");
  std::string grid_file;
  bool with_test = false;
  int seeds = 100;
  std::string shots_text = "1";
  search->add_option("--splits", splits_dir, "Prepared split directory")->required();
  search->add_option("--config", config_file, "Base training config");
  search->add_option("--profile", profile, "full or fast")->check(CLI::IsMember({"full", "fast"}));
  search->add_option("--set", overrides, "Config override key=value");
  search->add_option("--grid", grid_file, "Grid file")->required();
  search->add_option("--out", out_dir, "Output directory")->required();
  search->add_flag("--with-test", with_test, "Also score each point on the test split");
  search->add_option("--seeds", seeds, "Seeds for --with-test")->check(CLI::PositiveNumber);
  search->add_option("--shots", shots_text, "Shots for --with-test");

  // evaluate / regress
  auto* evaluate = app.add_subcommand("evaluate", "Few-shot classification over seeds");
  auto* regress = app.add_subcommand("regress", "Few-shot kNN regression over seeds");
  std::string checkpoint_path;
  std::string k_text = "5";
  for (auto* sub : {evaluate, regress}) {
    sub->add_option("--splits", splits_dir, "Prepared split directory")->required();
    sub->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    sub->add_option("--shots", shots_text, "Comma-separated shot counts");
    sub->add_option("--seeds", seeds, "Number of seeds (0..n-1)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "Output directory")->required();
  }
  regress->add_option("--k", k_text, "Neighbour counts, one per shot value or a single one");

  // report
  auto* report = app.add_subcommand("report", "Merge result files into a markdown table");
  std::vector<std::string> result_files;
  std::string report_out;
  report->add_option("results", result_files, "Result files")->required();
  report->add_option("--out", report_out, "Write the table here instead of stdout");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string manifest_path;
  replay->add_option("manifest", manifest_path, "manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (replay->parsed()) {
    json doc;
    try {
      doc = json::parse(stunt::detail::read_file(manifest_path));
    } catch (const json::exception& e) {
      throw stunt::LoadError(manifest_path + ": " + e.what());
    }
    if (!doc.contains("argv") || !doc["argv"].is_array()) throw stunt::LoadError(manifest_path + ": no argv");
    std::vector<std::string> store{argv[0]};
    for (const auto& a : doc["argv"]) store.push_back(a.get<std::string>());
    std::vector<char*> ptrs;
    for (auto& s : store) ptrs.push_back(s.data());
    return run(static_cast<int>(ptrs.size()), ptrs.data());
  }

  if (prepare->parsed()) {
    Manifest manifest("prepare", args);
    std::optional<stunt::ScaleMode> mode;
    if (!mode_text.empty()) mode = stunt::parse_scale_mode(mode_text);
    const auto splits = stunt::prepare_from_schema(schema_path, seed, mode, csv_path);
    const auto dir = output_path(out_dir);
    stunt::write_splits(dir, splits);
    manifest.doc["inputs"]["schema"] = schema_path;
    if (!csv_path.empty()) manifest.doc["inputs"]["csv"] = csv_path;
    manifest.doc["seeds"] = {{"split", seed}};
    manifest.doc["config"] = {{"scaling", std::string(stunt::to_string(splits.scaler->mode))}};
    manifest.doc["outputs"] = {"train_unlabeled.csv", "pseudo_val.csv", "test.csv", "labeled_pool.csv", "scaler.txt",
                               "dataset.txt", "split_manifest.txt"};
    manifest.write(dir);
    std::cout << splits.name << ": " << splits.train_unlabeled.rows() << " unlabeled, " << splits.pseudo_val.rows()
              << " pseudo-val, " << splits.test.rows() << " test rows, d = " << splits.train_unlabeled.dims() << "\n";
    return 0;
  }

  if (train->parsed()) {
    Manifest manifest("train", args);
    if (!fs::is_directory(splits_dir)) throw stunt::LoadError("splits directory " + splits_dir + " not found");
    const auto config = build_config(config_file, profile, overrides, threads);
    const auto splits = stunt::read_splits(splits_dir);
    const auto dir = output_path(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = stunt::train_to_dir(splits, config, dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.doc["inputs"]["splits"] = splits_dir;
    manifest.doc["config"] = config.canonical();
    manifest.doc["config_hash"] = hex64(config.hash());
    manifest.doc["seeds"] = {{"root", config.seed}};
    manifest.doc["outputs"] = {"best.ckpt", "final.ckpt", "log.jsonl", "train_config.txt", "run_key.txt"};
    manifest.write(dir);
    std::cout << "best step " << result.best.step << " pseudo-val " << result.best.pseudo_val_accuracy
              << ", final pseudo-val " << result.final.pseudo_val_accuracy << " (" << secs << " s)\n";
    return 0;
  }

  if (search->parsed()) {
    Manifest manifest("search", args);
    if (!fs::is_directory(splits_dir)) throw stunt::LoadError("splits directory " + splits_dir + " not found");
    const auto base = build_config(config_file, profile, overrides, threads);
    const auto grid = stunt::load_grid(grid_file);
    const auto splits = stunt::read_splits(splits_dir);
    const auto dir = output_path(out_dir);
    const auto shots = parse_int_list(shots_text, "shots");
    const auto seed_list = stunt::seed_range(seeds);

    std::vector<stunt::GridPoint> points;
    const auto configs = stunt::grid_configs(grid, base);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      // as grid_search, but checkpoints go to disk per point
      stunt::GridPoint p;
      p.index = i;
      p.config = configs[i];
      try {
        p.result = stunt::train_to_dir(splits, p.config, dir / ("point_" + std::to_string(i)));
      } catch (const stunt::Error& e) {
        p.error = e.what();
      }
      std::cerr << "point " << i << " shot " << p.config.shot << " query " << p.config.query_per_class << " way "
                << p.config.way << ": " << (p.result ? std::to_string(p.best_accuracy()) : "failed: " + p.error)
                << "\n";
      points.push_back(std::move(p));
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const auto& a, const auto& b) { return a.best_accuracy() > b.best_accuracy(); });

    std::map<std::size_t, double> test_acc;
    if (with_test) {
      for (const auto& p : points) {
        if (!p.result) continue;
        test_acc[p.index] = stunt::evaluate_seeds(splits, p.result->best, shots.front(), seed_list, threads).stunt.mean;
      }
    }
    std::string table = "rank,index,shot,query,way,best_step,pseudo_val_acc";
    if (with_test) table += ",test_acc";
    table += ",error\n";
    std::vector<double> pv, ta;
    for (std::size_t r = 0; r < points.size(); ++r) {
      const auto& p = points[r];
      table += std::to_string(r + 1) + "," + std::to_string(p.index) + "," + std::to_string(p.config.shot) + "," +
               std::to_string(p.config.query_per_class) + "," + std::to_string(p.config.way) + ",";
      table += p.result ? std::to_string(p.result->best.step) + "," + stunt::format_double(p.best_accuracy()) : ",";
      if (with_test) {
        table += ",";
        if (auto it = test_acc.find(p.index); it != test_acc.end()) {
          table += stunt::format_double(it->second);
          pv.push_back(p.best_accuracy());
          ta.push_back(it->second);
        }
      }
      table += "," + stunt::detail::csv_quote(p.error) + "\n";
    }
    stunt::detail::write_file(dir / "search.csv", table);
    std::cout << table;
    manifest.doc["inputs"]["splits"] = splits_dir;
    manifest.doc["inputs"]["grid"] = grid_file;
    manifest.doc["config"] = base.canonical();
    manifest.doc["seeds"] = {{"root", base.seed}, {"evaluation", seeds}};
    manifest.doc["outputs"] = {"search.csv"};
    if (with_test && pv.size() >= 2) {
      const double rho = spearman(pv, ta);
      manifest.doc["spearman"] = rho;
      stunt::detail::write_file(dir / "spearman.txt", stunt::format_double(rho) + "\n");
      std::cout << "spearman " << rho << "\n";
    }
    manifest.write(dir);
    return 0;
  }

  if (evaluate->parsed() || regress->parsed()) {
    const bool is_regress = regress->parsed();
    Manifest manifest(is_regress ? "regress" : "evaluate", args);
    if (!fs::is_directory(splits_dir)) throw stunt::LoadError("splits directory " + splits_dir + " not found");
    const auto splits = stunt::read_splits(splits_dir);
    const auto ck = stunt::load_checkpoint(checkpoint_path);
    warn_hash_mismatch(checkpoint_path, ck);
    const auto shots = parse_int_list(shots_text, "shots");
    const auto seed_list = stunt::seed_range(seeds);
    const auto dir = output_path(out_dir);
    fs::create_directories(dir);
    json outputs = json::array();
    if (is_regress) {
      auto ks = parse_int_list(k_text, "k");
      if (ks.size() == 1) ks.assign(shots.size(), ks.front());
      if (ks.size() != shots.size()) throw stunt::ConfigError("--k needs one value or one per shot value");
      for (std::size_t i = 0; i < shots.size(); ++i) {
        const auto r = stunt::evaluate_regression(splits, ck, shots[i], ks[i], seed_list, threads);
        const auto name = "regress_" + std::to_string(shots[i]) + "shot_k" + std::to_string(ks[i]) + ".jsonl";
        stunt::detail::write_file(dir / name, stunt::result_jsonl(r));
        outputs.push_back(name);
        std::cout << splits.name << " " << shots[i] << "-shot k=" << ks[i] << ": mse " << r.stunt.mean << " (raw "
                  << r.raw.mean << ")\n";
      }
    } else {
      for (int s : shots) {
        const auto r = stunt::evaluate_seeds(splits, ck, s, seed_list, threads);
        const auto name = "eval_" + std::to_string(s) + "shot.jsonl";
        stunt::detail::write_file(dir / name, stunt::result_jsonl(r));
        outputs.push_back(name);
        std::cout << splits.name << " " << s << "-shot: " << 100.0 * r.stunt.mean << " ± " << 100.0 * r.stunt.std
                  << " (raw " << 100.0 * r.raw.mean << ")\n";
      }
    }
    manifest.doc["inputs"]["splits"] = splits_dir;
    manifest.doc["inputs"]["checkpoint"] = checkpoint_path;
    manifest.doc["config"] = {{"shots", shots_text}, {"checkpoint_hash", hex64(ck.config_hash)}};
    if (is_regress) manifest.doc["config"]["k"] = k_text;
    manifest.doc["seeds"] = {{"evaluation", seeds}};
    manifest.doc["outputs"] = outputs;
    manifest.write(dir);
    return 0;
  }

  if (report->parsed()) {
    std::vector<stunt::ReportRow> rows;
    for (const auto& f : result_files) rows.push_back(stunt::read_report_row(f));
    const auto table = stunt::markdown_table(rows);
    if (report_out.empty()) {
      std::cout << table;
    } else {
      const auto path = output_path(report_out);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      stunt::detail::write_file(path, table);
      Manifest manifest("report", args);
      manifest.doc["inputs"]["results"] = result_files;
      manifest.doc["outputs"] = {path.filename().string()};
      manifest.write(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    }
    return 0;
  }
  return 2;
}

}  // namespace
