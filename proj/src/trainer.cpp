#include "stunt/trainer.hpp"

#include "stunt/table.hpp"
#include "stunt/text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace stunt {

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (shot < 1) problems.push_back("shot must be >= 1");
  if (query_per_class < 1) problems.push_back("query must be >= 1");
  if (way < 2) problems.push_back("way must be >= 2");
  if (!(r1 > 0.0 && r1 < r2 && r2 < 1.0)) problems.push_back("need 0 < r1 < r2 < 1");
  if (sigma < 0.0) problems.push_back("sigma must be >= 0");
  if (meta_batch < 1) problems.push_back("meta_batch must be >= 1");
  if (!(lr > 0.0)) problems.push_back("lr must be > 0");
  if (weight_decay < 0.0) problems.push_back("weight_decay must be >= 0");
  if (hidden < 1 || embed < 1) problems.push_back("hidden and embed must be >= 1");
  if (total_steps < 1) problems.push_back("total_steps must be >= 1");
  if (val_interval < 1) problems.push_back("val_interval must be >= 1");
  if (val_episodes < 1) problems.push_back("val_episodes must be >= 1");
  if (val_query < 1) problems.push_back("val_query must be >= 1");
  if (threads < 1) problems.push_back("threads must be >= 1");
  if (problems.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ConfigError(msg);
}

std::string TrainConfig::canonical() const {
  std::string out;
  auto add = [&out](std::string_view key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  add("shot", std::to_string(shot));
  add("query", std::to_string(query_per_class));
  add("way", std::to_string(way));
  add("r1", format_double(r1));
  add("r2", format_double(r2));
  add("strategy", std::string(to_string(strategy)));
  add("sigma", format_double(sigma));
  add("meta_batch", std::to_string(meta_batch));
  add("lr", format_double(lr));
  add("weight_decay", format_double(weight_decay));
  add("hidden", std::to_string(hidden));
  add("embed", std::to_string(embed));
  add("total_steps", std::to_string(total_steps));
  add("val_interval", std::to_string(val_interval));
  add("val_episodes", std::to_string(val_episodes));
  add("val_query", std::to_string(val_query));
  add("seed", std::to_string(seed));
  add("val_seed", std::to_string(val_seed));
  return out;
}

std::uint64_t TrainConfig::hash() const { return mix64(hash_tag(canonical())); }

TrainConfig fast_profile(TrainConfig config) {
  config.hidden = 256;
  config.embed = 256;
  config.total_steps = 2000;
  return config;
}

namespace {

long parse_long(const detail::KeyValue& kv, std::string_view source) {
  const auto v = detail::parse_double(kv.value);
  if (!v || *v != static_cast<double>(static_cast<long>(*v))) {
    throw ConfigError(std::string(source) + " line " + std::to_string(kv.line) + ": " + kv.key +
                      " expects an integer, got '" + kv.value + "'");
  }
  return static_cast<long>(*v);
}

double parse_real(const detail::KeyValue& kv, std::string_view source) {
  const auto v = detail::parse_double(kv.value);
  if (!v) {
    throw ConfigError(std::string(source) + " line " + std::to_string(kv.line) + ": " + kv.key +
                      " expects a number, got '" + kv.value + "'");
  }
  return *v;
}

}  // namespace

void apply_config_text(TrainConfig& c, std::string_view text, std::string_view source) {
  for (const auto& kv : detail::parse_key_values(text, source)) {
    const auto& k = kv.key;
    if (k == "shot") c.shot = static_cast<int>(parse_long(kv, source));
    else if (k == "query") c.query_per_class = static_cast<int>(parse_long(kv, source));
    else if (k == "way") c.way = static_cast<int>(parse_long(kv, source));
    else if (k == "r1") c.r1 = parse_real(kv, source);
    else if (k == "r2") c.r2 = parse_real(kv, source);
    else if (k == "strategy") c.strategy = parse_mask_strategy(kv.value);
    else if (k == "sigma") c.sigma = parse_real(kv, source);
    else if (k == "meta_batch") c.meta_batch = static_cast<int>(parse_long(kv, source));
    else if (k == "lr") c.lr = parse_real(kv, source);
    else if (k == "weight_decay") c.weight_decay = parse_real(kv, source);
    else if (k == "hidden") c.hidden = static_cast<int>(parse_long(kv, source));
    else if (k == "embed") c.embed = static_cast<int>(parse_long(kv, source));
    else if (k == "total_steps") c.total_steps = parse_long(kv, source);
    else if (k == "val_interval") c.val_interval = parse_long(kv, source);
    else if (k == "val_episodes") c.val_episodes = static_cast<int>(parse_long(kv, source));
    else if (k == "val_query") c.val_query = static_cast<int>(parse_long(kv, source));
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_long(kv, source));
    else if (k == "val_seed") c.val_seed = static_cast<std::uint64_t>(parse_long(kv, source));
    else if (k == "threads") c.threads = static_cast<int>(parse_long(kv, source));
    else throw ConfigError(std::string(source) + " line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
  }
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  apply_config_text(base, detail::read_file(path), path.string());
  return base;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

EncoderParams average_gradients(const std::vector<EncoderParams>& grads) {
  if (grads.empty()) throw DataError("no gradients to average");
  EncoderParams sum = grads.front();
  for (std::size_t i = 1; i < grads.size(); ++i) {
    sum.w1 += grads[i].w1;
    sum.b1 += grads[i].b1;
    sum.w2 += grads[i].w2;
    sum.b2 += grads[i].b2;
  }
  const double inv = 1.0 / static_cast<double>(grads.size());
  sum.w1 *= inv;
  sum.b1 *= inv;
  sum.w2 *= inv;
  sum.b2 *= inv;
  return sum;
}

double pseudo_validate(const EncoderParams& params, const Matrix& validation, int num_classes, int episodes,
                       int query_per_class, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("pseudo-validation needs at least one episode");
  if (num_classes < 2) throw ConfigError("pseudo-validation needs at least two classes");
  if (validation.rows() < static_cast<Index>(num_classes) * (1 + query_per_class)) {
    throw DataError("pseudo-validation needs " + std::to_string(num_classes * (1 + query_per_class)) +
                    " rows, have " + std::to_string(validation.rows()));
  }
  Rng rng(seed);
  // A clustering with fewer than two classes of 1 + query_per_class members
  // cannot host an episode; recluster from the same stream.
  StuntTask task;
  for (int attempt = 1;; ++attempt) {
    task = build_pseudo_val_task(validation, num_classes, rng);
    std::vector<int> sizes(static_cast<std::size_t>(num_classes), 0);
    for (int c : task.pseudo_labels) ++sizes[static_cast<std::size_t>(c)];
    const auto eligible = std::count_if(sizes.begin(), sizes.end(), [&](int s) { return s >= 1 + query_per_class; });
    if (eligible >= 2) break;
    if (attempt == kMaxTaskAttempts) {
      throw DataError("pseudo-validation clustering left fewer than two classes with " +
                      std::to_string(1 + query_per_class) + " rows");
    }
  }
  const Matrix z = encode(params, validation);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = sample_episode_rows(task.pseudo_labels, task.way, 1, query_per_class, rng);
    Matrix support(static_cast<Index>(ep.support_rows.size()), z.cols());
    for (std::size_t i = 0; i < ep.support_rows.size(); ++i) support.row(static_cast<Index>(i)) = z.row(ep.support_rows[i]);
    const Matrix protos = class_prototypes(support, ep.support_labels, ep.way());
    int correct = 0;
    for (std::size_t q = 0; q < ep.query_rows.size(); ++q) {
      Index best = 0;
      (protos.rowwise() - z.row(ep.query_rows[q])).rowwise().squaredNorm().minCoeff(&best);
      if (best == ep.query_labels[q]) ++correct;
    }
    total += static_cast<double>(correct) / static_cast<double>(ep.query_rows.size());
  }
  return total / static_cast<double>(episodes);
}

TrainResult meta_train(const Matrix& unlabeled, const Matrix& validation, int num_classes, const TrainConfig& config,
                       const TrainCallbacks& callbacks) {
  config.validate();
  const auto config_hash = config.hash();
  EncoderParams params =
      init_encoder(unlabeled.cols(), config.hidden, config.embed, derive_seed(config.seed, "init"));
  AdamState adam = AdamState::for_params(params);
  const AdamOptions adam_options{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};

  TaskOptions task_options;
  task_options.way = config.way;
  task_options.r1 = config.r1;
  task_options.r2 = config.r2;
  task_options.corruption = Corruption{config.strategy, config.sigma};

  TrainResult result;
  bool have_best = false;
  long val_calls = 0;
  std::vector<EpisodeOutcome> outcomes(static_cast<std::size_t>(config.meta_batch));
  std::vector<int> attempts(static_cast<std::size_t>(config.meta_batch));

  for (long step = 1; step <= config.total_steps; ++step) {
    parallel_for(outcomes.size(), config.threads, [&](std::size_t j) {
      Rng rng(derive_seed(config.seed, "task", static_cast<std::uint64_t>(step), j));
      auto te = generate_episode(unlabeled, task_options, config.shot, config.query_per_class, rng);
      attempts[j] = te.attempts;
      outcomes[j] = episode_loss_and_grad(params, te.episode);
    });
    LogRecord record;
    record.step = step;
    std::vector<EncoderParams> grads;
    grads.reserve(outcomes.size());
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      record.loss += outcomes[j].loss;
      record.train_accuracy += outcomes[j].accuracy;
      record.retries += attempts[j] - 1;
      grads.push_back(std::move(outcomes[j].grad));
    }
    record.loss /= static_cast<double>(outcomes.size());
    record.train_accuracy /= static_cast<double>(outcomes.size());
    adam_step(params, average_gradients(grads), adam, adam_options);

    if (step % config.val_interval == 0 || step == config.total_steps) {
      const double acc = pseudo_validate(params, validation, num_classes, config.val_episodes, config.val_query,
                                         derive_seed(config.val_seed, "val", static_cast<std::uint64_t>(val_calls++)));
      record.pseudo_val_accuracy = acc;
      if (!have_best || acc > result.best.pseudo_val_accuracy) {
        have_best = true;
        result.best = Checkpoint{params, config_hash, step, acc};
        if (callbacks.on_improvement) callbacks.on_improvement(result.best);
      }
      if (step == config.total_steps) result.final = Checkpoint{params, config_hash, step, acc};
    }
    if (callbacks.on_record) callbacks.on_record(record);
    result.log.push_back(record);
  }
  return result;
}

std::string log_record_json(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["train_acc"] = r.train_accuracy;
  if (r.pseudo_val_accuracy) j["pseudo_val_acc"] = *r.pseudo_val_accuracy;
  if (r.retries > 0) j["retries"] = r.retries;
  return j.dump();
}

GridSpec parse_grid(std::string_view text, std::string_view source) {
  GridSpec grid;
  for (const auto& kv : detail::parse_key_values(text, source)) {
    const auto where = std::string(source) + " line " + std::to_string(kv.line);
    if (kv.key == "shot_query") {
      for (const auto& item : detail::split(kv.value, ',')) {
        const auto parts = detail::split(detail::trim(item), ':');
        const auto bad = [&] { return ConfigError(where + ": expected shot:query pairs, got '" + item + "'"); };
        if (parts.size() != 2) throw bad();
        const auto s = detail::parse_double(detail::trim(parts[0]));
        const auto q = detail::parse_double(detail::trim(parts[1]));
        if (!s || !q) throw bad();
        if (*s < 1 || *q < 1) throw bad();
        grid.shot_query.emplace_back(static_cast<int>(*s), static_cast<int>(*q));
      }
    } else if (kv.key == "way") {
      for (const auto& item : detail::split(kv.value, ',')) {
        const auto w = detail::parse_double(detail::trim(item));
        if (!w || *w < 2) throw ConfigError(where + ": bad way value '" + item + "'");
        grid.ways.push_back(static_cast<int>(*w));
      }
    } else {
      throw ConfigError(where + ": unknown key '" + kv.key + "' (shot_query, way)");
    }
  }
  if (grid.size() == 0) throw ConfigError(std::string(source) + ": grid needs shot_query and way entries");
  return grid;
}

GridSpec load_grid(const std::filesystem::path& path) { return parse_grid(detail::read_file(path), path.string()); }

std::vector<TrainConfig> grid_configs(const GridSpec& grid, const TrainConfig& base) {
  std::vector<TrainConfig> configs;
  for (const auto& [shot, query] : grid.shot_query) {
    for (int way : grid.ways) {
      auto c = base;
      c.shot = shot;
      c.query_per_class = query;
      c.way = way;
      c.seed = derive_seed(base.seed, "grid", configs.size());
      configs.push_back(c);
    }
  }
  return configs;
}

std::vector<GridPoint> grid_search(const Matrix& unlabeled, const Matrix& validation, int num_classes,
                                   const GridSpec& grid, const TrainConfig& base,
                                   const std::function<void(const GridPoint&)>& on_point) {
  if (grid.size() == 0) throw ConfigError("empty grid");
  std::vector<GridPoint> points;
  for (const auto& c : grid_configs(grid, base)) {
    GridPoint p;
    p.index = points.size();
    p.config = c;
    points.push_back(std::move(p));
  }
  for (auto& p : points) {
    try {
      p.result = meta_train(unlabeled, validation, num_classes, p.config);
    } catch (const Error& e) {
      p.error = e.what();
    }
    if (on_point) on_point(p);
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const GridPoint& a, const GridPoint& b) { return a.best_accuracy() > b.best_accuracy(); });
  return points;
}

}  // namespace stunt
