#include "stunt/evaluation.hpp"
#include "stunt/kmeans.hpp"
#include "stunt/pipeline.hpp"
#include "stunt/protonet.hpp"
#include "stunt/tasks.hpp"
#include "stunt/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace stunt;

PYBIND11_MODULE(_stunt, m) {
  m.doc() = "Few-shot tabular learning from self-generated tasks";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<LoadError>(m, "LoadError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::enum_<ScaleMode>(m, "ScaleMode").value("min_max", ScaleMode::min_max).value("standardize", ScaleMode::standardize);
  py::enum_<MaskStrategy>(m, "MaskStrategy")
      .value("marginal", MaskStrategy::marginal)
      .value("zero", MaskStrategy::zero)
      .value("gaussian", MaskStrategy::gaussian)
      .value("none", MaskStrategy::none);

  // k-means
  py::class_<ClusteringResult>(m, "ClusteringResult")
      .def_readonly("centroids", &ClusteringResult::centroids)
      .def_readonly("assignments", &ClusteringResult::assignments)
      .def_readonly("inertia", &ClusteringResult::inertia)
      .def_readonly("iterations", &ClusteringResult::iterations);
  m.def(
      "kmeans",
      [](const Matrix& points, int k, std::uint64_t seed, int max_iter, double tol) {
        return kmeans(points, k, seed, KMeansOptions{max_iter, tol});
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100, py::arg("tol") = 1e-4);

  // task generation
  py::class_<FeatureMask>(m, "FeatureMask")
      .def_property_readonly("bits", [](const FeatureMask& f) { return std::vector<int>(f.bits.begin(), f.bits.end()); })
      .def_readonly("ratio", &FeatureMask::ratio)
      .def("count", &FeatureMask::count)
      .def("selected", &FeatureMask::selected);
  m.def(
      "sample_mask",
      [](Index d, double r1, double r2, std::uint64_t seed) {
        Rng rng(seed);
        return sample_mask(d, r1, r2, rng);
      },
      py::arg("d"), py::arg("r1") = 0.2, py::arg("r2") = 0.5, py::arg("seed") = 0);

  py::class_<StuntTask>(m, "StuntTask")
      .def_readonly("inputs", &StuntTask::inputs)
      .def_readonly("pseudo_labels", &StuntTask::pseudo_labels)
      .def_readonly("way", &StuntTask::way)
      .def_readonly("mask", &StuntTask::mask)
      .def_readonly("centroids", &StuntTask::centroids);
  m.def(
      "generate_task",
      [](const Matrix& unlabeled, int way, double r1, double r2, MaskStrategy strategy, double sigma,
         std::uint64_t seed) {
        TaskOptions o;
        o.way = way;
        o.r1 = r1;
        o.r2 = r2;
        o.corruption = Corruption{strategy, sigma};
        Rng rng(seed);
        return generate_stunt_task(unlabeled, o, rng);
      },
      py::arg("unlabeled"), py::arg("way") = 5, py::arg("r1") = 0.2, py::arg("r2") = 0.5,
      py::arg("strategy") = MaskStrategy::marginal, py::arg("sigma") = 0.1, py::arg("seed") = 0);

  // encoder
  py::class_<EncoderParams>(m, "EncoderParams")
      .def_readwrite("w1", &EncoderParams::w1)
      .def_readwrite("b1", &EncoderParams::b1)
      .def_readwrite("w2", &EncoderParams::w2)
      .def_readwrite("b2", &EncoderParams::b2);
  m.def("init_encoder", &init_encoder, py::arg("input_dim"), py::arg("hidden_dim"), py::arg("embed_dim"),
        py::arg("seed") = 0);
  m.def("encode", static_cast<Matrix (*)(const EncoderParams&, const Matrix&)>(&encode), py::arg("params"), py::arg("x"));
  m.def("class_probabilities",
        [](const Matrix& query_embed, const Matrix& prototypes) {
          return class_probabilities(prototype_distances(query_embed, prototypes));
        },
        py::arg("query_embed"), py::arg("prototypes"));
  m.def(
      "episode_loss_and_grad",
      [](const EncoderParams& params, const Matrix& support, const std::vector<int>& support_labels,
         const Matrix& query, const std::vector<int>& query_labels, int way) {
        Episode ep;
        ep.support = support;
        ep.query = query;
        ep.support_labels = support_labels;
        ep.query_labels = query_labels;
        for (int c = 0; c < way; ++c) ep.classes.push_back(c);
        const auto out = episode_loss_and_grad(params, ep);
        return py::make_tuple(out.loss, out.grad);
      },
      py::arg("params"), py::arg("support"), py::arg("support_labels"), py::arg("query"), py::arg("query_labels"),
      py::arg("way"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("params", &Checkpoint::params)
      .def_readonly("step", &Checkpoint::step)
      .def_readonly("pseudo_val_accuracy", &Checkpoint::pseudo_val_accuracy)
      .def_readonly("config_hash", &Checkpoint::config_hash);
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  // training
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("shot", &TrainConfig::shot)
      .def_readwrite("query", &TrainConfig::query_per_class)
      .def_readwrite("way", &TrainConfig::way)
      .def_readwrite("r1", &TrainConfig::r1)
      .def_readwrite("r2", &TrainConfig::r2)
      .def_readwrite("strategy", &TrainConfig::strategy)
      .def_readwrite("meta_batch", &TrainConfig::meta_batch)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("embed", &TrainConfig::embed)
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("val_interval", &TrainConfig::val_interval)
      .def_readwrite("val_episodes", &TrainConfig::val_episodes)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("val_seed", &TrainConfig::val_seed)
      .def("canonical", &TrainConfig::canonical)
      .def("hash", &TrainConfig::hash);
  m.def("fast_profile", &fast_profile);

  py::class_<LogRecord>(m, "LogRecord")
      .def_readonly("step", &LogRecord::step)
      .def_readonly("loss", &LogRecord::loss)
      .def_readonly("pseudo_val_accuracy", &LogRecord::pseudo_val_accuracy);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("best", &TrainResult::best)
      .def_readonly("final", &TrainResult::final)
      .def_readonly("log", &TrainResult::log);
  m.def(
      "meta_train",
      [](const Matrix& unlabeled, const Matrix& validation, int num_classes, const TrainConfig& config) {
        py::gil_scoped_release release;
        return meta_train(unlabeled, validation, num_classes, config);
      },
      py::arg("unlabeled"), py::arg("validation"), py::arg("num_classes"), py::arg("config"));
  m.def("pseudo_validate", &pseudo_validate, py::arg("params"), py::arg("validation"), py::arg("num_classes"),
        py::arg("episodes") = 100, py::arg("query_per_class") = 15, py::arg("seed") = 0);

  // data + evaluation
  py::class_<DatasetSplits>(m, "DatasetSplits")
      .def_readonly("name", &DatasetSplits::name)
      .def_readonly("num_classes", &DatasetSplits::num_classes)
      .def_property_readonly("train_unlabeled", [](const DatasetSplits& s) { return s.train_unlabeled.values; })
      .def_property_readonly("pseudo_val", [](const DatasetSplits& s) { return s.pseudo_val.values; })
      .def_property_readonly("test", [](const DatasetSplits& s) { return s.test.values; })
      .def_property_readonly("test_target", [](const DatasetSplits& s) { return *s.test.target; })
      .def("is_regression", &DatasetSplits::is_regression);
  m.def(
      "prepare",
      [](const std::filesystem::path& schema, std::uint64_t seed, std::optional<ScaleMode> mode,
         std::optional<std::filesystem::path> csv) { return prepare_from_schema(schema, seed, mode, csv.value_or("")); },
      py::arg("schema"), py::arg("seed") = 0, py::arg("mode") = std::nullopt, py::arg("csv") = std::nullopt);
  m.def("read_splits", &read_splits, py::arg("dir"));
  m.def("write_splits", &write_splits, py::arg("dir"), py::arg("splits"));

  m.def(
      "adapt_and_classify",
      [](const EncoderParams& params, const Matrix& labeled_x, const std::vector<int>& labels, int num_classes,
         const Matrix& test_x) { return adapt_and_classify(params, labeled_x, labels, num_classes, test_x); },
      py::arg("params"), py::arg("labeled_x"), py::arg("labels"), py::arg("num_classes"), py::arg("test_x"));
  m.def(
      "raw_prototype_baseline",
      [](const Matrix& labeled_x, const std::vector<int>& labels, int num_classes, const Matrix& test_x) {
        return raw_prototype_baseline(labeled_x, labels, num_classes, test_x);
      },
      py::arg("labeled_x"), py::arg("labels"), py::arg("num_classes"), py::arg("test_x"));
  m.def("knn_regress", &knn_regress, py::arg("params"), py::arg("labeled_x"), py::arg("targets"), py::arg("test_x"),
        py::arg("k"));

  py::class_<SeedStats>(m, "SeedStats")
      .def_readonly("values", &SeedStats::values)
      .def_readonly("mean", &SeedStats::mean)
      .def_readonly("std", &SeedStats::std);
  py::class_<FewShotResult>(m, "FewShotResult")
      .def_readonly("shots", &FewShotResult::shots)
      .def_readonly("stunt", &FewShotResult::stunt)
      .def_readonly("raw", &FewShotResult::raw);
  m.def(
      "evaluate_seeds",
      [](const DatasetSplits& splits, const Checkpoint& ck, int shots, int n_seeds) {
        const auto seeds = seed_range(n_seeds);
        return evaluate_seeds(splits, ck, shots, seeds);
      },
      py::arg("splits"), py::arg("checkpoint"), py::arg("shots"), py::arg("n_seeds") = 100);
}
