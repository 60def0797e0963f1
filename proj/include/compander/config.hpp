#ifndef COMPANDER_CONFIG_HPP
#define COMPANDER_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "compander/compand.hpp"
#include "compander/dataset.hpp"
#include "compander/nn.hpp"
#include "compander/optim.hpp"
#include "compander/reparam.hpp"

namespace compander {

inline ReparamKind reparam_kind_from_name(const std::string& name) {
  if (name == "identity") return ReparamKind::Identity;
  if (name == "arctan") return ReparamKind::Arctan;
  if (name == "arcsinh") return ReparamKind::Arcsinh;
  if (name == "erf") return ReparamKind::Erf;
  if (name == "powerprop") return ReparamKind::Powerprop;
  if (name == "weight_norm") return ReparamKind::WeightNorm;
  throw std::invalid_argument("unknown reparam kind: " + name);
}

struct ModelConfig {
  std::string kind = "mlp";
  // mlp: {in, hidden, classes}; small_cnn: {channels, image_side, classes}
  std::vector<std::size_t> sizes{784, 256, 10};
};

struct SynthConfig {
  SynthSpec spec;
  std::size_t test_per_class = 50;
};

struct DatasetConfig {
  std::string kind = "synthetic";
  std::string train_images, train_labels, test_images, test_labels;  // mnist idx pairs
  std::vector<std::string> train_paths, test_paths;                  // cifar10 batches
  std::size_t subset_size = 0;       // 0 keeps everything
  std::size_t test_subset_size = 0;  // 0 keeps everything
  SynthConfig synth;
};

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam | modified_adam
  double lr = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AnalysisConfig {
  std::vector<std::size_t> trace_layers{0};
  std::vector<double> deltas{0.005, 0.01, 0.02};
};

struct ExperimentConfig {
  ModelConfig model;
  DatasetConfig dataset;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  LrSchedule schedule;
  double lambda = 0.0;
  ReparamSpec reparam;
  AnalysisConfig analysis;
  double validation_split = 0.1;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(validation_split > 0 && validation_split < 1))
      throw std::invalid_argument("config: validation_split must be in (0,1)");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (model.kind != "mlp" && model.kind != "small_cnn")
      throw std::invalid_argument("config: unknown model kind " + model.kind);
    if (model.sizes.size() != 3)
      throw std::invalid_argument("config: model.sizes needs 3 entries");
    if (dataset.kind != "synthetic" && dataset.kind != "mnist" && dataset.kind != "cifar10")
      throw std::invalid_argument("config: unknown dataset kind " + dataset.kind);
    if (optimizer.kind != "sgd" && optimizer.kind != "adam" &&
        optimizer.kind != "modified_adam")
      throw std::invalid_argument("config: unknown optimizer kind " + optimizer.kind);
    if (optimizer.lr < 0) throw std::invalid_argument("config: lr must be >= 0");
    if (optimizer.momentum < 0 || optimizer.momentum >= 1)
      throw std::invalid_argument("config: momentum must be in [0,1)");
    if (lambda < 0) throw std::invalid_argument("config: lambda must be >= 0");
    detail::check_params(reparam.kind, reparam.params);
    if (reparam.params.mode == AbMode::Learnable && lambda > 0 &&
        optimizer.kind == "modified_adam")
      throw std::invalid_argument(
          "config: learnable a/b applies decay to v, which the raw-gradient "
          "adaptive rule has no slot for; use sgd or adam");
    LrSchedule check(schedule.milestones, schedule.factor);
    (void)check;
  }
};

namespace detail {

inline ReparamSpec reparam_from_json(const nlohmann::json& j) {
  ReparamSpec spec;
  spec.kind = reparam_kind_from_name(j.value("kind", "identity"));
  spec.params.a = j.value("a", 1.0);
  spec.params.b = j.value("b", 1.0);
  spec.params.alpha = j.value("alpha", 1.0);
  std::string mode = j.value("mode", "fixed");
  if (mode != "fixed" && mode != "learnable")
    throw std::invalid_argument("config: reparam.mode must be fixed or learnable");
  spec.params.mode = mode == "fixed" ? AbMode::Fixed : AbMode::Learnable;
  std::string scope = j.value("scope", "per_layer");
  if (scope != "per_layer" && scope != "global")
    throw std::invalid_argument("config: reparam.scope must be per_layer or global");
  spec.params.scope = scope == "per_layer" ? AbScope::PerLayer : AbScope::Global;
  return spec;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.kind = m.value("kind", c.model.kind);
    if (m.contains("sizes")) c.model.sizes = m.at("sizes").get<std::vector<std::size_t>>();
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.kind = d.value("kind", c.dataset.kind);
    c.dataset.train_images = d.value("train_images", "");
    c.dataset.train_labels = d.value("train_labels", "");
    c.dataset.test_images = d.value("test_images", "");
    c.dataset.test_labels = d.value("test_labels", "");
    if (d.contains("train_paths"))
      c.dataset.train_paths = d.at("train_paths").get<std::vector<std::string>>();
    if (d.contains("test_paths"))
      c.dataset.test_paths = d.at("test_paths").get<std::vector<std::string>>();
    c.dataset.subset_size = d.value("subset_size", std::size_t(0));
    c.dataset.test_subset_size = d.value("test_subset_size", std::size_t(0));
    if (d.contains("synth")) {
      const auto& s = d.at("synth");
      c.dataset.synth.spec.classes = s.value("classes", std::size_t(2));
      c.dataset.synth.spec.per_class = s.value("per_class", std::size_t(100));
      c.dataset.synth.spec.dim = s.value("dim", std::size_t(2));
      c.dataset.synth.spec.separation = s.value("separation", 4.0);
      c.dataset.synth.test_per_class = s.value("test_per_class", std::size_t(50));
    }
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.kind = o.value("kind", c.optimizer.kind);
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.value("eps", c.optimizer.eps);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    std::vector<std::size_t> milestones;
    if (s.contains("milestones"))
      milestones = s.at("milestones").get<std::vector<std::size_t>>();
    c.schedule = LrSchedule(milestones, s.value("factor", 1.0));
  }
  c.lambda = j.value("lambda", c.lambda);
  if (j.contains("reparam")) c.reparam = detail::reparam_from_json(j.at("reparam"));
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    if (a.contains("trace_layers"))
      c.analysis.trace_layers = a.at("trace_layers").get<std::vector<std::size_t>>();
    if (a.contains("deltas")) c.analysis.deltas = a.at("deltas").get<std::vector<double>>();
  }
  c.validation_split = j.value("validation_split", c.validation_split);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

inline nlohmann::json reparam_to_json(const ReparamSpec& spec) {
  return {{"kind", reparam_kind_name(spec.kind)},
          {"a", spec.params.a},
          {"b", spec.params.b},
          {"alpha", spec.params.alpha},
          {"mode", spec.params.mode == AbMode::Fixed ? "fixed" : "learnable"},
          {"scope", spec.params.scope == AbScope::PerLayer ? "per_layer" : "global"}};
}

inline nlohmann::json model_to_json(const ModelConfig& m) {
  return {{"kind", m.kind}, {"sizes", m.sizes}};
}

inline Model build_model(const ModelConfig& m) {
  if (m.kind == "mlp")
    return Model(mlp_layers(m.sizes[0], m.sizes[1], m.sizes[2]), {m.sizes[0]});
  if (m.kind == "small_cnn")
    return Model(small_cnn_layers(m.sizes[0], m.sizes[1], m.sizes[2]),
                 {m.sizes[0], m.sizes[1], m.sizes[1]});
  throw std::invalid_argument("unknown model kind " + m.kind);
}

/// Training data is seeded per run; test data comes from seed-free
/// streams so every seed of a study is scored on the same examples.
inline Dataset load_train_dataset(const DatasetConfig& d, std::uint64_t seed) {
  if (d.kind == "synthetic") return synth_dataset(d.synth.spec, seed);
  if (d.kind == "mnist") {
    std::size_t n = d.subset_size ? d.subset_size : std::size_t(-1);
    return load_mnist_idx(d.train_images, d.train_labels, n, seed);
  }
  std::size_t n = d.subset_size ? d.subset_size : std::size_t(-1);
  return load_cifar10_bin(d.train_paths, n, seed);
}

inline Dataset load_test_dataset(const DatasetConfig& d) {
  constexpr std::uint64_t kTestStream = 0x7e57;
  if (d.kind == "synthetic") {
    SynthSpec spec = d.synth.spec;
    spec.per_class = d.synth.test_per_class;
    return synth_dataset(spec, kTestStream);
  }
  if (d.kind == "mnist") {
    std::size_t n = d.test_subset_size ? d.test_subset_size : std::size_t(-1);
    return load_mnist_idx(d.test_images, d.test_labels, n, kTestStream);
  }
  std::size_t n = d.test_subset_size ? d.test_subset_size : std::size_t(-1);
  return load_cifar10_bin(d.test_paths, n, kTestStream);
}

}  // namespace compander

#endif  // COMPANDER_CONFIG_HPP
