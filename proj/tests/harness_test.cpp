#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "compander/checkpoint.hpp"
#include "compander/config.hpp"
#include "compander/export.hpp"
#include "compander/rng.hpp"
#include "compander/train.hpp"

namespace compander {
namespace {

nlohmann::json base_config_json() {
  return nlohmann::json::parse(R"({
    "model": {"kind": "mlp", "sizes": [8, 6, 2]},
    "dataset": {"kind": "synthetic",
                "synth": {"classes": 2, "per_class": 90, "dim": 8,
                          "separation": 8.0, "test_per_class": 40}},
    "seeds": [1, 2, 3],
    "epochs": 4,
    "batch_size": 16,
    "optimizer": {"kind": "sgd", "lr": 0.1, "momentum": 0.9},
    "schedule": {"milestones": [2], "factor": 0.5},
    "lambda": 5e-4,
    "reparam": {"kind": "arctan", "a": 1.0, "b": 1.0, "mode": "fixed", "scope": "per_layer"},
    "analysis": {"trace_layers": [0], "deltas": [0.005, 0.01, 0.02]},
    "validation_split": 0.1
  })");
}

TEST(Config, ParsesAllFields) {
  ExperimentConfig c = config_from_json(base_config_json());
  EXPECT_EQ(c.model.kind, "mlp");
  EXPECT_EQ(c.model.sizes, (std::vector<std::size_t>{8, 6, 2}));
  EXPECT_EQ(c.dataset.kind, "synthetic");
  EXPECT_EQ(c.dataset.synth.spec.per_class, 90u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.optimizer.kind, "sgd");
  EXPECT_DOUBLE_EQ(c.optimizer.lr, 0.1);
  EXPECT_EQ(c.schedule.milestones, (std::vector<std::size_t>{2}));
  EXPECT_DOUBLE_EQ(c.schedule.factor, 0.5);
  EXPECT_DOUBLE_EQ(c.lambda, 5e-4);
  EXPECT_EQ(c.reparam.kind, ReparamKind::Arctan);
  EXPECT_EQ(c.reparam.params.mode, AbMode::Fixed);
  EXPECT_EQ(c.reparam.params.scope, AbScope::PerLayer);
  EXPECT_EQ(c.analysis.trace_layers, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(c.validation_split, 0.1);
}

TEST(Config, DefaultsApply) {
  ExperimentConfig c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.model.kind, "mlp");
  EXPECT_EQ(c.reparam.kind, ReparamKind::Identity);
  EXPECT_EQ(c.epochs, 10u);
}

TEST(Config, RejectsBadValues) {
  auto j = base_config_json();
  j["validation_split"] = 1.0;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["validation_split"] = 0.0;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["epochs"] = 0;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["batch_size"] = 0;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["seeds"] = nlohmann::json::array();
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["optimizer"]["kind"] = "lbfgs";
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["reparam"]["kind"] = "tanh";
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["reparam"]["mode"] = "learnable";
  j["optimizer"]["kind"] = "modified_adam";
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = base_config_json();
  j["schedule"]["factor"] = 0.0;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
}

TEST(Config, BuildsModels) {
  Model mlp = build_model({"mlp", {12, 7, 3}});
  EXPECT_EQ(mlp.input_shape(), (Shape{12}));
  EXPECT_EQ(mlp.output_shape(), (Shape{3}));
  Model cnn = build_model({"small_cnn", {1, 28, 10}});
  EXPECT_EQ(cnn.input_shape(), (Shape{1, 28, 28}));
  EXPECT_EQ(cnn.output_shape(), (Shape{10}));
}

TEST(Config, SyntheticDatasetsAreSeedPairedAndTestIsFixed) {
  ExperimentConfig c = config_from_json(base_config_json());
  Dataset tr1 = load_train_dataset(c.dataset, 1);
  Dataset tr1b = load_train_dataset(c.dataset, 1);
  Dataset tr2 = load_train_dataset(c.dataset, 2);
  EXPECT_EQ(tr1.values, tr1b.values);
  EXPECT_NE(tr1.values, tr2.values);
  Dataset te_a = load_test_dataset(c.dataset);
  Dataset te_b = load_test_dataset(c.dataset);
  EXPECT_EQ(te_a.values, te_b.values);
  EXPECT_EQ(te_a.size(), 80u);
  EXPECT_NE(te_a.values, tr1.values);
}

class CheckpointFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("compander_ck_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointFiles, RoundTripIsBitwise) {
  Checkpoint ck;
  ck.manifest["kind"] = "test";
  ck.manifest["note"] = "round trip";
  StreamRng rng(1, StreamRng::Tag::kSynth, 50);
  Tensor<double> a({3, 4});
  for (auto& x : a) x = rng.normal();
  Tensor<double> b({7});
  for (auto& x : b) x = rng.uniform(-1e300, 1e300);
  b[0] = 0.0;
  b[1] = -0.0;
  b[2] = 5e-324;  // subnormal survives the byte round trip
  ck.add("weights/a", a);
  ck.add("weights/b", b);
  save_checkpoint(path("ck.bin"), ck);

  Checkpoint in = load_checkpoint(path("ck.bin"));
  EXPECT_EQ(in.manifest.at("kind"), "test");
  EXPECT_EQ(in.manifest.at("format"), 1);
  ASSERT_EQ(in.blobs.size(), 2u);
  EXPECT_EQ(in.blobs[0].first, "weights/a");
  const auto& a2 = in.at("weights/a");
  ASSERT_EQ(a2.shape(), a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a2[i], a[i]);
  const auto& b2 = in.at("weights/b");
  for (std::size_t i = 0; i < b.size(); ++i)
    EXPECT_EQ(std::memcmp(&b2[i], &b[i], 8), 0) << i;
  EXPECT_EQ(in.find("missing"), nullptr);
  EXPECT_THROW(in.at("missing"), std::runtime_error);
}

TEST_F(CheckpointFiles, DuplicateBlobRejected) {
  Checkpoint ck;
  ck.add("x", Tensor<double>({1}));
  EXPECT_THROW(ck.add("x", Tensor<double>({2})), std::invalid_argument);
}

TEST_F(CheckpointFiles, CorruptFilesError) {
  Checkpoint ck;
  ck.add("x", Tensor<double>({4}));
  save_checkpoint(path("good.bin"), ck);

  EXPECT_THROW(load_checkpoint(path("missing.bin")), std::runtime_error);

  {
    std::ofstream f(path("magic.bin"), std::ios::binary);
    f << "NOTCKPT\n5\n{}xxx";
  }
  EXPECT_THROW(load_checkpoint(path("magic.bin")), std::runtime_error);

  {
    std::ofstream f(path("len.bin"), std::ios::binary);
    f << kCheckpointMagic << "\nnotanumber\n{}";
  }
  EXPECT_THROW(load_checkpoint(path("len.bin")), std::runtime_error);

  // truncate the blob region
  auto bytes = [&] {
    std::ifstream f(path("good.bin"), std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }();
  {
    std::ofstream f(path("trunc.bin"), std::ios::binary);
    f.write(bytes.data(), std::streamsize(bytes.size() - 9));
  }
  EXPECT_THROW(load_checkpoint(path("trunc.bin")), std::runtime_error);

  // manifest cut short
  {
    std::ofstream f(path("mtrunc.bin"), std::ios::binary);
    f << kCheckpointMagic << "\n100000\n{\"format\":1}";
  }
  EXPECT_THROW(load_checkpoint(path("mtrunc.bin")), std::runtime_error);
}

ExperimentConfig export_cfg() {
  ExperimentConfig c = config_from_json(base_config_json());
  c.seeds = {1};
  return c;
}

TEST_F(CheckpointFiles, EvalMatchesTrainingTestScore) {
  ExperimentConfig cfg = export_cfg();
  Dataset tr = load_train_dataset(cfg.dataset, 1);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult r = run_one_seed(cfg, tr, te, 1, path("run.ck"));
  ASSERT_FALSE(r.failed) << r.error;

  Checkpoint ck = load_checkpoint(path("run.ck"));
  EXPECT_TRUE(ck.manifest.value("has_best", false));
  EvalResult ev = eval_checkpoint(ck, cfg.dataset, cfg.batch_size);
  EXPECT_EQ(ev.accuracy, r.test.accuracy);
  EXPECT_EQ(ev.loss, r.test.loss);
}

TEST_F(CheckpointFiles, BakeStripsReparamStateAndPreservesScores) {
  ExperimentConfig cfg = export_cfg();
  Dataset tr = load_train_dataset(cfg.dataset, 1);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult r = run_one_seed(cfg, tr, te, 1, path("run.ck"));
  ASSERT_FALSE(r.failed) << r.error;

  bake_export(path("run.ck"), path("baked.ck"));
  Checkpoint baked = load_checkpoint(path("baked.ck"));
  EXPECT_EQ(baked.manifest.value("kind", ""), "baked");
  EXPECT_FALSE(baked.manifest.contains("reparam"));
  EXPECT_FALSE(baked.manifest.contains("ab_scopes"));
  for (const auto& [name, t] : baked.blobs) {
    (void)t;
    EXPECT_TRUE(name.rfind("param/", 0) == 0 || name.rfind("bn/", 0) == 0) << name;
  }

  Checkpoint training = load_checkpoint(path("run.ck"));
  EvalResult ec = eval_checkpoint(training, cfg.dataset, cfg.batch_size);
  EvalResult eb = eval_checkpoint(baked, cfg.dataset, cfg.batch_size);
  EXPECT_EQ(eb.accuracy, ec.accuracy);
  EXPECT_EQ(eb.loss, ec.loss);
}

TEST_F(CheckpointFiles, BakeOfIdentityRunCopiesBlobsBitwise) {
  ExperimentConfig cfg = export_cfg();
  cfg.reparam = ReparamSpec{};
  Dataset tr = load_train_dataset(cfg.dataset, 1);
  Dataset te = load_test_dataset(cfg.dataset);
  run_one_seed(cfg, tr, te, 1, path("run.ck"));

  Checkpoint training = load_checkpoint(path("run.ck"));
  Checkpoint baked = bake_checkpoint(training);
  std::string prefix = training.manifest.value("has_best", false) ? "best/" : "";
  for (const auto& [name, t] : baked.blobs) {
    if (name.rfind("param/", 0) != 0) continue;
    const auto& src = training.at(prefix + name);
    ASSERT_EQ(t.size(), src.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], src[i]);
  }
}

TEST_F(CheckpointFiles, AnalyzeReportsBoundOnlyForArctan) {
  ExperimentConfig cfg = export_cfg();
  Dataset tr = load_train_dataset(cfg.dataset, 1);
  Dataset te = load_test_dataset(cfg.dataset);
  run_one_seed(cfg, tr, te, 1, path("run.ck"));
  Checkpoint training = load_checkpoint(path("run.ck"));

  auto layers = analyze_checkpoint(training, {0, 2}, {0.005, 0.01});
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(layers[0].layer, "L0");
  EXPECT_EQ(layers[1].layer, "L2");
  for (const auto& la : layers) {
    ASSERT_EQ(la.summaries.size(), 2u);
    for (const auto& s : la.summaries) {
      EXPECT_GE(s.near_zero_fraction, 0.0);
      EXPECT_LE(s.near_zero_fraction, 1.0);
      ASSERT_TRUE(s.bound_utilization.has_value());
      EXPECT_GT(*s.bound_utilization, 0.0);
      EXPECT_LT(*s.bound_utilization, 1.0);
    }
  }

  bake_export(path("run.ck"), path("baked.ck"));
  auto baked = analyze_checkpoint(load_checkpoint(path("baked.ck")), {0}, {0.01});
  EXPECT_FALSE(baked[0].summaries[0].bound_utilization.has_value());

  nlohmann::json j = layer_analysis_to_json(layers);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0].at("layer"), "L0");
  EXPECT_TRUE(j[0].at("summaries")[0].contains("bound_utilization"));

  EXPECT_THROW(analyze_checkpoint(training, {}, {0.01}), std::invalid_argument);
  EXPECT_THROW(analyze_checkpoint(training, {0}, {}), std::invalid_argument);
}

TEST_F(CheckpointFiles, ModelFromCheckpointRejectsForeignKinds) {
  Checkpoint ck;
  ck.manifest["kind"] = "mystery";
  EXPECT_THROW(model_from_checkpoint(ck), std::runtime_error);
}

}  // namespace
}  // namespace compander
