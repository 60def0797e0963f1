#include "compander/train.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace compander {
namespace {

// Separable two-blob problem in 8 dimensions. The input width keeps
// the kaiming bound of every layer inside the arctan image for a >= 0.7.
ExperimentConfig synth_cfg() {
  ExperimentConfig c;
  c.model.kind = "mlp";
  c.model.sizes = {8, 6, 2};
  c.dataset.kind = "synthetic";
  c.dataset.synth.spec.classes = 2;
  c.dataset.synth.spec.per_class = 90;
  c.dataset.synth.spec.dim = 8;
  c.dataset.synth.spec.separation = 8.0;
  c.dataset.synth.test_per_class = 40;
  c.seeds = {1, 2, 3};
  c.epochs = 20;
  c.batch_size = 16;
  c.optimizer.kind = "sgd";
  c.optimizer.lr = 0.1;
  c.optimizer.momentum = 0.9;
  c.lambda = 5e-4;
  c.reparam.kind = ReparamKind::Arctan;
  c.reparam.params.a = 1.0;
  c.reparam.params.b = 1.0;
  c.validation_split = 0.1;
  return c;
}

class TrainFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("compander_tr_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::filesystem::path dir_;
};

TEST(Training, SeparableSyntheticReachesHighAccuracy) {
  ExperimentConfig cfg = synth_cfg();
  RunResult run = train(cfg);
  ASSERT_EQ(run.seeds.size(), 3u);
  for (const auto& s : run.seeds) {
    EXPECT_FALSE(s.failed) << s.error;
    EXPECT_EQ(s.curve.size(), cfg.epochs);
    EXPECT_GE(s.best_val_accuracy, 0.0);
  }
  EXPECT_GE(run.mean_test_accuracy, 0.95);
}

TEST(Training, ZeroLrKeepsInitializationBitwise) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {7};
  cfg.epochs = 1;
  cfg.optimizer.lr = 0.0;
  Dataset tr = load_train_dataset(cfg.dataset, 7);
  TrainSession sess(cfg, tr, 7);
  while (!sess.done()) sess.train_step();

  CompandedModel fresh(build_model(cfg.model), ReparamPolicy{}, cfg.reparam, 7);
  const auto& got = sess.companded().model().params();
  const auto& want = fresh.model().params();
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t slot = 0; slot < got.size(); ++slot)
    for (std::size_t i = 0; i < got[slot].size(); ++i)
      EXPECT_EQ(got[slot][i], want[slot][i]) << "slot " << slot << " elem " << i;
  for (std::size_t ci = 0; ci < fresh.companded().size(); ++ci) {
    const auto& gv = sess.companded().companded()[ci].v;
    const auto& wv = fresh.companded()[ci].v;
    for (std::size_t i = 0; i < gv.size(); ++i) EXPECT_EQ(gv[i], wv[i]);
  }
}

TEST(Training, RepeatedRunsAreIdentical) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 5;
  Dataset tr = load_train_dataset(cfg.dataset, 2);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult r1 = run_one_seed(cfg, tr, te, 2);
  SeedResult r2 = run_one_seed(cfg, tr, te, 2);
  ASSERT_EQ(r1.curve.size(), r2.curve.size());
  for (std::size_t e = 0; e < r1.curve.size(); ++e) {
    EXPECT_EQ(r1.curve[e].train_loss, r2.curve[e].train_loss);
    EXPECT_EQ(r1.curve[e].train_accuracy, r2.curve[e].train_accuracy);
    EXPECT_EQ(r1.curve[e].val_loss, r2.curve[e].val_loss);
    EXPECT_EQ(r1.curve[e].val_accuracy, r2.curve[e].val_accuracy);
    EXPECT_EQ(r1.curve[e].lr, r2.curve[e].lr);
  }
  EXPECT_EQ(r1.test.loss, r2.test.loss);
  EXPECT_EQ(r1.test.accuracy, r2.test.accuracy);
  EXPECT_EQ(r1.best_epoch, r2.best_epoch);
  ASSERT_EQ(r1.traces.size(), r2.traces.size());
  for (std::size_t t = 0; t < r1.traces.size(); ++t) {
    ASSERT_EQ(r1.traces[t].rows.size(), r2.traces[t].rows.size());
    for (std::size_t r = 0; r < r1.traces[t].rows.size(); ++r)
      EXPECT_EQ(r1.traces[t].rows[r], r2.traces[t].rows[r]);
  }
}

TEST(Training, BestModelTracksEarliestValidationMaximum) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 8;
  cfg.seeds = {3};
  Dataset tr = load_train_dataset(cfg.dataset, 3);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult r = run_one_seed(cfg, tr, te, 3);
  ASSERT_FALSE(r.failed) << r.error;
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& m : r.curve)
    if (m.val_accuracy > best) {
      best = m.val_accuracy;
      best_epoch = m.epoch;
    }
  EXPECT_EQ(r.best_val_accuracy, best);
  EXPECT_EQ(r.best_epoch, best_epoch);
}

TEST(Training, TraceRowsCoverEveryEpochAndStartAtInit) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 4;
  cfg.seeds = {5};
  Dataset tr = load_train_dataset(cfg.dataset, 5);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult r = run_one_seed(cfg, tr, te, 5);
  ASSERT_EQ(r.traces.size(), 1u);
  const DistributionTrace& t = r.traces[0];
  EXPECT_EQ(t.layer, "L0");
  ASSERT_EQ(t.rows.size(), cfg.epochs + 1);
  for (std::size_t e = 0; e <= cfg.epochs; ++e) EXPECT_EQ(t.epochs[e], e);

  CompandedModel fresh(build_model(cfg.model), ReparamPolicy{}, cfg.reparam, 5);
  std::size_t slot = fresh.model().param_index("L0.weight");
  std::array<double, 9> init_row{};
  auto p = percentiles(std::span<const double>(fresh.model().params()[slot].data(),
                                               fresh.model().params()[slot].size()),
                       kTraceLevels);
  std::copy(p.begin(), p.end(), init_row.begin());
  EXPECT_EQ(t.rows[0], init_row);
}

TEST_F(TrainFiles, CheckpointResumeIsBitwise) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 3;
  cfg.seeds = {11};
  Dataset tr = load_train_dataset(cfg.dataset, 11);

  TrainSession a(cfg, tr, 11);
  for (int i = 0; i < 10; ++i) a.train_step();  // mid-epoch save point
  a.save(path("mid.ck"));
  for (int i = 0; i < 20; ++i) a.train_step();
  a.save(path("a.ck"));

  TrainSession b(cfg, tr, 11);
  b.restore(load_checkpoint(path("mid.ck")));
  EXPECT_EQ(b.global_step(), 10u);
  for (int i = 0; i < 20; ++i) b.train_step();
  b.save(path("b.ck"));

  auto slurp = [&](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  std::string fa = slurp(path("a.ck")), fb = slurp(path("b.ck"));
  ASSERT_FALSE(fa.empty());
  EXPECT_EQ(fa, fb);
}

TEST_F(TrainFiles, CheckpointResumeLearnableAdam) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 2;
  cfg.seeds = {4};
  cfg.optimizer.kind = "adam";
  cfg.optimizer.lr = 0.01;
  cfg.lambda = 1e-3;
  cfg.reparam.params.mode = AbMode::Learnable;
  cfg.reparam.params.scope = AbScope::PerLayer;
  Dataset tr = load_train_dataset(cfg.dataset, 4);

  TrainSession a(cfg, tr, 4);
  for (int i = 0; i < 7; ++i) a.train_step();
  a.save(path("mid.ck"));
  for (int i = 0; i < 9; ++i) a.train_step();
  a.save(path("a.ck"));

  TrainSession b(cfg, tr, 4);
  b.restore(load_checkpoint(path("mid.ck")));
  for (int i = 0; i < 9; ++i) b.train_step();
  b.save(path("b.ck"));

  auto slurp = [&](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(slurp(path("a.ck")), slurp(path("b.ck")));
}

TEST_F(TrainFiles, RestoreRejectsMismatchedConfig) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 2;
  cfg.seeds = {1};
  Dataset tr = load_train_dataset(cfg.dataset, 1);
  TrainSession a(cfg, tr, 1);
  a.train_step();
  a.save(path("a.ck"));
  Checkpoint ck = load_checkpoint(path("a.ck"));

  {
    TrainSession other(cfg, tr, 2);
    EXPECT_THROW(other.restore(ck), std::runtime_error);  // seed mismatch
  }
  {
    ExperimentConfig c2 = cfg;
    c2.lambda = 0.0;
    TrainSession other(c2, tr, 1);
    EXPECT_THROW(other.restore(ck), std::runtime_error);
  }
  {
    ExperimentConfig c2 = cfg;
    c2.reparam.params.b = 0.8;
    TrainSession other(c2, tr, 1);
    EXPECT_THROW(other.restore(ck), std::runtime_error);
  }
  {
    ExperimentConfig c2 = cfg;
    c2.model.sizes = {8, 5, 2};
    TrainSession other(c2, tr, 1);
    EXPECT_THROW(other.restore(ck), std::runtime_error);
  }
}

TEST(Training, AdamVariantsTrain) {
  for (const char* kind : {"adam", "modified_adam"}) {
    ExperimentConfig cfg = synth_cfg();
    cfg.seeds = {1};
    cfg.epochs = 10;
    cfg.optimizer.kind = kind;
    cfg.optimizer.lr = 0.01;
    cfg.lambda = 0.0;
    RunResult run = train(cfg);
    ASSERT_FALSE(run.seeds[0].failed) << kind << ": " << run.seeds[0].error;
    EXPECT_GE(run.mean_test_accuracy, 0.9) << kind;
  }
}

TEST(Training, LearnableAbStaysValidAndMoves) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {1};
  cfg.epochs = 10;
  cfg.optimizer.lr = 0.05;
  cfg.lambda = 1e-3;
  cfg.reparam.params.mode = AbMode::Learnable;
  cfg.reparam.params.scope = AbScope::PerLayer;
  RunResult run = train(cfg);
  const SeedResult& s = run.seeds[0];
  ASSERT_FALSE(s.failed) << s.error;
  ASSERT_EQ(s.final_ab.size(), 2u);  // L0 and L2 weight scopes
  bool moved = false;
  for (const auto& ab : s.final_ab) {
    EXPECT_TRUE(std::isfinite(ab.a) && std::isfinite(ab.b));
    EXPECT_GE(ab.a, 0.05);
    EXPECT_GE(ab.b, 0.05);
    if (ab.a != 1.0 || ab.b != 1.0) moved = true;
  }
  EXPECT_TRUE(moved);
}

TEST(Training, GlobalScopeSharesOnePair) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {1};
  cfg.epochs = 2;
  cfg.reparam.params.mode = AbMode::Learnable;
  cfg.reparam.params.scope = AbScope::Global;
  RunResult run = train(cfg);
  const SeedResult& s = run.seeds[0];
  ASSERT_FALSE(s.failed) << s.error;
  ASSERT_EQ(s.final_ab.size(), 1u);
  EXPECT_EQ(s.final_ab[0].name, "global");
}

TEST_F(TrainFiles, SmallCnnGlyphSmoke) {
  // a small real-format idx pair rendered from the builtin glyphs
  write_glyph_idx(path("tr-img"), path("tr-lab"), 120, 123);
  write_glyph_idx(path("te-img"), path("te-lab"), 40, 456);

  ExperimentConfig cfg;
  cfg.model.kind = "small_cnn";
  cfg.model.sizes = {1, 28, 10};
  cfg.dataset.kind = "mnist";
  cfg.dataset.train_images = path("tr-img");
  cfg.dataset.train_labels = path("tr-lab");
  cfg.dataset.test_images = path("te-img");
  cfg.dataset.test_labels = path("te-lab");
  cfg.seeds = {1};
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.optimizer.kind = "sgd";
  cfg.optimizer.lr = 0.05;
  cfg.optimizer.momentum = 0.9;
  cfg.lambda = 5e-4;
  cfg.reparam.kind = ReparamKind::Arctan;
  RunResult run = train(cfg);
  const SeedResult& s = run.seeds[0];
  ASSERT_FALSE(s.failed) << s.error;
  ASSERT_EQ(s.curve.size(), 2u);
  for (const auto& m : s.curve) {
    EXPECT_TRUE(std::isfinite(m.train_loss));
    EXPECT_TRUE(std::isfinite(m.val_loss));
  }
  EXPECT_GE(s.test.accuracy, 0.0);
  ASSERT_EQ(s.traces.size(), 1u);
  EXPECT_EQ(s.traces[0].rows.size(), 3u);
}

TEST(Grid, CartesianOrderAndTieBreak) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 1;
  cfg.optimizer.lr = 0.0;  // every cell scores the untouched initialization
  GridResult g = grid_search(cfg, {0.7, 1.0}, {0.7, 1.0});
  ASSERT_EQ(g.cells.size(), 4u);
  EXPECT_EQ(g.cells[0].a, 0.7);
  EXPECT_EQ(g.cells[0].b, 0.7);
  EXPECT_EQ(g.cells[1].a, 0.7);
  EXPECT_EQ(g.cells[1].b, 1.0);
  EXPECT_EQ(g.cells[2].a, 1.0);
  EXPECT_EQ(g.cells[2].b, 0.7);
  EXPECT_EQ(g.cells[3].a, 1.0);
  EXPECT_EQ(g.cells[3].b, 1.0);
  for (const auto& c : g.cells) EXPECT_FALSE(c.failed) << c.error;
  EXPECT_EQ(g.cells[0].val_accuracy, g.cells[3].val_accuracy);
  EXPECT_EQ(g.best_index, 0u);  // ties break toward small a, then small b
}

TEST(Grid, FailedCellsAreRecordedNotFatal) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 1;
  // a = 0.2 confines weights to (-0.1 pi, 0.1 pi), below the kaiming
  // bound of the 8-input first layer, so initialization cannot invert
  GridResult g = grid_search(cfg, {0.2, 1.0}, {1.0});
  ASSERT_EQ(g.cells.size(), 2u);
  EXPECT_TRUE(g.cells[0].failed);
  EXPECT_FALSE(g.cells[0].error.empty());
  EXPECT_FALSE(g.cells[1].failed);
  EXPECT_EQ(g.best_index, 1u);
}

TEST(Grid, AllCellsFailedThrows) {
  ExperimentConfig cfg = synth_cfg();
  cfg.epochs = 1;
  EXPECT_THROW(grid_search(cfg, {0.1, 0.2}, {1.0}), std::runtime_error);
}

TEST(Grid, RejectsEmptyListsAndLearnableMode) {
  ExperimentConfig cfg = synth_cfg();
  EXPECT_THROW(grid_search(cfg, {}, {1.0}), std::invalid_argument);
  EXPECT_THROW(grid_search(cfg, {1.0}, {}), std::invalid_argument);
  cfg.reparam.params.mode = AbMode::Learnable;
  EXPECT_THROW(grid_search(cfg, {1.0}, {1.0}), std::invalid_argument);
}

TEST(Training, OverheadReportProducesSaneNumbers) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {1};
  cfg.epochs = 3;
  OverheadReport rep = overhead_report(cfg, 20);
  EXPECT_EQ(rep.steps, 20u);
  EXPECT_GT(rep.identity_ms_per_step, 0.0);
  EXPECT_GT(rep.reparam_ms_per_step, 0.0);
  EXPECT_TRUE(std::isfinite(rep.ratio));
  EXPECT_GT(rep.ratio, 0.1);
  EXPECT_LT(rep.ratio, 50.0);
  EXPECT_EQ(rep.reference_band, "7-14%");
}

TEST(Writers, MetricsCsvHasTrainValAndTestRows) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {1, 2};
  cfg.epochs = 2;
  RunResult run = train(cfg);
  std::ostringstream os;
  write_metrics_csv(run, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "seed,epoch,split,loss,accuracy,lr");
  std::size_t rows = 0, test_rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.find(",test,") != std::string::npos) ++test_rows;
  }
  EXPECT_EQ(rows, 2 * (2 * 2 + 1));
  EXPECT_EQ(test_rows, 2u);
}

TEST(Writers, RunResultJsonShape) {
  ExperimentConfig cfg = synth_cfg();
  cfg.seeds = {1};
  cfg.epochs = 2;
  RunResult run = train(cfg);
  nlohmann::json j = run_result_to_json(run);
  EXPECT_TRUE(j.contains("mean_test_accuracy"));
  EXPECT_TRUE(j.contains("std_test_accuracy"));
  ASSERT_EQ(j.at("seeds").size(), 1u);
  const auto& s = j.at("seeds")[0];
  EXPECT_EQ(s.at("seed"), 1);
  EXPECT_FALSE(s.at("failed").get<bool>());
  EXPECT_EQ(s.at("curve").size(), 2u);
  ASSERT_EQ(s.at("near_zero").size(), cfg.analysis.deltas.size());
  for (const auto& e : s.at("near_zero")) {
    EXPECT_TRUE(e.contains("fraction"));
    EXPECT_TRUE(e.contains("bound_utilization"));  // arctan runs report it
  }
  EXPECT_EQ(s.at("ab").size(), 2u);
}

TEST(Training, AggregateSkipsFailedSeeds) {
  RunResult run;
  SeedResult ok1;
  ok1.test.accuracy = 0.9;
  SeedResult ok2;
  ok2.test.accuracy = 0.7;
  SeedResult bad;
  bad.failed = true;
  bad.test.accuracy = 123.0;
  run.seeds = {ok1, bad, ok2};
  aggregate_run(run);
  EXPECT_DOUBLE_EQ(run.mean_test_accuracy, 0.8);
  EXPECT_NEAR(run.std_test_accuracy, std::sqrt(0.02), 1e-12);
}

}  // namespace
}  // namespace compander
