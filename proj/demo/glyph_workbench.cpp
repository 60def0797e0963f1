// Full tour of the harness on rendered digit glyphs: generate an IDX
// pair, train a companded MLP with per-epoch traces, checkpoint it,
// bake the checkpoint to a plain network, and score both.
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "compander/export.hpp"

using namespace compander;
namespace fs = std::filesystem;

int main() {
  fs::path dir = fs::temp_directory_path() / "compander_glyph_demo";
  fs::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };

  write_glyph_idx(p("train-img"), p("train-lab"), 2000, 11);
  write_glyph_idx(p("test-img"), p("test-lab"), 500, 22);

  ExperimentConfig cfg;
  cfg.model.kind = "mlp";
  cfg.model.sizes = {784, 64, 10};
  cfg.dataset.kind = "mnist";
  cfg.dataset.train_images = p("train-img");
  cfg.dataset.train_labels = p("train-lab");
  cfg.dataset.test_images = p("test-img");
  cfg.dataset.test_labels = p("test-lab");
  cfg.seeds = {1};
  cfg.epochs = 4;
  cfg.batch_size = 64;
  cfg.optimizer.kind = "sgd";
  cfg.optimizer.lr = 0.1;
  cfg.optimizer.momentum = 0.9;
  cfg.lambda = 5e-4;
  cfg.reparam.kind = ReparamKind::Arctan;

  Dataset tr = load_train_dataset(cfg.dataset, 1);
  Dataset te = load_test_dataset(cfg.dataset);
  SeedResult res = run_one_seed(cfg, tr, te, 1, p("run.ck"));
  if (res.failed) {
    std::printf("run failed: %s\n", res.error.c_str());
    return 1;
  }
  std::printf("trained %zu epochs, best val %.4f at epoch %zu, test %.4f\n",
              res.curve.size(), res.best_val_accuracy, res.best_epoch, res.test.accuracy);

  for (const auto& trace : res.traces) {
    std::ofstream os(dir / trace_csv_name(trace.layer));
    write_trace_csv(trace, os);
  }
  std::printf("traces written under %s\n", dir.string().c_str());

  bake_export(p("run.ck"), p("baked.ck"));
  Checkpoint training = load_checkpoint(p("run.ck"));
  Checkpoint baked = load_checkpoint(p("baked.ck"));
  EvalResult ev_t = eval_checkpoint(training, cfg.dataset);
  EvalResult ev_b = eval_checkpoint(baked, cfg.dataset);
  std::printf("eval training ck: %.4f   eval baked ck: %.4f   (loss delta %.3g)\n",
              ev_t.accuracy, ev_b.accuracy, ev_t.loss - ev_b.loss);

  for (const auto& la : analyze_checkpoint(training, {0}, {0.01})) {
    const auto& s = la.summaries.front();
    std::printf("%s: near-zero fraction %.4f at delta %.3g", la.layer.c_str(),
                s.near_zero_fraction, s.delta);
    if (s.bound_utilization) std::printf(", bound utilization %.3f", *s.bound_utilization);
    std::printf("\n");
  }
  return 0;
}
