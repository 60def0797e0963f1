// Command-line face of the workbench: train, grid-search, analyze,
// bake, eval, overhead, gen-idx. Configs are JSON; every flag listed
// under a subcommand overrides the matching config field.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "compander/export.hpp"

namespace fs = std::filesystem;
using namespace compander;

namespace {

// "0.5:1.0:0.1" (inclusive range), "0.5,0.7,1.0", or a single value
std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    double lo, hi, step;
    char c1, c2;
    std::istringstream is(s);
    if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0)
      throw CLI::ValidationError("expected lo:hi:step in '" + s + "'");
    for (double v = lo; v <= hi + 1e-9; v += step) out.push_back(v);
    return out;
  }
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw CLI::ValidationError("no values in '" + s + "'");
  return out;
}

std::vector<std::size_t> parse_ids(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoul(item));
  if (out.empty()) throw CLI::ValidationError("no ids in '" + s + "'");
  return out;
}

// dataset spec: a JSON file, a file holding a full config (its
// "dataset" section is used), or inline JSON starting with '{'
DatasetConfig dataset_from_spec(const std::string& spec) {
  nlohmann::json j;
  if (!spec.empty() && spec.front() == '{') {
    j = nlohmann::json::parse(spec);
  } else {
    std::ifstream in(spec);
    if (!in) throw std::runtime_error("cannot open dataset spec " + spec);
    in >> j;
  }
  if (j.contains("dataset")) j = j.at("dataset");
  nlohmann::json wrap;
  wrap["dataset"] = j;
  return config_from_json(wrap).dataset;
}

struct Overrides {
  std::vector<std::uint64_t> seeds;
  std::size_t epochs = 0, batch = 0;
  double lr = -1, momentum = -1, lambda = -1, a = 0, b = 0;
  std::string optimizer, reparam, mode, scope;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--seed", seeds, "replace the config's seed list");
    cmd->add_option("--epochs", epochs, "override epochs");
    cmd->add_option("--batch", batch, "override batch size");
    cmd->add_option("--lr", lr, "override learning rate");
    cmd->add_option("--momentum", momentum, "override SGD momentum");
    cmd->add_option("--lambda", lambda, "override weight decay");
    cmd->add_option("--optimizer", optimizer, "sgd | adam | modified_adam");
    cmd->add_option("--reparam", reparam, "identity | arctan | arcsinh | erf | powerprop");
    cmd->add_option("--a", a, "override reparam a");
    cmd->add_option("--b", b, "override reparam b");
    cmd->add_option("--mode", mode, "fixed | learnable");
    cmd->add_option("--scope", scope, "per_layer | global");
  }

  void apply(ExperimentConfig& cfg, const CLI::App* cmd) const {
    if (!seeds.empty()) cfg.seeds = seeds;
    if (cmd->count("--epochs")) cfg.epochs = epochs;
    if (cmd->count("--batch")) cfg.batch_size = batch;
    if (cmd->count("--lr")) cfg.optimizer.lr = lr;
    if (cmd->count("--momentum")) cfg.optimizer.momentum = momentum;
    if (cmd->count("--lambda")) cfg.lambda = lambda;
    if (cmd->count("--optimizer")) cfg.optimizer.kind = optimizer;
    if (cmd->count("--reparam")) cfg.reparam.kind = reparam_kind_from_name(reparam);
    if (cmd->count("--a")) cfg.reparam.params.a = a;
    if (cmd->count("--b")) cfg.reparam.params.b = b;
    if (cmd->count("--mode"))
      cfg.reparam.params.mode = mode == "learnable" ? AbMode::Learnable : AbMode::Fixed;
    if (cmd->count("--scope"))
      cfg.reparam.params.scope = scope == "global" ? AbScope::Global : AbScope::PerLayer;
    cfg.validate();
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n') c = ';';
  return s;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, bool checkpoints) {
  fs::create_directories(out_dir);
  RunResult run;
  Dataset test = load_test_dataset(cfg.dataset);
  for (std::uint64_t seed : cfg.seeds) {
    Dataset tr = load_train_dataset(cfg.dataset, seed);
    std::string ck;
    if (checkpoints)
      ck = (fs::path(out_dir) / ("checkpoint_seed" + std::to_string(seed) + ".ck")).string();
    run.seeds.push_back(run_one_seed(cfg, tr, test, seed, ck));
    const SeedResult& s = run.seeds.back();
    if (s.failed)
      std::printf("seed %llu FAILED at step %zu: %s\n",
                  static_cast<unsigned long long>(seed), s.fail_step, s.error.c_str());
    else
      std::printf("seed %llu: best val %.4f (epoch %zu), test %.4f\n",
                  static_cast<unsigned long long>(seed), s.best_val_accuracy, s.best_epoch,
                  s.test.accuracy);
  }
  aggregate_run(run);
  std::printf("mean test accuracy %.4f +- %.4f\n", run.mean_test_accuracy,
              run.std_test_accuracy);

  {
    std::ofstream os(fs::path(out_dir) / "metrics.csv");
    write_metrics_csv(run, os);
  }
  write_file(fs::path(out_dir) / "results.json", run_result_to_json(run).dump(2) + "\n");
  for (std::size_t i = 0; i < run.seeds.size(); ++i) {
    for (const auto& trace : run.seeds[i].traces) {
      std::string suffixed = "trace_" + trace.layer + "_seed" +
                             std::to_string(run.seeds[i].seed) + ".csv";
      std::ofstream os(fs::path(out_dir) / suffixed);
      write_trace_csv(trace, os);
      if (i == 0) {
        std::ofstream plain(fs::path(out_dir) / trace_csv_name(trace.layer));
        write_trace_csv(trace, plain);
      }
    }
  }
  bool any_ok = false;
  for (const auto& s : run.seeds) any_ok |= !s.failed;
  return any_ok ? 0 : 1;
}

int cmd_grid(const ExperimentConfig& cfg, const std::string& a_spec, const std::string& b_spec,
             const std::string& out_dir) {
  fs::create_directories(out_dir);
  GridResult grid = grid_search(cfg, parse_values(a_spec), parse_values(b_spec));
  std::ostringstream os;
  os << "a,b,val_acc,status\n";
  for (const auto& c : grid.cells) {
    os << c.a << ',' << c.b << ',';
    if (c.failed) {
      os << ",failed: " << csv_safe(c.error) << '\n';
    } else {
      detail::write_full_double(os, c.val_accuracy);
      os << ",ok\n";
    }
  }
  write_file(fs::path(out_dir) / "grid.csv", os.str());
  const GridCell& best = grid.cells[grid.best_index];
  std::printf("best cell: a=%g b=%g val accuracy %.4f\n", best.a, best.b, best.val_accuracy);
  return 0;
}

int cmd_analyze(const std::string& ck_path, const std::string& layer_spec,
                const std::vector<double>& deltas, const std::string& out_path) {
  Checkpoint ck = load_checkpoint(ck_path);
  auto layers = analyze_checkpoint(ck, parse_ids(layer_spec),
                                   deltas.empty() ? std::vector<double>{0.01} : deltas);
  std::string text = layer_analysis_to_json(layers).dump(2) + "\n";
  if (!out_path.empty()) write_file(out_path, text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_eval(const std::string& ck_path, const std::string& dataset_spec, std::size_t batch) {
  Checkpoint ck = load_checkpoint(ck_path);
  EvalResult r = eval_checkpoint(ck, dataset_from_spec(dataset_spec), batch);
  nlohmann::json j = {{"loss", r.loss}, {"accuracy", r.accuracy}};
  std::printf("%s\n", j.dump().c_str());
  return 0;
}

int cmd_overhead(const ExperimentConfig& cfg, std::size_t steps) {
  OverheadReport rep = overhead_report(cfg, steps);
  std::printf("steps timed: %zu\n", rep.steps);
  std::printf("identity: %.3f ms/step\n", rep.identity_ms_per_step);
  std::printf("reparam:  %.3f ms/step\n", rep.reparam_ms_per_step);
  std::printf("ratio:    %.3f (reference band %s at production scale)\n", rep.ratio,
              rep.reference_band.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weight-companding training workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", ck_path, out_path, a_spec, b_spec;
  std::string layer_spec = "0", dataset_spec, images_path, labels_path;
  std::vector<double> deltas;
  std::size_t steps = 50, batch = 256, count = 1000;
  std::uint64_t gen_seed = 1;
  bool checkpoints = false;
  Overrides ov;

  CLI::App* train_cmd = app.add_subcommand("train", "run the training protocol per seed");
  train_cmd->add_option("--config", config_path, "experiment JSON")->required();
  train_cmd->add_option("--out", out_dir, "output directory (metrics, results, traces)");
  train_cmd->add_flag("--checkpoints", checkpoints, "save a checkpoint per seed");
  ov.add_flags(train_cmd);

  CLI::App* grid_cmd = app.add_subcommand("grid-search", "grid over fixed (a, b)");
  grid_cmd->add_option("--config", config_path, "experiment JSON")->required();
  grid_cmd->add_option("--a", a_spec, "a values: lo:hi:step or comma list")->required();
  grid_cmd->add_option("--b", b_spec, "b values: lo:hi:step or comma list")->required();
  grid_cmd->add_option("--out", out_dir, "output directory (grid.csv)");

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "weight distribution of a checkpoint");
  analyze_cmd->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  analyze_cmd->add_option("--layers", layer_spec, "layer ids, comma separated");
  analyze_cmd->add_option("--delta", deltas, "near-zero threshold (repeatable)");
  analyze_cmd->add_option("--out", out_path, "also write the JSON here");

  CLI::App* bake_cmd = app.add_subcommand("bake", "export a plain inference checkpoint");
  bake_cmd->add_option("--checkpoint", ck_path, "training checkpoint")->required();
  bake_cmd->add_option("--out", out_path, "baked checkpoint path")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset's test split");
  eval_cmd->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", dataset_spec, "dataset JSON file or inline JSON")->required();
  eval_cmd->add_option("--batch", batch, "evaluation batch size");

  CLI::App* overhead_cmd = app.add_subcommand("overhead", "time reparam vs identity steps");
  overhead_cmd->add_option("--config", config_path, "experiment JSON")->required();
  overhead_cmd->add_option("--steps", steps, "steps to time per variant");

  CLI::App* gen_cmd = app.add_subcommand("gen-idx", "write a rendered-glyph IDX pair");
  gen_cmd->add_option("--images", images_path, "output images file")->required();
  gen_cmd->add_option("--labels", labels_path, "output labels file")->required();
  gen_cmd->add_option("--count", count, "number of samples");
  gen_cmd->add_option("--seed", gen_seed, "render stream seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed() || grid_cmd->parsed() || overhead_cmd->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (train_cmd->parsed()) {
        ov.apply(cfg, train_cmd);
        return cmd_train(cfg, out_dir, checkpoints);
      }
      if (grid_cmd->parsed()) return cmd_grid(cfg, a_spec, b_spec, out_dir);
      return cmd_overhead(cfg, steps);
    }
    if (analyze_cmd->parsed()) return cmd_analyze(ck_path, layer_spec, deltas, out_path);
    if (bake_cmd->parsed()) {
      bake_export(ck_path, out_path);
      std::printf("baked %s -> %s\n", ck_path.c_str(), out_path.c_str());
      return 0;
    }
    if (eval_cmd->parsed()) return cmd_eval(ck_path, dataset_spec, batch);
    write_glyph_idx(images_path, labels_path, count, gen_seed);
    std::printf("wrote %zu samples to %s / %s\n", count, images_path.c_str(),
                labels_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
