#ifndef COMPANDER_TRAIN_HPP
#define COMPANDER_TRAIN_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "compander/analysis.hpp"
#include "compander/checkpoint.hpp"
#include "compander/compand.hpp"
#include "compander/config.hpp"
#include "compander/dataset.hpp"
#include "compander/nn.hpp"
#include "compander/optim.hpp"
#include "compander/rng.hpp"

namespace compander {

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0, train_accuracy = 0;
  double val_loss = 0, val_accuracy = 0;
  double wall_seconds = 0;  // informational; excluded from determinism
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::size_t fail_step = 0;
  std::vector<EpochMetrics> curve;
  double best_val_accuracy = -1;
  std::size_t best_epoch = 0;
  EvalResult test;
  std::vector<DistributionTrace> traces;
  std::vector<AbScopeState> final_ab;
  // best-model first-weight-layer summaries, one per configured delta
  std::vector<DistributionSummary> first_layer_summaries;
};

struct RunResult {
  std::vector<SeedResult> seeds;
  double mean_test_accuracy = 0;
  double std_test_accuracy = 0;  // sample standard deviation
};

inline EvalResult eval_model(Model& m, const Dataset& ds, std::span<const std::size_t> idx,
                             std::size_t batch_size, const Shape& sample_shape) {
  if (idx.empty()) throw std::invalid_argument("eval: empty index set");
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < idx.size(); s += batch_size) {
    std::size_t e = std::min(s + batch_size, idx.size());
    std::span<const std::size_t> chunk(idx.data() + s, e - s);
    auto x = make_batch(ds, chunk, sample_shape);
    auto y = batch_labels(ds, chunk);
    auto f = m.forward(x, &y, false);
    loss_sum += f.tape.value(f.output)[0] * double(e - s);
    const auto& logits = f.tape.value(f.logits);
    std::size_t classes = logits.size() / (e - s);
    for (std::size_t r = 0; r < e - s; ++r) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (logits[r * classes + c] > logits[r * classes + arg]) arg = c;
      if (arg == y[r]) ++correct;
    }
  }
  return {loss_sum / double(idx.size()), double(correct) / double(idx.size())};
}

inline EvalResult eval_model(Model& m, const Dataset& ds, std::size_t batch_size,
                             const Shape& sample_shape) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return eval_model(m, ds, idx, batch_size, sample_shape);
}

/// One seed's training state with mini-batch step granularity. The
/// session is a pure function of (config, dataset, seed): the split,
/// every epoch's batch order, and all initialization come from counter
/// streams, so a session restored from a checkpoint continues exactly
/// where the saved one left off.
class TrainSession {
 public:
  TrainSession(const ExperimentConfig& cfg, const Dataset& train_full, std::uint64_t seed)
      : cfg_(cfg),
        data_(&train_full),
        seed_(seed),
        cm_(build_model(cfg.model), ReparamPolicy{}, cfg.reparam, seed) {
    cfg_.validate();
    input_shape_ = cm_.model().input_shape();
    split_train_val();
    build_optimizer();
    resolve_trace_slots();
  }

  const ExperimentConfig& config() const { return cfg_; }
  CompandedModel& companded() { return cm_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t global_step() const { return global_step_; }
  bool done() const { return epoch_ >= cfg_.epochs; }
  const std::vector<std::size_t>& train_indices() const { return train_idx_; }
  const std::vector<std::size_t>& val_indices() const { return val_idx_; }
  const std::vector<DistributionTrace>& traces() const { return traces_; }
  bool has_best() const { return has_best_; }
  double best_val_accuracy() const { return best_val_acc_; }
  std::size_t best_epoch() const { return best_epoch_; }
  const std::vector<Tensor<double>>& best_params() const { return best_params_; }
  const std::vector<AbScopeState>& best_ab() const { return best_ab_; }

  /// Epoch-0 rows: the initialized weights before any step.
  void record_initial_traces() {
    for (std::size_t t = 0; t < trace_slots_.size(); ++t)
      trace_epoch(traces_[t], 0, cm_.model().params()[trace_slots_[t]]);
  }

  /// One mini-batch: forward, chain backward, optimizer step, a/b step
  /// when learnable, one weight-cache refresh.
  void train_step() {
    if (done()) throw std::logic_error("train_step: all epochs finished");
    if (pos_ == 0) start_epoch();
    std::size_t e = std::min(pos_ + cfg_.batch_size, order_.size());
    std::span<const std::size_t> idx(order_.data() + pos_, e - pos_);
    auto x = make_batch(*data_, idx, input_shape_);
    auto y = batch_labels(*data_, idx);

    cm_.materialize_all();
    auto f = cm_.model().forward(x, &y, true);
    double loss = f.tape.value(f.output)[0];
    if (!std::isfinite(loss))
      throw DivergenceError("loss", "non-finite at step " + std::to_string(global_step_));
    accumulate_batch_metrics(f, y, loss);
    auto grads = cm_.model().backward(f);

    const bool learnable = cfg_.reparam.params.mode == AbMode::Learnable;
    if (learnable) {
      cm_.zero_ab_grads();
      cm_.accumulate_ab_grads(grads);
    }

    double lr = lr_at(cfg_.schedule, cfg_.optimizer.lr, epoch_);
    sgd_.lr = lr;
    adam_.lr = lr;

    const auto& infos = cm_.model().param_infos();
    for (std::size_t slot = 0; slot < grads.size(); ++slot) {
      const std::string& name = infos[slot].name;
      if (cm_.is_companded(slot)) {
        std::size_t ci = cm_.companded_index(slot);
        // learnable mode decays the latent v directly, fixed mode
        // decays psi(v) through the chain rule
        double lam_psi = learnable ? 0.0 : cfg_.lambda;
        auto cr = cm_.chain_backward(ci, grads[slot], lam_psi);
        auto& v = cm_.companded()[ci].v;
        if (learnable && cfg_.lambda > 0) {
          const double two_lambda = 2.0 * cfg_.lambda;
          for (std::size_t i = 0; i < v.size(); ++i) cr.grad_v[i] += two_lambda * v[i];
        }
        if (opt_ == OptKind::kSgd) {
          sgd_step(sgd_, slot, v, cr.grad_v, name);
        } else if (opt_ == OptKind::kAdam) {
          adam_step(adam_, slot, v, cr.grad_v, name);
        } else {
          auto pp = cm_.psi_prime_tensor(ci);
          modified_adam_step(adam_, slot, v, cr.grad_psi_raw, pp, name);
        }
      } else {
        Tensor<double>& w = cm_.model().params()[slot];
        Tensor<double> g = grads[slot];
        if (infos[slot].role == ParamRole::Weight && cfg_.lambda > 0) {
          const double two_lambda = 2.0 * cfg_.lambda;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += two_lambda * w[i];
        }
        if (opt_ == OptKind::kSgd)
          sgd_step(sgd_, slot, w, g, name);
        else
          adam_step(adam_, slot, w, g, name);
      }
    }

    if (learnable) {
      for (auto& s : cm_.ab_state().scopes) {
        s.a -= lr * s.grad_a;
        s.b -= lr * s.grad_b;
      }
      cm_.clamp_ab();
    }
    cm_.mark_dirty();
    cm_.materialize_all();

    ++global_step_;
    pos_ = e;
    if (pos_ >= order_.size()) {
      pos_ = 0;
      ++epoch_;
    }
  }

  /// Runs the steps of the current epoch; returns its training stats.
  std::pair<double, double> run_epoch() {
    std::size_t e = epoch_;
    if (done()) throw std::logic_error("run_epoch: all epochs finished");
    while (!done() && epoch_ == e) train_step();
    auto out = std::make_pair(ep_loss_ / double(ep_seen_), double(ep_correct_) / double(ep_seen_));
    return out;
  }

  void record_epoch_traces(std::size_t completed_epoch) {
    cm_.materialize_all();
    for (std::size_t t = 0; t < trace_slots_.size(); ++t)
      trace_epoch(traces_[t], completed_epoch + 1, cm_.model().params()[trace_slots_[t]]);
  }

  EvalResult evaluate_validation() {
    cm_.materialize_all();
    return eval_model(cm_.model(), *data_, val_idx_, cfg_.batch_size, input_shape_);
  }

  /// Remembers the current model when it beats the best validation
  /// accuracy so far; strict improvement keeps the earliest epoch on
  /// ties.
  void consider_best(double val_accuracy, std::size_t epoch_index) {
    if (val_accuracy <= best_val_acc_ && has_best_) return;
    has_best_ = true;
    best_val_acc_ = val_accuracy;
    best_epoch_ = epoch_index;
    best_params_ = cm_.model().params();
    best_bn_ = cm_.model().bn_buffers();
    best_ab_ = cm_.ab_state().scopes;
  }

  /// Test-set evaluation of the remembered best model.
  EvalResult evaluate_best(const Dataset& test) {
    if (!has_best_) throw std::logic_error("evaluate_best: no best model recorded");
    Model m = cm_.model();
    m.params() = best_params_;
    m.bn_buffers() = best_bn_;
    return eval_model(m, test, cfg_.batch_size, input_shape_);
  }

  std::vector<DistributionSummary> best_first_layer_summaries() const {
    if (!has_best_) throw std::logic_error("no best model recorded");
    std::size_t slot = first_weight_slot();
    std::optional<double> bound;
    if (cfg_.reparam.kind == ReparamKind::Arctan && cm_.is_companded(slot)) {
      std::size_t scope = cm_.companded()[cm_.companded_index(slot)].scope;
      bound = best_ab_.at(scope).a * (std::numbers::pi / 2);
    }
    std::vector<DistributionSummary> out;
    for (double delta : cfg_.analysis.deltas)
      out.push_back(snapshot_layer(best_params_.at(slot), delta, bound));
    return out;
  }

  void save(const std::string& path) const {
    Checkpoint ck;
    ck.manifest["kind"] = "training";
    ck.manifest["model"] = model_to_json(cfg_.model);
    ck.manifest["reparam"] = reparam_to_json(cfg_.reparam);
    ck.manifest["optimizer"] = {{"kind", cfg_.optimizer.kind},
                                {"lr", cfg_.optimizer.lr},
                                {"momentum", cfg_.optimizer.momentum},
                                {"beta1", cfg_.optimizer.beta1},
                                {"beta2", cfg_.optimizer.beta2},
                                {"eps", cfg_.optimizer.eps}};
    ck.manifest["lambda"] = cfg_.lambda;
    ck.manifest["epochs"] = cfg_.epochs;
    ck.manifest["batch_size"] = cfg_.batch_size;
    ck.manifest["validation_split"] = cfg_.validation_split;
    ck.manifest["seed"] = seed_;
    ck.manifest["epoch"] = epoch_;
    ck.manifest["pos"] = pos_;
    ck.manifest["global_step"] = global_step_;
    ck.manifest["has_best"] = has_best_;
    ck.manifest["best_val_accuracy"] = best_val_acc_;
    ck.manifest["best_epoch"] = best_epoch_;

    const auto& infos = cm_.model().param_infos();
    for (std::size_t slot = 0; slot < infos.size(); ++slot)
      ck.add("param/" + infos[slot].name, cm_.model().params()[slot]);
    for (const auto& cp : cm_.companded())
      ck.add("latent/" + infos[cp.slot].name, cp.v);
    for (const auto& [layer, buf] : cm_.model().bn_buffers()) {
      ck.add("bn/" + std::to_string(layer) + "/mean", buf.running_mean);
      ck.add("bn/" + std::to_string(layer) + "/var", buf.running_var);
    }
    if (opt_ == OptKind::kSgd) {
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        ck.add("opt/vel/" + infos[slot].name, sgd_.velocity[slot]);
    } else {
      for (std::size_t slot = 0; slot < infos.size(); ++slot) {
        ck.add("opt/m/" + infos[slot].name, adam_.m[slot]);
        ck.add("opt/s/" + infos[slot].name, adam_.s[slot]);
      }
      Tensor<double> t({infos.size()});
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        t[slot] = double(adam_.t[slot]);
      ck.add("opt/t", t);
    }
    const auto& scopes = cm_.ab_state().scopes;
    if (!scopes.empty()) {
      Tensor<double> a({scopes.size()}), b({scopes.size()});
      nlohmann::json names = nlohmann::json::array();
      for (std::size_t s = 0; s < scopes.size(); ++s) {
        a[s] = scopes[s].a;
        b[s] = scopes[s].b;
        names.push_back(scopes[s].name);
      }
      ck.manifest["ab_scopes"] = std::move(names);
      ck.add("ab/a", a);
      ck.add("ab/b", b);
    }
    if (has_best_) {
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        ck.add("best/param/" + infos[slot].name, best_params_[slot]);
      for (const auto& [layer, buf] : best_bn_) {
        ck.add("best/bn/" + std::to_string(layer) + "/mean", buf.running_mean);
        ck.add("best/bn/" + std::to_string(layer) + "/var", buf.running_var);
      }
      if (!best_ab_.empty()) {
        Tensor<double> a({best_ab_.size()}), b({best_ab_.size()});
        for (std::size_t s = 0; s < best_ab_.size(); ++s) {
          a[s] = best_ab_[s].a;
          b[s] = best_ab_[s].b;
        }
        ck.add("best/ab/a", a);
        ck.add("best/ab/b", b);
      }
    }
    save_checkpoint(path, ck);
  }

  /// Restores a session saved by save(); config and seed must match.
  void restore(const Checkpoint& ck) {
    if (ck.manifest.value("kind", "") != "training")
      throw std::runtime_error("restore: not a training checkpoint");
    if (ck.manifest.at("model") != model_to_json(cfg_.model) ||
        ck.manifest.at("reparam") != reparam_to_json(cfg_.reparam) ||
        ck.manifest.at("seed").get<std::uint64_t>() != seed_ ||
        ck.manifest.at("optimizer").at("kind").get<std::string>() != cfg_.optimizer.kind ||
        ck.manifest.at("batch_size").get<std::size_t>() != cfg_.batch_size ||
        ck.manifest.at("epochs").get<std::size_t>() != cfg_.epochs ||
        ck.manifest.at("lambda").get<double>() != cfg_.lambda ||
        ck.manifest.at("validation_split").get<double>() != cfg_.validation_split)
      throw std::runtime_error("restore: checkpoint does not match this config/seed");

    const auto& infos = cm_.model().param_infos();
    for (std::size_t slot = 0; slot < infos.size(); ++slot)
      cm_.model().params()[slot] = ck.at("param/" + infos[slot].name);
    for (auto& cp : cm_.companded()) {
      cp.v = ck.at("latent/" + infos[cp.slot].name);
      cp.dirty = false;  // param blob above is its materialization
    }
    for (auto& [layer, buf] : cm_.model().bn_buffers()) {
      buf.running_mean = ck.at("bn/" + std::to_string(layer) + "/mean");
      buf.running_var = ck.at("bn/" + std::to_string(layer) + "/var");
    }
    if (opt_ == OptKind::kSgd) {
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        sgd_.velocity[slot] = ck.at("opt/vel/" + infos[slot].name);
    } else {
      for (std::size_t slot = 0; slot < infos.size(); ++slot) {
        adam_.m[slot] = ck.at("opt/m/" + infos[slot].name);
        adam_.s[slot] = ck.at("opt/s/" + infos[slot].name);
      }
      const auto& t = ck.at("opt/t");
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        adam_.t[slot] = std::int64_t(t[slot]);
    }
    auto& scopes = cm_.ab_state().scopes;
    if (!scopes.empty()) {
      const auto& a = ck.at("ab/a");
      const auto& b = ck.at("ab/b");
      for (std::size_t s = 0; s < scopes.size(); ++s) {
        scopes[s].a = a[s];
        scopes[s].b = b[s];
      }
    }
    epoch_ = ck.manifest.at("epoch").get<std::size_t>();
    pos_ = ck.manifest.at("pos").get<std::size_t>();
    global_step_ = ck.manifest.at("global_step").get<std::size_t>();
    has_best_ = ck.manifest.at("has_best").get<bool>();
    best_val_acc_ = ck.manifest.at("best_val_accuracy").get<double>();
    best_epoch_ = ck.manifest.at("best_epoch").get<std::size_t>();
    if (has_best_) {
      best_params_.clear();
      for (std::size_t slot = 0; slot < infos.size(); ++slot)
        best_params_.push_back(ck.at("best/param/" + infos[slot].name));
      best_bn_.clear();
      for (const auto& [layer, buf] : cm_.model().bn_buffers()) {
        BnBuffers nb(buf.running_mean.size());
        nb.running_mean = ck.at("best/bn/" + std::to_string(layer) + "/mean");
        nb.running_var = ck.at("best/bn/" + std::to_string(layer) + "/var");
        best_bn_.insert_or_assign(layer, std::move(nb));
      }
      best_ab_.clear();
      if (const Tensor<double>* a = ck.find("best/ab/a")) {
        const auto& b = ck.at("best/ab/b");
        for (std::size_t s = 0; s < a->size(); ++s) {
          AbScopeState st = cm_.ab_state().scopes.at(s);
          st.a = (*a)[s];
          st.b = b[s];
          best_ab_.push_back(st);
        }
      }
    }
    // mid-epoch resume continues the recomputed batch order
    if (!done() && pos_ > 0) order_ = epoch_order();
    if (pos_ == 0) ep_seen_ = ep_correct_ = 0, ep_loss_ = 0;
  }

  std::size_t first_weight_slot() const {
    const auto& infos = cm_.model().param_infos();
    for (std::size_t slot = 0; slot < infos.size(); ++slot)
      if (infos[slot].role == ParamRole::Weight) return slot;
    throw std::logic_error("model has no weight parameters");
  }

 private:
  enum OptKind { kSgd, kAdam, kModifiedAdam };

  ExperimentConfig cfg_;
  const Dataset* data_;
  std::uint64_t seed_;
  Shape input_shape_;
  CompandedModel cm_;
  SgdState sgd_;
  AdamState adam_;
  OptKind opt_ = kSgd;

  std::vector<std::size_t> train_idx_, val_idx_, order_;
  std::size_t epoch_ = 0, pos_ = 0, global_step_ = 0;
  double ep_loss_ = 0;
  std::size_t ep_correct_ = 0, ep_seen_ = 0;

  bool has_best_ = false;
  double best_val_acc_ = -1;
  std::size_t best_epoch_ = 0;
  std::vector<Tensor<double>> best_params_;
  std::map<std::size_t, BnBuffers> best_bn_;
  std::vector<AbScopeState> best_ab_;

  std::vector<std::size_t> trace_slots_;
  std::vector<DistributionTrace> traces_;

  void split_train_val() {
    std::size_t n = data_->size();
    if (n < 2) throw std::invalid_argument("training data needs at least 2 samples");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    StreamRng rng(seed_, StreamRng::kSplit);
    rng.shuffle(idx.begin(), idx.end());
    auto n_val = std::size_t(std::llround(cfg_.validation_split * double(n)));
    n_val = std::max<std::size_t>(1, std::min(n_val, n - 1));
    val_idx_.assign(idx.begin(), idx.begin() + std::ptrdiff_t(n_val));
    train_idx_.assign(idx.begin() + std::ptrdiff_t(n_val), idx.end());
  }

  void build_optimizer() {
    std::vector<Shape> shapes;
    for (const auto& p : cm_.model().params()) shapes.push_back(p.shape());
    const auto& o = cfg_.optimizer;
    if (o.kind == "sgd") {
      opt_ = kSgd;
      sgd_ = SgdState(o.lr, o.momentum, cfg_.lambda, shapes);
    } else {
      opt_ = o.kind == "adam" ? kAdam : kModifiedAdam;
      adam_ = AdamState(o.lr, o.beta1, o.beta2, o.eps, cfg_.lambda, shapes);
    }
  }

  void resolve_trace_slots() {
    for (std::size_t layer : cfg_.analysis.trace_layers) {
      std::size_t slot = cm_.model().param_index("L" + std::to_string(layer) + ".weight");
      trace_slots_.push_back(slot);
      DistributionTrace t;
      t.layer = "L" + std::to_string(layer);
      traces_.push_back(std::move(t));
    }
  }

  std::vector<std::size_t> epoch_order() const {
    std::vector<std::size_t> order = train_idx_;
    StreamRng rng(seed_, StreamRng::kShuffle, epoch_);
    rng.shuffle(order.begin(), order.end());
    return order;
  }

  void start_epoch() {
    order_ = epoch_order();
    ep_loss_ = 0;
    ep_correct_ = 0;
    ep_seen_ = 0;
  }

  void accumulate_batch_metrics(const Model::ForwardResult& f, const std::vector<std::size_t>& y,
                                double loss) {
    const auto& logits = f.tape.value(f.logits);
    std::size_t rows = y.size();
    std::size_t classes = logits.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (logits[r * classes + c] > logits[r * classes + arg]) arg = c;
      if (arg == y[r]) ++ep_correct_;
    }
    ep_loss_ += loss * double(rows);
    ep_seen_ += rows;
  }
};

/// Full protocol for one seed: epochs with per-epoch validation, best
/// model tracking, traces at every epoch including 0, and a final
/// test-set evaluation of the best model.
inline SeedResult run_one_seed(const ExperimentConfig& cfg, const Dataset& train_full,
                               const Dataset& test, std::uint64_t seed,
                               const std::string& save_path = {}) {
  SeedResult res;
  res.seed = seed;
  TrainSession sess(cfg, train_full, seed);
  sess.record_initial_traces();
  try {
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      auto t0 = std::chrono::steady_clock::now();
      auto [train_loss, train_acc] = sess.run_epoch();
      EvalResult val = sess.evaluate_validation();
      sess.consider_best(val.accuracy, e);
      sess.record_epoch_traces(e);
      auto t1 = std::chrono::steady_clock::now();
      EpochMetrics m;
      m.epoch = e;
      m.lr = lr_at(cfg.schedule, cfg.optimizer.lr, e);
      m.train_loss = train_loss;
      m.train_accuracy = train_acc;
      m.val_loss = val.loss;
      m.val_accuracy = val.accuracy;
      m.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
      res.curve.push_back(m);
    }
    res.best_val_accuracy = sess.best_val_accuracy();
    res.best_epoch = sess.best_epoch();
    res.test = sess.evaluate_best(test);
    res.first_layer_summaries = sess.best_first_layer_summaries();
  } catch (const DivergenceError& e) {
    res.failed = true;
    res.error = e.what();
    res.fail_step = sess.global_step();
  }
  res.traces = sess.traces();
  res.final_ab = sess.companded().ab_state().scopes;
  if (!save_path.empty()) sess.save(save_path);
  return res;
}

inline void aggregate_run(RunResult& run) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : run.seeds)
    if (!s.failed) {
      sum += s.test.accuracy;
      ++n;
    }
  run.mean_test_accuracy = n ? sum / double(n) : 0.0;
  if (n >= 2) {
    double sq = 0;
    for (const auto& s : run.seeds)
      if (!s.failed) {
        double d = s.test.accuracy - run.mean_test_accuracy;
        sq += d * d;
      }
    run.std_test_accuracy = std::sqrt(sq / double(n - 1));
  } else {
    run.std_test_accuracy = 0.0;
  }
}

inline RunResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult run;
  Dataset test = load_test_dataset(cfg.dataset);
  for (std::uint64_t seed : cfg.seeds) {
    Dataset tr = load_train_dataset(cfg.dataset, seed);
    run.seeds.push_back(run_one_seed(cfg, tr, test, seed));
  }
  aggregate_run(run);
  return run;
}

struct GridCell {
  double a = 0, b = 0;
  bool failed = false;
  std::string error;
  double val_accuracy = 0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best_index = 0;
};

/// Grid over (a, b) on the first seed only; ties go to the smaller a,
/// then the smaller b.
inline GridResult grid_search(const ExperimentConfig& cfg, const std::vector<double>& a_values,
                              const std::vector<double>& b_values) {
  if (a_values.empty() || b_values.empty())
    throw std::invalid_argument("grid_search: empty value lists");
  if (cfg.reparam.params.mode != AbMode::Fixed)
    throw std::invalid_argument("grid_search: requires fixed-mode reparam");
  GridResult grid;
  for (double a : a_values) {
    for (double b : b_values) {
      GridCell cell;
      cell.a = a;
      cell.b = b;
      ExperimentConfig c = cfg;
      c.seeds = {cfg.seeds.front()};
      c.reparam.params.a = a;
      c.reparam.params.b = b;
      try {
        RunResult r = train(c);
        const SeedResult& s = r.seeds.front();
        if (s.failed) {
          cell.failed = true;
          cell.error = s.error;
        } else {
          cell.val_accuracy = s.best_val_accuracy;
        }
      } catch (const InitDomainError& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  bool any = false;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const GridCell& c = grid.cells[i];
    if (c.failed) continue;
    if (!any) {
      any = true;
      grid.best_index = i;
      continue;
    }
    const GridCell& best = grid.cells[grid.best_index];
    if (c.val_accuracy > best.val_accuracy ||
        (c.val_accuracy == best.val_accuracy &&
         (c.a < best.a || (c.a == best.a && c.b < best.b))))
      grid.best_index = i;
  }
  if (!any) throw std::runtime_error("grid_search: every cell failed");
  return grid;
}

struct OverheadReport {
  std::size_t steps = 0;
  double identity_ms_per_step = 0;
  double reparam_ms_per_step = 0;
  double ratio = 1.0;
  // expected overhead band for the arctan reparameterization
  std::string reference_band = "7-14%";
};

/// Times the configured reparameterization against an identity run of
/// the same model and data. Report-only; wall-clock, so noisy.
inline OverheadReport overhead_report(const ExperimentConfig& cfg, std::size_t steps = 50) {
  OverheadReport rep;
  std::uint64_t seed = cfg.seeds.front();
  Dataset tr = load_train_dataset(cfg.dataset, seed);

  auto time_variant = [&](const ExperimentConfig& c) {
    TrainSession sess(c, tr, seed);
    std::size_t n = 0;
    // one warmup step outside the timer
    if (!sess.done()) sess.train_step();
    auto t0 = std::chrono::steady_clock::now();
    while (n < steps && !sess.done()) {
      sess.train_step();
      ++n;
    }
    auto t1 = std::chrono::steady_clock::now();
    if (n == 0) throw std::invalid_argument("overhead_report: no steps to time");
    rep.steps = n;
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / double(n);
  };

  ExperimentConfig ident = cfg;
  ident.reparam = ReparamSpec{};
  rep.identity_ms_per_step = time_variant(ident);
  rep.reparam_ms_per_step = time_variant(cfg);
  rep.ratio = rep.reparam_ms_per_step / rep.identity_ms_per_step;
  return rep;
}

inline void write_metrics_csv(const RunResult& run, std::ostream& os) {
  os << "seed,epoch,split,loss,accuracy,lr\n";
  for (const auto& s : run.seeds) {
    for (const auto& m : s.curve) {
      os << s.seed << ',' << m.epoch << ",train,";
      detail::write_full_double(os, m.train_loss);
      os << ',';
      detail::write_full_double(os, m.train_accuracy);
      os << ',';
      detail::write_full_double(os, m.lr);
      os << '\n';
      os << s.seed << ',' << m.epoch << ",val,";
      detail::write_full_double(os, m.val_loss);
      os << ',';
      detail::write_full_double(os, m.val_accuracy);
      os << ',';
      detail::write_full_double(os, m.lr);
      os << '\n';
    }
    if (!s.failed) {
      os << s.seed << ',' << (s.curve.empty() ? 0 : s.curve.back().epoch) << ",test,";
      detail::write_full_double(os, s.test.loss);
      os << ',';
      detail::write_full_double(os, s.test.accuracy);
      os << ",0\n";
    }
  }
}

inline nlohmann::json run_result_to_json(const RunResult& run) {
  nlohmann::json out;
  out["mean_test_accuracy"] = run.mean_test_accuracy;
  out["std_test_accuracy"] = run.std_test_accuracy;
  out["seeds"] = nlohmann::json::array();
  for (const auto& s : run.seeds) {
    nlohmann::json js;
    js["seed"] = s.seed;
    js["failed"] = s.failed;
    if (s.failed) {
      js["error"] = s.error;
      js["fail_step"] = s.fail_step;
    } else {
      js["best_val_accuracy"] = s.best_val_accuracy;
      js["best_epoch"] = s.best_epoch;
      js["test"] = {{"loss", s.test.loss}, {"accuracy", s.test.accuracy}};
    }
    js["curve"] = nlohmann::json::array();
    for (const auto& m : s.curve)
      js["curve"].push_back({{"epoch", m.epoch},
                             {"lr", m.lr},
                             {"train_loss", m.train_loss},
                             {"train_accuracy", m.train_accuracy},
                             {"val_loss", m.val_loss},
                             {"val_accuracy", m.val_accuracy},
                             {"wall_seconds", m.wall_seconds}});
    js["ab"] = nlohmann::json::array();
    for (const auto& ab : s.final_ab)
      js["ab"].push_back({{"scope", ab.name}, {"a", ab.a}, {"b", ab.b}});
    js["near_zero"] = nlohmann::json::array();
    for (const auto& sum : s.first_layer_summaries) {
      nlohmann::json e = {{"delta", sum.delta}, {"fraction", sum.near_zero_fraction}};
      if (sum.bound_utilization) e["bound_utilization"] = *sum.bound_utilization;
      js["near_zero"].push_back(e);
    }
    out["seeds"].push_back(std::move(js));
  }
  return out;
}

}  // namespace compander

#endif  // COMPANDER_TRAIN_HPP
