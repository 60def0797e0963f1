#ifndef COMPANDER_EXPORT_HPP
#define COMPANDER_EXPORT_HPP

#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "compander/analysis.hpp"
#include "compander/checkpoint.hpp"
#include "compander/config.hpp"
#include "compander/train.hpp"

namespace compander {

namespace detail {

/// Training checkpoints carry both the live parameters and, once any
/// validation pass has run, the retained best model. Everything that
/// consumes a checkpoint for inference (eval, bake, analyze) prefers
/// the best model so the exported network is the one the run would
/// report.
inline std::string blob_prefix(const Checkpoint& ck) {
  if (ck.manifest.value("kind", "") == "training" && ck.manifest.value("has_best", false))
    return "best/";
  return "";
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.kind = j.at("kind").get<std::string>();
  m.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  return m;
}

/// Rebuilds a plain inference model from a training or baked
/// checkpoint. The result carries materialized weights only; no
/// reparameterization state survives.
struct LoadedModel {
  ModelConfig config;
  Model model;
};

inline LoadedModel model_from_checkpoint(const Checkpoint& ck) {
  std::string kind = ck.manifest.value("kind", "");
  if (kind != "training" && kind != "baked")
    throw std::runtime_error("checkpoint kind '" + kind + "' does not hold a model");
  ModelConfig mc = model_config_from_json(ck.manifest.at("model"));
  LoadedModel lm{mc, build_model(mc)};
  std::string prefix = detail::blob_prefix(ck);
  const auto& infos = lm.model.param_infos();
  for (std::size_t slot = 0; slot < infos.size(); ++slot)
    lm.model.params()[slot] = ck.at(prefix + "param/" + infos[slot].name);
  for (auto& [layer, buf] : lm.model.bn_buffers()) {
    buf.running_mean = ck.at(prefix + "bn/" + std::to_string(layer) + "/mean");
    buf.running_var = ck.at(prefix + "bn/" + std::to_string(layer) + "/var");
  }
  return lm;
}

/// Strips a training checkpoint down to the plain network: parameter
/// and batchnorm blobs under their canonical names, nothing else. The
/// stored parameters are already the materialized effective weights,
/// so baking is a projection, not a recomputation; a baked file loads
/// and evaluates without any reparameterization metadata.
inline Checkpoint bake_checkpoint(const Checkpoint& in) {
  LoadedModel lm = model_from_checkpoint(in);
  Checkpoint out;
  out.manifest["kind"] = "baked";
  out.manifest["model"] = in.manifest.at("model");
  if (in.manifest.contains("seed")) out.manifest["seed"] = in.manifest.at("seed");
  const auto& infos = lm.model.param_infos();
  for (std::size_t slot = 0; slot < infos.size(); ++slot)
    out.add("param/" + infos[slot].name, lm.model.params()[slot]);
  for (const auto& [layer, buf] : lm.model.bn_buffers()) {
    out.add("bn/" + std::to_string(layer) + "/mean", buf.running_mean);
    out.add("bn/" + std::to_string(layer) + "/var", buf.running_var);
  }
  return out;
}

inline void bake_export(const std::string& in_path, const std::string& out_path) {
  save_checkpoint(out_path, bake_checkpoint(load_checkpoint(in_path)));
}

/// Scores a checkpointed model on the test split of a dataset config.
inline EvalResult eval_checkpoint(const Checkpoint& ck, const DatasetConfig& dataset,
                                  std::size_t batch_size = 256) {
  LoadedModel lm = model_from_checkpoint(ck);
  Dataset test = load_test_dataset(dataset);
  return eval_model(lm.model, test, batch_size, lm.model.input_shape());
}

struct LayerAnalysis {
  std::string layer;
  std::vector<DistributionSummary> summaries;  // one per requested delta
};

/// Weight-distribution summaries for the chosen layers of a
/// checkpointed model. Arctan training checkpoints report utilization
/// of the confinement bound a*pi/2 using the layer's scoped a.
inline std::vector<LayerAnalysis> analyze_checkpoint(const Checkpoint& ck,
                                                     const std::vector<std::size_t>& layers,
                                                     const std::vector<double>& deltas) {
  if (layers.empty()) throw std::invalid_argument("analyze: no layers requested");
  if (deltas.empty()) throw std::invalid_argument("analyze: no deltas requested");
  LoadedModel lm = model_from_checkpoint(ck);
  std::string prefix = detail::blob_prefix(ck);

  bool arctan = ck.manifest.contains("reparam") &&
                ck.manifest.at("reparam").value("kind", "") == "arctan";
  std::vector<std::string> scope_names;
  if (ck.manifest.contains("ab_scopes"))
    scope_names = ck.manifest.at("ab_scopes").get<std::vector<std::string>>();

  std::vector<LayerAnalysis> out;
  for (std::size_t layer : layers) {
    std::string lname = "L" + std::to_string(layer);
    std::size_t slot = lm.model.param_index(lname + ".weight");
    std::optional<double> bound;
    if (arctan && !scope_names.empty()) {
      const Tensor<double>* a = ck.find(prefix + "ab/a");
      if (!a) a = ck.find("ab/a");
      for (std::size_t s = 0; a && s < scope_names.size(); ++s)
        if (scope_names[s] == lname || scope_names[s] == "global")
          bound = (*a)[s] * (std::numbers::pi / 2);
    }
    LayerAnalysis la;
    la.layer = lname;
    for (double delta : deltas)
      la.summaries.push_back(snapshot_layer(lm.model.params()[slot], delta, bound));
    out.push_back(std::move(la));
  }
  return out;
}

inline nlohmann::json layer_analysis_to_json(const std::vector<LayerAnalysis>& layers) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& la : layers) {
    nlohmann::json jl;
    jl["layer"] = la.layer;
    jl["summaries"] = nlohmann::json::array();
    for (const auto& s : la.summaries) {
      nlohmann::json js;
      js["delta"] = s.delta;
      js["near_zero_fraction"] = s.near_zero_fraction;
      if (s.bound_utilization) js["bound_utilization"] = *s.bound_utilization;
      js["bin_edges"] = s.bin_edges;
      js["bin_counts"] = s.bin_counts;
      jl["summaries"].push_back(std::move(js));
    }
    out.push_back(std::move(jl));
  }
  return out;
}

}  // namespace compander

#endif  // COMPANDER_EXPORT_HPP
