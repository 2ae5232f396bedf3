// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/io/runconfig.hpp"

#include <initializer_list>
#include <stdexcept>
#include <string>

#include "flowplan/io/json_io.hpp"
#include "json.hpp"

namespace flowplan::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

json parse_strict(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string(what) + ": " + e.what());
  }
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it != j.end()) out = it->get<T>();
}

void read_horizon(const json& j, HorizonConfig& h) {
  check_keys(j, "horizon", {"dt", "past_steps", "future_steps", "max_neighbors",
                            "neighbor_radius", "collision_radius"});
  get_if(j, "dt", h.dt);
  get_if(j, "past_steps", h.past_steps);
  get_if(j, "future_steps", h.future_steps);
  get_if(j, "max_neighbors", h.max_neighbors);
  get_if(j, "neighbor_radius", h.neighbor_radius);
  get_if(j, "collision_radius", h.collision_radius);
}

void read_model(const json& j, nets::ModelConfig& m) {
  check_keys(j, "model",
             {"history", "horizon", "max_neighbors", "map_polylines", "map_points", "map_attrs",
              "point_hidden", "token_dim", "attn_heads", "context_dim", "time_embed_dim",
              "cond_dim", "unet_base", "unet_mults", "var_layers", "var_hidden", "sigma_floor"});
  get_if(j, "history", m.history);
  get_if(j, "horizon", m.horizon);
  get_if(j, "max_neighbors", m.max_neighbors);
  get_if(j, "map_polylines", m.map_polylines);
  get_if(j, "map_points", m.map_points);
  get_if(j, "map_attrs", m.map_attrs);
  get_if(j, "point_hidden", m.point_hidden);
  get_if(j, "token_dim", m.token_dim);
  get_if(j, "attn_heads", m.attn_heads);
  get_if(j, "context_dim", m.context_dim);
  get_if(j, "time_embed_dim", m.time_embed_dim);
  get_if(j, "cond_dim", m.cond_dim);
  get_if(j, "unet_base", m.unet_base);
  if (j.contains("unet_mults")) {
    const json& mults = j["unet_mults"];
    if (!mults.is_array() || mults.size() != 3) fail("model.unet_mults: need 3 entries");
    for (std::size_t i = 0; i < 3; ++i) m.unet_mults[i] = mults[i].get<int>();
  }
  get_if(j, "var_layers", m.var_layers);
  get_if(j, "var_hidden", m.var_hidden);
  get_if(j, "sigma_floor", m.sigma_floor);
}

void read_train(const json& j, train::TrainConfig& t) {
  check_keys(j, "train", {"batch_size", "lr", "total_steps", "beta1_loss", "beta2_loss",
                          "goal_dropout", "seed", "eval_interval", "threads", "fit_stats"});
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "lr", t.lr);
  get_if(j, "total_steps", t.total_steps);
  get_if(j, "beta1_loss", t.beta1_loss);
  get_if(j, "beta2_loss", t.beta2_loss);
  get_if(j, "goal_dropout", t.goal_dropout);
  get_if(j, "seed", t.seed);
  get_if(j, "eval_interval", t.eval_interval);
  get_if(j, "threads", t.threads);
  get_if(j, "fit_stats", t.fit_stats);
}

void read_step(const json& j, sampler::AdaptiveStepConfig& s) {
  check_keys(j, "step", {"eta", "eps_min", "eps_max", "max_nfe"});
  get_if(j, "eta", s.eta);
  get_if(j, "eps_min", s.eps_min);
  get_if(j, "eps_max", s.eps_max);
  get_if(j, "max_nfe", s.max_nfe);
}

void read_weights(const json& j, qp::RefineWeights& w) {
  check_keys(j, "qp", {"w_track", "w_terminal", "w_smooth", "w_acc", "w_omega", "w_goal",
                       "alpha_limit", "omega_limit", "speed_floor"});
  get_if(j, "w_track", w.w_track);
  get_if(j, "w_terminal", w.w_terminal);
  get_if(j, "w_smooth", w.w_smooth);
  get_if(j, "w_acc", w.w_acc);
  get_if(j, "w_omega", w.w_omega);
  get_if(j, "w_goal", w.w_goal);
  get_if(j, "alpha_limit", w.alpha_limit);
  get_if(j, "omega_limit", w.omega_limit);
  get_if(j, "speed_floor", w.speed_floor);
}

void check_horizon(const HorizonConfig& h, const char* where) {
  if (!(h.dt > 0.0)) fail(std::string(where) + ": dt must be positive");
  if (h.past_steps < 2) fail(std::string(where) + ": past_steps must be >= 2");
  if (h.future_steps < 3) fail(std::string(where) + ": future_steps must be >= 3");
  if (h.max_neighbors < 0) fail(std::string(where) + ": max_neighbors must be >= 0");
  if (!(h.neighbor_radius > 0.0) || !(h.collision_radius > 0.0)) {
    fail(std::string(where) + ": radii must be positive");
  }
}

json horizon_json(const HorizonConfig& h) {
  return {{"dt", h.dt},
          {"past_steps", h.past_steps},
          {"future_steps", h.future_steps},
          {"max_neighbors", h.max_neighbors},
          {"neighbor_radius", h.neighbor_radius},
          {"collision_radius", h.collision_radius}};
}

}  // namespace

void DataSpec::validate() const {
  if (n_train < 1 || n_val < 1) fail("dataspec: n_train and n_val must be >= 1");
  if (noise_scale < 0.0) fail("dataspec: noise_scale must be >= 0");
  if (num_neighbors < 0 || num_neighbors > horizon.max_neighbors) {
    fail("dataspec: num_neighbors must lie in [0, max_neighbors]");
  }
  check_horizon(horizon, "dataspec.horizon");
}

void RunConfig::validate() const {
  check_horizon(horizon, "runconfig.horizon");
  try {
    model.check();
    train.check();
    step.check();
  } catch (const std::exception& e) {
    fail(std::string("runconfig: ") + e.what());
  }
  if (model.history != horizon.past_steps || model.horizon != horizon.future_steps ||
      model.max_neighbors != horizon.max_neighbors) {
    fail("runconfig: model shape (history/horizon/max_neighbors) must match the horizon block");
  }
  if (!(weights.alpha_limit > 0.0) || !(weights.omega_limit > 0.0) ||
      !(weights.speed_floor > 0.0)) {
    fail("runconfig: qp limits must be positive");
  }
}

DataSpec dataspec_from_json(const std::string& text) {
  const json j = parse_strict(text, "dataspec");
  check_keys(j, "dataspec", {"schema", "version", "n_train", "n_val", "kinds", "noise_scale",
                             "num_neighbors", "horizon"});
  if (j.contains("schema") && j["schema"].get<std::string>() != "flowplan.dataspec") {
    fail("dataspec: wrong schema");
  }
  if (j.contains("version") && j["version"].get<int>() != 1) fail("dataspec: unsupported version");
  DataSpec spec;
  get_if(j, "n_train", spec.n_train);
  get_if(j, "n_val", spec.n_val);
  if (j.contains("kinds")) {
    const json& kinds = j["kinds"];
    if (!kinds.is_array() || kinds.empty()) fail("dataspec.kinds: need a nonempty array");
    for (const json& k : kinds) {
      try {
        spec.kinds.push_back(scenegen::kind_from_name(k.get<std::string>()));
      } catch (const std::exception& e) {
        fail(std::string("dataspec.kinds: ") + e.what());
      }
    }
  }
  get_if(j, "noise_scale", spec.noise_scale);
  get_if(j, "num_neighbors", spec.num_neighbors);
  if (j.contains("horizon")) read_horizon(j["horizon"], spec.horizon);
  spec.validate();
  return spec;
}

DataSpec load_dataspec(const std::string& path) {
  try {
    return dataspec_from_json(read_file(path));
  } catch (const std::invalid_argument& e) {
    fail(path + ": " + e.what());
  }
}

std::string dataspec_to_json(const DataSpec& spec) {
  json kinds = json::array();
  for (const scenegen::ScenarioKind k : spec.kinds) kinds.push_back(scenegen::kind_name(k));
  const json j = {{"schema", "flowplan.dataspec"}, {"version", 1},
                  {"n_train", spec.n_train},       {"n_val", spec.n_val},
                  {"kinds", std::move(kinds)},     {"noise_scale", spec.noise_scale},
                  {"num_neighbors", spec.num_neighbors}, {"horizon", horizon_json(spec.horizon)}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_strict(text, "runconfig");
  check_keys(j, "runconfig", {"schema", "version", "horizon", "model", "train", "step", "qp",
                              "data_dir", "out_dir", "seed"});
  if (j.contains("schema") && j["schema"].get<std::string>() != "flowplan.runconfig") {
    fail("runconfig: wrong schema");
  }
  if (j.contains("version") && j["version"].get<int>() != 1) {
    fail("runconfig: unsupported version");
  }
  RunConfig cfg;
  cfg.model = nets::ModelConfig::desk_default();
  if (j.contains("horizon")) read_horizon(j["horizon"], cfg.horizon);
  // Keep the model aligned with a reshaped horizon unless the model block
  // overrides it explicitly.
  cfg.model.history = cfg.horizon.past_steps;
  cfg.model.horizon = cfg.horizon.future_steps;
  cfg.model.max_neighbors = cfg.horizon.max_neighbors;
  if (j.contains("model")) read_model(j["model"], cfg.model);
  if (j.contains("train")) read_train(j["train"], cfg.train);
  if (j.contains("step")) read_step(j["step"], cfg.step);
  if (j.contains("qp")) read_weights(j["qp"], cfg.weights);
  get_if(j, "data_dir", cfg.data_dir);
  get_if(j, "out_dir", cfg.out_dir);
  get_if(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  try {
    return run_config_from_json(read_file(path));
  } catch (const std::invalid_argument& e) {
    fail(path + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& config) {
  const nets::ModelConfig& m = config.model;
  const train::TrainConfig& t = config.train;
  const json j = {
      {"schema", "flowplan.runconfig"},
      {"version", 1},
      {"horizon", horizon_json(config.horizon)},
      {"model",
       {{"history", m.history},
        {"horizon", m.horizon},
        {"max_neighbors", m.max_neighbors},
        {"map_polylines", m.map_polylines},
        {"map_points", m.map_points},
        {"map_attrs", m.map_attrs},
        {"point_hidden", m.point_hidden},
        {"token_dim", m.token_dim},
        {"attn_heads", m.attn_heads},
        {"context_dim", m.context_dim},
        {"time_embed_dim", m.time_embed_dim},
        {"cond_dim", m.cond_dim},
        {"unet_base", m.unet_base},
        {"unet_mults", {m.unet_mults[0], m.unet_mults[1], m.unet_mults[2]}},
        {"var_layers", m.var_layers},
        {"var_hidden", m.var_hidden},
        {"sigma_floor", m.sigma_floor}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"lr", t.lr},
        {"total_steps", t.total_steps},
        {"beta1_loss", t.beta1_loss},
        {"beta2_loss", t.beta2_loss},
        {"goal_dropout", t.goal_dropout},
        {"seed", t.seed},
        {"eval_interval", t.eval_interval},
        {"threads", t.threads},
        {"fit_stats", t.fit_stats}}},
      {"step",
       {{"eta", config.step.eta},
        {"eps_min", config.step.eps_min},
        {"eps_max", config.step.eps_max},
        {"max_nfe", config.step.max_nfe}}},
      {"qp",
       {{"w_track", config.weights.w_track},
        {"w_terminal", config.weights.w_terminal},
        {"w_smooth", config.weights.w_smooth},
        {"w_acc", config.weights.w_acc},
        {"w_omega", config.weights.w_omega},
        {"w_goal", config.weights.w_goal},
        {"alpha_limit", config.weights.alpha_limit},
        {"omega_limit", config.weights.omega_limit},
        {"speed_floor", config.weights.speed_floor}}},
      {"data_dir", config.data_dir},
      {"out_dir", config.out_dir},
      {"seed", config.seed}};
  return j.dump(2) + "\n";
}

}  // namespace flowplan::io
