// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0
//
// flowplan: goal-conditioned trajectory planning via conditional flow
// matching with variance-adaptive integration and convex refinement.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowplan/core.hpp"
#include "flowplan/flowtrain.hpp"
#include "flowplan/io/hash.hpp"
#include "flowplan/io/json_io.hpp"
#include "flowplan/io/rng.hpp"
#include "flowplan/io/runconfig.hpp"
#include "flowplan/metrics.hpp"
#include "flowplan/nets/model.hpp"
#include "flowplan/sampler.hpp"
#include "flowplan/scenegen.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowplan;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

json trajectory_json(const Trajectory& t) {
  json states = json::array();
  for (const AgentState& s : t.states) states.push_back({s.x, s.y, s.vx, s.vy});
  return {{"dt", t.dt}, {"states", std::move(states)}};
}

std::string format_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- mode table ----

struct Mode {
  std::string token;  // CLI name
  std::string label;  // table row name
  bool adaptive{true};
  int euler_steps{0};
  bool refine{true};
};

std::optional<Mode> parse_mode(const std::string& token) {
  if (token == "adaptive") return Mode{token, "Flow-Adaptive", true, 0, true};
  if (token == "adaptive-noqp") return Mode{token, "Flow-Adaptive-NoQP", true, 0, false};
  if (token.rfind("euler-", 0) == 0) {
    const std::string num = token.substr(6);
    if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos) {
      return std::nullopt;
    }
    const int steps = std::atoi(num.c_str());
    if (steps < 1) return std::nullopt;
    return Mode{token, "Flow-Euler-" + num, false, steps, true};
  }
  return std::nullopt;
}

sampler::PlanConfig plan_config_for(const Mode& mode, const io::RunConfig& rc, bool with_goal) {
  sampler::PlanConfig pc;
  pc.adaptive = mode.adaptive;
  pc.euler_steps = mode.euler_steps > 0 ? mode.euler_steps : 5;
  pc.step = rc.step;
  pc.refine = mode.refine;
  pc.with_goal = with_goal;
  pc.weights = rc.weights;
  return pc;
}

void require_scene_shape(const nets::ModelConfig& cfg, const HorizonConfig& horizon) {
  if (cfg.history != horizon.past_steps || cfg.horizon != horizon.future_steps ||
      cfg.max_neighbors != horizon.max_neighbors) {
    throw std::invalid_argument(
        "checkpoint/config mismatch: model expects K=" + std::to_string(cfg.history) +
        " T=" + std::to_string(cfg.horizon) + " N=" + std::to_string(cfg.max_neighbors) +
        ", data provides K=" + std::to_string(horizon.past_steps) +
        " T=" + std::to_string(horizon.future_steps) +
        " N=" + std::to_string(horizon.max_neighbors));
  }
}

// ---- generate-data ----

int cmd_generate_data(const std::string& spec_path, const std::string& out_dir,
                      std::uint64_t seed) {
  const io::DataSpec spec = io::load_dataspec(spec_path);
  std::vector<scenegen::ScenarioKind> kinds = spec.kinds;
  if (kinds.empty()) {
    for (int k = 0; k < scenegen::kNumScenarioKinds; ++k) {
      kinds.push_back(static_cast<scenegen::ScenarioKind>(k));
    }
  }
  const std::uint64_t total = static_cast<std::uint64_t>(spec.n_train) +
                              static_cast<std::uint64_t>(spec.n_val);
  if (total >= (1ull << 20)) {
    throw std::invalid_argument("generate-data: at most 2^20 - 1 scenes per dataset");
  }

  auto build = [&](int count, std::uint64_t first_index) {
    std::vector<scenegen::ScenarioSpec> specs;
    specs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      scenegen::ScenarioSpec s;
      const std::uint64_t index = first_index + static_cast<std::uint64_t>(i);
      s.kind = kinds[index % kinds.size()];
      s.seed = (seed << 20) + index;  // disjoint across splits by construction
      s.noise_scale = spec.noise_scale;
      s.num_neighbors = spec.num_neighbors;
      specs.push_back(s);
    }
    return scenegen::generate_dataset(specs, spec.horizon);
  };

  const std::vector<SceneSample> train_split = build(spec.n_train, 0);
  const std::vector<SceneSample> val_split =
      build(spec.n_val, static_cast<std::uint64_t>(spec.n_train));

  fs::create_directories(out_dir);
  const std::string train_path = (fs::path(out_dir) / "train.jsonl").string();
  const std::string val_path = (fs::path(out_dir) / "val.jsonl").string();
  io::write_scenes(train_path, train_split, spec.horizon);
  io::write_scenes(val_path, val_split, spec.horizon);

  auto kind_counts = [&](int count, std::uint64_t first_index) {
    std::map<std::string, int> counts;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t index = first_index + static_cast<std::uint64_t>(i);
      counts[scenegen::kind_name(kinds[index % kinds.size()])] += 1;
    }
    return counts;
  };

  json manifest = {{"schema", "flowplan.manifest"},
                   {"version", 1},
                   {"seed", seed},
                   {"n_train", spec.n_train},
                   {"n_val", spec.n_val},
                   {"noise_scale", spec.noise_scale},
                   {"num_neighbors", spec.num_neighbors},
                   {"kind_counts",
                    {{"train", kind_counts(spec.n_train, 0)},
                     {"val", kind_counts(spec.n_val, static_cast<std::uint64_t>(spec.n_train))}}},
                   {"digests",
                    {{"train.jsonl", hex64(hash_file(train_path))},
                     {"val.jsonl", hex64(hash_file(val_path))}}}};
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  io::write_atomic(manifest_path, manifest.dump(2) + "\n");

  std::printf("wrote %d train + %d val scenes to %s\n", spec.n_train, spec.n_val,
              out_dir.c_str());
  std::printf("digests train=%s val=%s\n", hex64(hash_file(train_path)).c_str(),
              hex64(hash_file(val_path)).c_str());
  return 0;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& data_flag,
              const std::string& out_path, bool resume, int threads, bool threads_set,
              bool no_timing) {
  io::RunConfig rc;
  if (!config_path.empty()) rc = io::load_run_config(config_path);
  if (threads_set) rc.train.threads = threads;
  const std::string data_dir = !data_flag.empty() ? data_flag : rc.data_dir;
  if (data_dir.empty()) {
    throw std::invalid_argument("train: no data directory (pass --data or set data_dir)");
  }

  const io::SceneFile train_file = io::read_scenes((fs::path(data_dir) / "train.jsonl").string());
  const io::SceneFile val_file = io::read_scenes((fs::path(data_dir) / "val.jsonl").string());
  if (config_path.empty()) {
    // No explicit config: adopt the dataset's horizon shape.
    rc.horizon = train_file.horizon;
    rc.model.history = rc.horizon.past_steps;
    rc.model.horizon = rc.horizon.future_steps;
    rc.model.max_neighbors = rc.horizon.max_neighbors;
    rc.validate();
  }
  require_scene_shape(rc.model, train_file.horizon);

  train::TrainConfig tc = rc.train;
  std::optional<nets::FlowModel<float>> model;
  train::ResumeState<float> rs;
  std::vector<train::CurveRow> prior_curve;
  if (resume) {
    const io::Checkpoint ckpt = io::read_checkpoint(out_path);
    model.emplace(io::model_from_checkpoint(ckpt));
    if (ckpt.step >= tc.total_steps) {
      throw std::invalid_argument("train: checkpoint already has " + std::to_string(ckpt.step) +
                                  " steps; raise train.total_steps to resume");
    }
    if (ckpt.adam_m.empty()) {
      throw std::invalid_argument("train: checkpoint lacks optimizer state, cannot resume");
    }
    rs.start_step = ckpt.step;
    rs.adam.m = ckpt.adam_m;
    rs.adam.v = ckpt.adam_v;
    rs.adam.step = ckpt.adam_step;
    prior_curve = ckpt.curve;
  } else {
    model.emplace(rc.model, rc.seed);
  }

  const int first_step = rs.start_step;
  const train::TrainResult<float> result =
      train::train(*model, train_file.scenes, val_file.scenes, tc, &rs);

  std::vector<train::CurveRow> curve = prior_curve;
  curve.insert(curve.end(), result.curve.begin(), result.curve.end());

  double prior_best = std::numeric_limits<double>::quiet_NaN();
  const std::string best_path = out_path + ".best";
  if (resume && fs::exists(best_path)) prior_best = io::read_checkpoint(best_path).best_val_loss;

  io::Checkpoint final_ck = io::snapshot(*model, tc);
  final_ck.step = tc.total_steps;
  final_ck.adam_m = rs.adam.m;
  final_ck.adam_v = rs.adam.v;
  final_ck.adam_step = rs.adam.step;
  final_ck.curve = curve;
  final_ck.best_val_loss = std::isnan(prior_best)
                               ? result.best_val_loss
                               : std::min(prior_best, result.best_val_loss);
  io::write_checkpoint(out_path, final_ck);

  if (std::isnan(prior_best) || result.best_val_loss < prior_best) {
    io::Checkpoint best_ck = io::snapshot(*model, tc);
    best_ck.params = result.best_params;
    best_ck.step = result.best_step;
    best_ck.best_val_loss = result.best_val_loss;
    best_ck.curve = curve;
    io::write_checkpoint(best_path, best_ck);
  }
  io::write_atomic(out_path + ".curve.csv", train::curve_to_csv(curve));

  const train::CurveRow& last = result.curve.back();
  std::printf("trained steps %d..%d: flow_loss %.6f, best val %.6f at step %d\n", first_step + 1,
              tc.total_steps, last.flow_loss, result.best_val_loss, result.best_step);
  if (!no_timing) std::printf("wall time %.1f s\n", result.wall_time);
  std::printf("checkpoint %s (+.best, +.curve.csv)\n", out_path.c_str());
  return 0;
}

// ---- scene lookup ----

SceneSample resolve_scene(const std::string& scene_arg, const std::string& scene_id,
                          const std::string& data_dir, HorizonConfig* horizon_out) {
  auto pick = [&](const io::SceneFile& file, const std::string& id) -> const SceneSample* {
    if (id.empty()) return file.scenes.empty() ? nullptr : &file.scenes.front();
    for (const SceneSample& s : file.scenes) {
      if (s.scene_id == id) return &s;
    }
    return nullptr;
  };
  if (fs::exists(scene_arg)) {
    const io::SceneFile file = io::read_scenes(scene_arg);
    const SceneSample* s = pick(file, scene_id);
    if (s == nullptr) {
      throw std::runtime_error("scene '" + (scene_id.empty() ? scene_arg : scene_id) +
                               "' not found in " + scene_arg);
    }
    if (horizon_out != nullptr) *horizon_out = file.horizon;
    return *s;
  }
  if (data_dir.empty()) {
    throw std::invalid_argument("plan: '" + scene_arg +
                                "' is not a file; pass --data to look up a scene id");
  }
  for (const char* name : {"val.jsonl", "train.jsonl"}) {
    const std::string path = (fs::path(data_dir) / name).string();
    if (!fs::exists(path)) continue;
    const io::SceneFile file = io::read_scenes(path);
    const SceneSample* s = pick(file, scene_arg);
    if (s != nullptr) {
      if (horizon_out != nullptr) *horizon_out = file.horizon;
      return *s;
    }
  }
  throw std::runtime_error("scene '" + scene_arg + "' not found in " + data_dir);
}

// ---- plan ----

int cmd_plan(const std::string& ckpt_path, const std::string& scene_arg,
             const std::string& scene_id, const std::string& mode_token, bool no_refine,
             bool no_goal, const std::string& out_path, const std::string& config_path,
             const std::string& data_dir, std::uint64_t seed, bool no_timing) {
  const std::optional<Mode> mode = parse_mode(mode_token);
  if (!mode.has_value() || !mode->refine) {
    throw std::invalid_argument("plan: mode must be adaptive, euler-5, or euler-50");
  }
  io::RunConfig rc;
  if (!config_path.empty()) rc = io::load_run_config(config_path);

  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const nets::FlowModel<float> model = io::model_from_checkpoint(ckpt);

  HorizonConfig horizon;
  const SceneSample scene = resolve_scene(scene_arg, scene_id, data_dir, &horizon);
  require_scene_shape(model.config(), horizon);

  sampler::PlanConfig pc = plan_config_for(*mode, rc, !no_goal);
  pc.refine = !no_refine;
  Rng rng(seed);
  const double t0 = now_seconds();
  const sampler::PlanResult res = sampler::plan(model, scene, pc, rng);
  const double elapsed = now_seconds() - t0;

  json neighbors = json::array();
  for (std::size_t i = 0; i < res.neighbors.size(); ++i) {
    if (res.neighbor_valid[i] != 0) {
      neighbors.push_back(trajectory_json(res.neighbors[i]));
    } else {
      neighbors.push_back(json());
    }
  }
  json valid = json::array();
  for (std::uint8_t v : res.neighbor_valid) valid.push_back(static_cast<int>(v));
  json stats = {{"nfe", res.stats.nfe},
                {"step_sizes", res.stats.step_sizes},
                {"sigmas", res.stats.sigmas}};
  if (!no_timing) {
    stats["wall_time"] = res.stats.wall_time;
    stats["total_time"] = elapsed;
  }
  json doc = {{"schema", "flowplan.plan"}, {"version", 1},
              {"scene_id", scene.scene_id}, {"mode", mode_token},
              {"refine", pc.refine},        {"with_goal", pc.with_goal},
              {"seed", seed},               {"ego", trajectory_json(res.ego)},
              {"neighbors", std::move(neighbors)}, {"neighbor_valid", std::move(valid)},
              {"stats", std::move(stats)}};
  if (res.refined) {
    doc["refinement"] = {
        {"converged", res.refinement.converged},
        {"iterations", res.refinement.iterations},
        {"objective", res.refinement.objective},
        {"max_shift", res.refinement.max_shift},
        {"before",
         {{"alpha", res.refinement.before.alpha},
          {"omega", res.refinement.before.omega},
          {"goal_distance", res.refinement.before.goal_distance}}},
        {"after",
         {{"alpha", res.refinement.after.alpha},
          {"omega", res.refinement.after.omega},
          {"goal_distance", res.refinement.after.goal_distance}}}};
  }
  io::write_atomic(out_path, doc.dump(2) + "\n");
  std::printf("planned scene %s (%s, refine=%s): nfe=%d -> %s\n", scene.scene_id.c_str(),
              mode_token.c_str(), pc.refine ? "yes" : "no", res.stats.nfe, out_path.c_str());
  return 0;
}

// ---- evaluate ----

struct ModeResult {
  Mode mode;
  metrics::SplitSummary summary;
  double nfe_mean{0.0};
  double time_ms{0.0};
};

std::string scene_csv(const metrics::SplitSummary& summary, const std::vector<int>& nfes) {
  std::string out =
      "scene_id,min_ade,min_fde,goal_error,angle_change,path_length,curvature,collision,"
      "acc_violation,omega_violation,nfe\n";
  for (std::size_t i = 0; i < summary.rows.size(); ++i) {
    const metrics::SceneRow& r = summary.rows[i];
    out += r.scene_id + ',' + format_g(r.min_ade) + ',' + format_g(r.min_fde) + ',' +
           format_g(r.goal_error) + ',' + format_g(r.angle_change) + ',' +
           format_g(r.path_length) + ',' + format_g(r.curvature) + ',' +
           (r.collision ? "1" : "0") + ',' + format_g(r.acc_violation) + ',' +
           format_g(r.omega_violation) + ',' + std::to_string(nfes[i]) + '\n';
  }
  return out;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& modes_csv, const std::string& out_dir, int samples,
                 std::uint64_t seed, const std::string& config_path, bool no_timing) {
  if (samples < 1) throw std::invalid_argument("evaluate: --samples must be >= 1");
  std::vector<Mode> modes;
  {
    std::string token;
    std::istringstream in(modes_csv);
    while (std::getline(in, token, ',')) {
      if (token.empty()) continue;
      const std::optional<Mode> m = parse_mode(token);
      if (!m.has_value()) throw std::invalid_argument("evaluate: unknown mode '" + token + "'");
      modes.push_back(*m);
    }
  }
  if (modes.empty()) throw std::invalid_argument("evaluate: no modes requested");

  io::RunConfig rc;
  if (!config_path.empty()) rc = io::load_run_config(config_path);

  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const nets::FlowModel<float> model = io::model_from_checkpoint(ckpt);
  const io::SceneFile val_file = io::read_scenes((fs::path(data_dir) / "val.jsonl").string());
  require_scene_shape(model.config(), val_file.horizon);
  const std::vector<SceneSample>& scenes = val_file.scenes;
  if (scenes.empty()) throw std::runtime_error("evaluate: empty validation split");

  metrics::MetricConfig mcfg;
  mcfg.speed_floor = rc.weights.speed_floor;
  mcfg.alpha_limit = rc.weights.alpha_limit;
  mcfg.omega_limit = rc.weights.omega_limit;
  mcfg.collision_radius = val_file.horizon.collision_radius;

  fs::create_directories(out_dir);
  std::vector<ModeResult> results;
  for (const Mode& mode : modes) {
    const sampler::PlanConfig pc = plan_config_for(mode, rc, true);
    std::vector<std::vector<Trajectory>> candidates(scenes.size());
    std::vector<int> scene_nfe(scenes.size(), 0);
    long total_nfe = 0;
    double total_time = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      for (int s = 0; s < samples; ++s) {
        // One rng stream per (scene, sample): modes share z0 draws.
        Rng rng(seed, (static_cast<std::uint64_t>(i) << 16) | static_cast<std::uint64_t>(s));
        const double t0 = now_seconds();
        sampler::PlanResult res = sampler::plan(model, scenes[i], pc, rng);
        total_time += now_seconds() - t0;
        total_nfe += res.stats.nfe;
        scene_nfe[i] += res.stats.nfe;
        candidates[i].push_back(std::move(res.ego));
      }
    }
    ModeResult mr;
    mr.mode = mode;
    mr.summary = metrics::evaluate_split(scenes, candidates, mcfg);
    mr.nfe_mean = static_cast<double>(total_nfe) / static_cast<double>(scenes.size() * static_cast<std::size_t>(samples));
    mr.time_ms = total_time * 1000.0 / static_cast<double>(scenes.size() * static_cast<std::size_t>(samples));
    results.push_back(mr);

    io::write_atomic((fs::path(out_dir) / (mode.token + ".scenes.csv")).string(),
                     scene_csv(mr.summary, scene_nfe));
    json report = {{"schema", "flowplan.report"},
                   {"version", 1},
                   {"mode", mode.label},
                   {"n_scenes", scenes.size()},
                   {"samples", samples},
                   {"seed", seed},
                   {"metrics",
                    {{"minADE", mr.summary.min_ade},
                     {"minFDE", mr.summary.min_fde},
                     {"angle_change", mr.summary.angle_change},
                     {"path_length", mr.summary.path_length},
                     {"curvature", mr.summary.curvature},
                     {"collision_rate", mr.summary.collision_rate},
                     {"goal_error", mr.summary.goal_error},
                     {"acc_violation", mr.summary.acc_violation},
                     {"omega_violation", mr.summary.omega_violation}}},
                   {"nfe_mean", mr.nfe_mean}};
    if (!no_timing) report["time_ms"] = mr.time_ms;
    io::write_atomic((fs::path(out_dir) / (mode.token + ".report.json")).string(),
                     report.dump(2) + "\n");
  }

  // Combined ablation table, CSV and aligned text.
  std::string csv =
      "mode,minADE,minFDE,angle_change,path_length,curvature,collision_rate,goal_error,"
      "acc_violation,omega_violation,nfe_mean,time_ms\n";
  for (const ModeResult& mr : results) {
    csv += mr.mode.label + ',' + format_g(mr.summary.min_ade) + ',' +
           format_g(mr.summary.min_fde) + ',' + format_g(mr.summary.angle_change) + ',' +
           format_g(mr.summary.path_length) + ',' + format_g(mr.summary.curvature) + ',' +
           format_g(mr.summary.collision_rate) + ',' + format_g(mr.summary.goal_error) + ',' +
           format_g(mr.summary.acc_violation) + ',' + format_g(mr.summary.omega_violation) +
           ',' + format_g(mr.nfe_mean) + ',' + (no_timing ? "" : format_g(mr.time_ms)) + '\n';
  }
  io::write_atomic((fs::path(out_dir) / "ablation.csv").string(), csv);

  std::string text;
  char line[320];
  std::snprintf(line, sizeof(line), "%-20s %8s %8s %12s %11s %9s %14s %10s %13s %15s %8s %8s\n",
                "mode", "minADE", "minFDE", "angle_change", "path_length", "curvature",
                "collision_rate", "goal_error", "acc_violation", "omega_violation", "nfe_mean",
                "time_ms");
  text += line;
  for (const ModeResult& mr : results) {
    char time_buf[16];
    if (no_timing) {
      std::snprintf(time_buf, sizeof(time_buf), "%8s", "-");
    } else {
      std::snprintf(time_buf, sizeof(time_buf), "%8.1f", mr.time_ms);
    }
    std::snprintf(line, sizeof(line),
                  "%-20s %8.3f %8.3f %12.3f %11.2f %9.4f %14.3f %10.3f %13.4f %15.4f %8.1f %s\n",
                  mr.mode.label.c_str(), mr.summary.min_ade, mr.summary.min_fde,
                  mr.summary.angle_change, mr.summary.path_length, mr.summary.curvature,
                  mr.summary.collision_rate, mr.summary.goal_error, mr.summary.acc_violation,
                  mr.summary.omega_violation, mr.nfe_mean, time_buf);
    text += line;
  }
  io::write_atomic((fs::path(out_dir) / "ablation.txt").string(), text);
  std::fputs(text.c_str(), stdout);
  std::printf("reports in %s\n", out_dir.c_str());
  return 0;
}

// ---- bench ----

int cmd_bench(const std::string& ckpt_path, const std::string& data_dir, int warmup, int iters,
              const std::string& out_path, std::uint64_t seed, const std::string& config_path) {
  if (iters < 1) throw std::invalid_argument("iters must be >= 1");
  if (warmup < 0) throw std::invalid_argument("bench: warmup must be >= 0");
  io::RunConfig rc;
  if (!config_path.empty()) rc = io::load_run_config(config_path);

  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const nets::FlowModel<float> model = io::model_from_checkpoint(ckpt);
  const io::SceneFile val_file = io::read_scenes((fs::path(data_dir) / "val.jsonl").string());
  require_scene_shape(model.config(), val_file.horizon);
  if (val_file.scenes.empty()) throw std::runtime_error("bench: empty validation split");
  const std::vector<SceneSample>& scenes = val_file.scenes;

  const Mode adaptive = *parse_mode("adaptive");
  sampler::PlanConfig with_qp = plan_config_for(adaptive, rc, true);
  sampler::PlanConfig without_qp = with_qp;
  without_qp.refine = false;

  auto run_one = [&](const sampler::PlanConfig& pc, std::uint64_t stream, std::size_t scene_idx,
                     int* nfe_out) {
    Rng rng(seed, stream);
    const double t0 = now_seconds();
    const sampler::PlanResult res = sampler::plan(model, scenes[scene_idx], pc, rng);
    if (nfe_out != nullptr) *nfe_out = res.stats.nfe;
    return now_seconds() - t0;
  };

  for (int i = 0; i < warmup; ++i) {
    run_one(with_qp, static_cast<std::uint64_t>(i), static_cast<std::size_t>(i) % scenes.size(),
            nullptr);
  }

  std::vector<double> refine_ms(static_cast<std::size_t>(iters));
  std::vector<double> raw_ms(static_cast<std::size_t>(iters));
  std::vector<int> nfes(static_cast<std::size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    const std::size_t scene_idx = static_cast<std::size_t>(i) % scenes.size();
    const std::uint64_t stream = 0x62656e63ull + static_cast<std::uint64_t>(i);
    int nfe = 0;
    refine_ms[static_cast<std::size_t>(i)] = run_one(with_qp, stream, scene_idx, &nfe) * 1000.0;
    raw_ms[static_cast<std::size_t>(i)] = run_one(without_qp, stream, scene_idx, nullptr) * 1000.0;
    nfes[static_cast<std::size_t>(i)] = nfe;
  }

  auto mean_std = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
    return std::pair<double, double>(mean, std::sqrt(var));
  };
  const auto [ref_mean, ref_std] = mean_std(refine_ms);
  const auto [raw_mean, raw_std] = mean_std(raw_ms);
  double nfe_mean = 0.0;
  for (int n : nfes) nfe_mean += n;
  nfe_mean /= static_cast<double>(nfes.size());

  std::printf("plan (adaptive + QP): %.2f ms +/- %.2f over %d iters\n", ref_mean, ref_std, iters);
  std::printf("plan (adaptive, no QP): %.2f ms +/- %.2f\n", raw_mean, raw_std);
  std::printf("QP overhead: %.2f ms\n", ref_mean - raw_mean);
  std::printf("NFE mean %.2f (min %d, max %d)\n", nfe_mean,
              *std::min_element(nfes.begin(), nfes.end()),
              *std::max_element(nfes.begin(), nfes.end()));

  if (!out_path.empty()) {
    std::string csv = "iter,nfe,time_ms_refine,time_ms_raw\n";
    for (int i = 0; i < iters; ++i) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%d,%d,%.4f,%.4f\n", i, nfes[static_cast<std::size_t>(i)],
                    refine_ms[static_cast<std::size_t>(i)], raw_ms[static_cast<std::size_t>(i)]);
      csv += buf;
    }
    io::write_atomic(out_path, csv);
    std::printf("per-iteration data -> %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowplan: flow-matching trajectory planner with QP refinement"};
  app.require_subcommand(1);

  int threads = 4;
  bool env_threads = false;
  if (const char* env = std::getenv("FLOWPLAN_THREADS")) {
    threads = std::max(1, std::atoi(env));
    env_threads = true;
  }
  bool no_timing = false;
  app.add_option("--threads", threads, "training worker threads (env FLOWPLAN_THREADS)");
  app.add_flag("--no-timing", no_timing, "omit wall-clock fields from outputs");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "write train/val scene files and a manifest");
  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 1;
  gen->add_option("--spec", gen_spec, "dataspec JSON path")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed");

  // train
  auto* tr = app.add_subcommand("train", "train the flow model");
  std::string tr_config, tr_data, tr_out;
  bool tr_resume = false;
  tr->add_option("--config", tr_config, "runconfig JSON path");
  tr->add_option("--data", tr_data, "dataset directory (train.jsonl, val.jsonl)");
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_flag("--resume", tr_resume, "continue from the checkpoint at --out");

  // plan
  auto* pl = app.add_subcommand("plan", "plan one scene");
  std::string pl_ckpt, pl_scene, pl_scene_id, pl_mode = "adaptive", pl_out, pl_config, pl_data;
  std::uint64_t pl_seed = 1;
  bool pl_no_refine = false, pl_no_goal = false;
  pl->add_option("--ckpt", pl_ckpt, "checkpoint path")->required();
  pl->add_option("--scene", pl_scene, "scene file or scene id")->required();
  pl->add_option("--scene-id", pl_scene_id, "scene id inside --scene file");
  pl->add_option("--mode", pl_mode, "adaptive | euler-5 | euler-50");
  pl->add_flag("--no-refine", pl_no_refine, "skip QP refinement");
  pl->add_flag("--no-goal", pl_no_goal, "withhold the goal from the encoder");
  pl->add_option("--out", pl_out, "output JSON path")->required();
  pl->add_option("--config", pl_config, "runconfig JSON for step/QP settings");
  pl->add_option("--data", pl_data, "dataset directory for scene-id lookup");
  pl->add_option("--seed", pl_seed, "sampling seed");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate modes on the validation split");
  std::string ev_ckpt, ev_data, ev_modes = "adaptive,euler-5,euler-50,adaptive-noqp", ev_out,
              ev_config;
  int ev_samples = 1;
  std::uint64_t ev_seed = 1;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--modes", ev_modes, "comma list: adaptive,euler-K,adaptive-noqp");
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--samples", ev_samples, "candidates per scene");
  ev->add_option("--seed", ev_seed, "sampling seed");
  ev->add_option("--config", ev_config, "runconfig JSON for step/QP settings");

  // bench
  auto* be = app.add_subcommand("bench", "wall-time benchmark of plan()");
  std::string be_ckpt, be_data, be_out, be_config;
  int be_warmup = 2, be_iters = 20;
  std::uint64_t be_seed = 1;
  be->add_option("--ckpt", be_ckpt, "checkpoint path")->required();
  be->add_option("--data", be_data, "dataset directory")->required();
  be->add_option("--warmup", be_warmup, "warmup iterations");
  be->add_option("--iters", be_iters, "measured iterations");
  be->add_option("--out", be_out, "per-iteration CSV path");
  be->add_option("--seed", be_seed, "sampling seed");
  be->add_option("--config", be_config, "runconfig JSON for step/QP settings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(gen_spec, gen_out, gen_seed);
    if (tr->parsed()) {
      const bool threads_set = env_threads || app.count("--threads") > 0;
      return cmd_train(tr_config, tr_data, tr_out, tr_resume, threads, threads_set, no_timing);
    }
    if (pl->parsed()) {
      return cmd_plan(pl_ckpt, pl_scene, pl_scene_id, pl_mode, pl_no_refine, pl_no_goal, pl_out,
                      pl_config, pl_data, pl_seed, no_timing);
    }
    if (ev->parsed()) {
      return cmd_evaluate(ev_ckpt, ev_data, ev_modes, ev_out, ev_samples, ev_seed, ev_config,
                          no_timing);
    }
    if (be->parsed()) {
      return cmd_bench(be_ckpt, be_data, be_warmup, be_iters, be_out, be_seed, be_config);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
