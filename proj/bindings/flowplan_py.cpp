// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: scene generation, training,
// planning, metrics, and checkpoint IO. Containers cross the boundary by
// value; heavy loops release the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "flowplan/core.hpp"
#include "flowplan/flowtrain.hpp"
#include "flowplan/io/json_io.hpp"
#include "flowplan/io/rng.hpp"
#include "flowplan/metrics.hpp"
#include "flowplan/nets/model.hpp"
#include "flowplan/qp/qprefine.hpp"
#include "flowplan/sampler.hpp"
#include "flowplan/scenegen.hpp"

namespace py = pybind11;
using namespace flowplan;

namespace {

using Model = nets::FlowModel<float>;

/// Small value type returned by train(); TrainResult's parameter snapshot
/// stays on the C++ side.
struct TrainReport {
  std::vector<train::CurveRow> curve;
  double best_val_loss{0.0};
  int best_step{0};
  double wall_time{0.0};
};

scenegen::ScenarioSpec make_spec(const std::string& kind, std::uint64_t seed, double noise_scale,
                                 int num_neighbors) {
  scenegen::ScenarioSpec spec;
  spec.kind = scenegen::kind_from_name(kind);
  spec.seed = seed;
  spec.noise_scale = noise_scale;
  spec.num_neighbors = num_neighbors;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_flowplan, m) {
  m.doc() = "Goal-conditioned flow-matching trajectory planner (C++ core)";
  m.attr("__version__") = "0.1.0";

  py::class_<AgentState>(m, "AgentState")
      .def(py::init<>())
      .def_readwrite("x", &AgentState::x)
      .def_readwrite("y", &AgentState::y)
      .def_readwrite("vx", &AgentState::vx)
      .def_readwrite("vy", &AgentState::vy)
      .def("__repr__", [](const AgentState& s) {
        return "AgentState(x=" + std::to_string(s.x) + ", y=" + std::to_string(s.y) + ")";
      });

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("states", &Trajectory::states)
      .def_readwrite("dt", &Trajectory::dt)
      .def("__len__", [](const Trajectory& t) { return t.states.size(); });

  py::class_<GoalPose>(m, "GoalPose")
      .def(py::init<>())
      .def_readwrite("x", &GoalPose::x)
      .def_readwrite("y", &GoalPose::y)
      .def_readwrite("heading", &GoalPose::heading);

  py::class_<PolylineMap>(m, "PolylineMap")
      .def(py::init<>())
      .def_readonly("num_polylines", &PolylineMap::num_polylines)
      .def_readonly("points_per", &PolylineMap::points_per)
      .def_readonly("attr_dim", &PolylineMap::attr_dim)
      .def_readonly("data", &PolylineMap::data);

  py::class_<HorizonConfig>(m, "HorizonConfig")
      .def(py::init<>())
      .def_readwrite("dt", &HorizonConfig::dt)
      .def_readwrite("past_steps", &HorizonConfig::past_steps)
      .def_readwrite("future_steps", &HorizonConfig::future_steps)
      .def_readwrite("max_neighbors", &HorizonConfig::max_neighbors)
      .def_readwrite("neighbor_radius", &HorizonConfig::neighbor_radius)
      .def_readwrite("collision_radius", &HorizonConfig::collision_radius);

  py::class_<SceneSample>(m, "SceneSample")
      .def(py::init<>())
      .def_readwrite("scene_id", &SceneSample::scene_id)
      .def_readwrite("ego_history", &SceneSample::ego_history)
      .def_readwrite("neighbor_histories", &SceneSample::neighbor_histories)
      .def_readwrite("neighbor_futures", &SceneSample::neighbor_futures)
      .def_readwrite("neighbor_valid", &SceneSample::neighbor_valid)
      .def_readwrite("map", &SceneSample::map)
      .def_readwrite("goal", &SceneSample::goal)
      .def_readwrite("ego_future", &SceneSample::ego_future);

  py::class_<nets::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("desk_default", &nets::ModelConfig::desk_default)
      .def_static("paper_scale", &nets::ModelConfig::paper_scale)
      .def_readwrite("history", &nets::ModelConfig::history)
      .def_readwrite("horizon", &nets::ModelConfig::horizon)
      .def_readwrite("max_neighbors", &nets::ModelConfig::max_neighbors)
      .def_readwrite("map_polylines", &nets::ModelConfig::map_polylines)
      .def_readwrite("map_points", &nets::ModelConfig::map_points)
      .def_readwrite("point_hidden", &nets::ModelConfig::point_hidden)
      .def_readwrite("token_dim", &nets::ModelConfig::token_dim)
      .def_readwrite("attn_heads", &nets::ModelConfig::attn_heads)
      .def_readwrite("context_dim", &nets::ModelConfig::context_dim)
      .def_readwrite("time_embed_dim", &nets::ModelConfig::time_embed_dim)
      .def_readwrite("cond_dim", &nets::ModelConfig::cond_dim)
      .def_readwrite("unet_base", &nets::ModelConfig::unet_base)
      .def_readwrite("var_layers", &nets::ModelConfig::var_layers)
      .def_readwrite("var_hidden", &nets::ModelConfig::var_hidden)
      .def_readwrite("sigma_floor", &nets::ModelConfig::sigma_floor)
      .def("joint_channels", &nets::ModelConfig::joint_channels);

  py::class_<train::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &train::TrainConfig::batch_size)
      .def_readwrite("lr", &train::TrainConfig::lr)
      .def_readwrite("total_steps", &train::TrainConfig::total_steps)
      .def_readwrite("goal_dropout", &train::TrainConfig::goal_dropout)
      .def_readwrite("seed", &train::TrainConfig::seed)
      .def_readwrite("eval_interval", &train::TrainConfig::eval_interval)
      .def_readwrite("threads", &train::TrainConfig::threads)
      .def_readwrite("fit_stats", &train::TrainConfig::fit_stats);

  py::class_<train::CurveRow>(m, "CurveRow")
      .def_readonly("step", &train::CurveRow::step)
      .def_readonly("flow_loss", &train::CurveRow::flow_loss)
      .def_readonly("velocity_mse", &train::CurveRow::velocity_mse)
      .def_readonly("mean_log_sigma", &train::CurveRow::mean_log_sigma)
      .def_readonly("val_loss", &train::CurveRow::val_loss);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("curve", &TrainReport::curve)
      .def_readonly("best_val_loss", &TrainReport::best_val_loss)
      .def_readonly("best_step", &TrainReport::best_step)
      .def_readonly("wall_time", &TrainReport::wall_time);

  py::class_<Model>(m, "Model")
      .def(py::init<const nets::ModelConfig&, std::uint64_t>(), py::arg("config"),
           py::arg("seed"))
      .def_property_readonly("config", &Model::config,
                             py::return_value_policy::reference_internal);

  py::class_<qp::ViolationSummary>(m, "ViolationSummary")
      .def_readonly("alpha", &qp::ViolationSummary::alpha)
      .def_readonly("omega", &qp::ViolationSummary::omega)
      .def_readonly("goal_distance", &qp::ViolationSummary::goal_distance);

  py::class_<qp::RefinementReport>(m, "RefinementReport")
      .def_readonly("converged", &qp::RefinementReport::converged)
      .def_readonly("iterations", &qp::RefinementReport::iterations)
      .def_readonly("objective", &qp::RefinementReport::objective)
      .def_readonly("max_shift", &qp::RefinementReport::max_shift)
      .def_readonly("before", &qp::RefinementReport::before)
      .def_readonly("after", &qp::RefinementReport::after);

  py::class_<sampler::SamplerStats>(m, "SamplerStats")
      .def_readonly("nfe", &sampler::SamplerStats::nfe)
      .def_readonly("step_sizes", &sampler::SamplerStats::step_sizes)
      .def_readonly("sigmas", &sampler::SamplerStats::sigmas)
      .def_readonly("wall_time", &sampler::SamplerStats::wall_time);

  py::class_<sampler::PlanResult>(m, "PlanResult")
      .def_readonly("ego", &sampler::PlanResult::ego)
      .def_readonly("neighbors", &sampler::PlanResult::neighbors)
      .def_readonly("neighbor_valid", &sampler::PlanResult::neighbor_valid)
      .def_readonly("stats", &sampler::PlanResult::stats)
      .def_readonly("refined", &sampler::PlanResult::refined)
      .def_readonly("refinement", &sampler::PlanResult::refinement);

  py::class_<metrics::MetricConfig>(m, "MetricConfig")
      .def(py::init<>())
      .def_readwrite("speed_floor", &metrics::MetricConfig::speed_floor)
      .def_readwrite("alpha_limit", &metrics::MetricConfig::alpha_limit)
      .def_readwrite("omega_limit", &metrics::MetricConfig::omega_limit)
      .def_readwrite("collision_radius", &metrics::MetricConfig::collision_radius);

  py::class_<metrics::SceneRow>(m, "SceneRow")
      .def_readonly("scene_id", &metrics::SceneRow::scene_id)
      .def_readonly("min_ade", &metrics::SceneRow::min_ade)
      .def_readonly("min_fde", &metrics::SceneRow::min_fde)
      .def_readonly("goal_error", &metrics::SceneRow::goal_error)
      .def_readonly("angle_change", &metrics::SceneRow::angle_change)
      .def_readonly("path_length", &metrics::SceneRow::path_length)
      .def_readonly("curvature", &metrics::SceneRow::curvature)
      .def_readonly("collision", &metrics::SceneRow::collision)
      .def_readonly("acc_violation", &metrics::SceneRow::acc_violation)
      .def_readonly("omega_violation", &metrics::SceneRow::omega_violation);

  py::class_<metrics::SplitSummary>(m, "SplitSummary")
      .def_readonly("rows", &metrics::SplitSummary::rows)
      .def_readonly("min_ade", &metrics::SplitSummary::min_ade)
      .def_readonly("min_fde", &metrics::SplitSummary::min_fde)
      .def_readonly("goal_error", &metrics::SplitSummary::goal_error)
      .def_readonly("angle_change", &metrics::SplitSummary::angle_change)
      .def_readonly("path_length", &metrics::SplitSummary::path_length)
      .def_readonly("curvature", &metrics::SplitSummary::curvature)
      .def_readonly("collision_rate", &metrics::SplitSummary::collision_rate)
      .def_readonly("acc_violation", &metrics::SplitSummary::acc_violation)
      .def_readonly("omega_violation", &metrics::SplitSummary::omega_violation);

  py::class_<io::SceneFile>(m, "SceneFile")
      .def_readonly("horizon", &io::SceneFile::horizon)
      .def_readonly("scenes", &io::SceneFile::scenes);

  // ---- scene generation ----

  m.def("scenario_kinds", []() {
    std::vector<std::string> names;
    for (int k = 0; k < scenegen::kNumScenarioKinds; ++k) {
      names.push_back(scenegen::kind_name(static_cast<scenegen::ScenarioKind>(k)));
    }
    return names;
  });

  m.def(
      "generate_scene",
      [](const std::string& kind, std::uint64_t seed, const HorizonConfig& horizon,
         double noise_scale, int num_neighbors) {
        return scenegen::generate_scene(make_spec(kind, seed, noise_scale, num_neighbors),
                                        horizon);
      },
      py::arg("kind"), py::arg("seed"), py::arg("horizon") = HorizonConfig{},
      py::arg("noise_scale") = 0.1, py::arg("num_neighbors") = 2,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "fork_goals",
      [](std::uint64_t seed, const HorizonConfig& horizon, double noise_scale,
         int num_neighbors) {
        return scenegen::fork_goals(make_spec("two-goal-fork", seed, noise_scale, num_neighbors),
                                    horizon);
      },
      py::arg("seed"), py::arg("horizon") = HorizonConfig{}, py::arg("noise_scale") = 0.1,
      py::arg("num_neighbors") = 2);

  // ---- scene files ----

  m.def("read_scenes", &io::read_scenes, py::arg("path"),
        py::call_guard<py::gil_scoped_release>());
  m.def("write_scenes", &io::write_scenes, py::arg("path"), py::arg("scenes"),
        py::arg("horizon"), py::call_guard<py::gil_scoped_release>());

  // ---- training ----

  m.def(
      "train",
      [](Model& model, const std::vector<SceneSample>& train_split,
         const std::vector<SceneSample>& val_split, const train::TrainConfig& config) {
        const train::TrainResult<float> result =
            train::train(model, train_split, val_split, config);
        TrainReport report;
        report.curve = result.curve;
        report.best_val_loss = result.best_val_loss;
        report.best_step = result.best_step;
        report.wall_time = result.wall_time;
        return report;
      },
      py::arg("model"), py::arg("train_split"), py::arg("val_split"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());

  // ---- planning ----

  m.def(
      "plan",
      [](const Model& model, const SceneSample& scene, bool adaptive, int euler_steps,
         bool refine, bool with_goal, std::uint64_t seed, std::uint64_t stream) {
        sampler::PlanConfig config;
        config.adaptive = adaptive;
        config.euler_steps = euler_steps;
        config.refine = refine;
        config.with_goal = with_goal;
        Rng rng(seed, stream);
        return sampler::plan(model, scene, config, rng);
      },
      py::arg("model"), py::arg("scene"), py::arg("adaptive") = true,
      py::arg("euler_steps") = 5, py::arg("refine") = true, py::arg("with_goal") = true,
      py::arg("seed") = 0, py::arg("stream") = 0, py::call_guard<py::gil_scoped_release>());

  // ---- metrics ----

  m.def("evaluate_split", &metrics::evaluate_split, py::arg("scenes"), py::arg("candidates"),
        py::arg("config") = metrics::MetricConfig{},
        py::call_guard<py::gil_scoped_release>());

  // ---- checkpoints ----

  m.def(
      "save_checkpoint",
      [](const std::string& path, const Model& model, const train::TrainConfig& config) {
        io::write_checkpoint(path, io::snapshot(model, config));
      },
      py::arg("path"), py::arg("model"), py::arg("config") = train::TrainConfig{},
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        return io::model_from_checkpoint(io::read_checkpoint(path));
      },
      py::arg("path"), py::call_guard<py::gil_scoped_release>());
}
