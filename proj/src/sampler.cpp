// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flowplan/io/rng.hpp"

namespace flowplan::sampler {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_state(const std::vector<double>& z, const std::vector<double>& v, double sigma,
                 int step) {
  if (!std::isfinite(sigma)) {
    throw std::runtime_error("sampler: non-finite sigma at step " + std::to_string(step));
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("sampler: non-finite velocity at step " + std::to_string(step));
    }
  }
  for (double x : z) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("sampler: non-finite state at step " + std::to_string(step));
    }
  }
}

void record(SamplerStats* stats, double eps, double sigma) {
  if (stats == nullptr) return;
  stats->step_sizes.push_back(eps);
  stats->sigmas.push_back(sigma);
  stats->nfe = static_cast<int>(stats->step_sizes.size());
}

/// In-place per-channel destandardization of a flattened (T, C) joint tensor.
void denormalize_joint(std::vector<double>& flat, const NormalizationStats& stats,
                       const nets::ModelConfig& config) {
  const int channels = config.joint_channels();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const int ch = static_cast<int>(i) % channels % 4;
    flat[i] = stats.mean[ch] + stats.std[ch] * flat[i];
  }
}

}  // namespace

void AdaptiveStepConfig::check() const {
  if (!(eta > 0.0)) throw std::invalid_argument("AdaptiveStepConfig: eta must be positive");
  if (!(eps_min > 0.0) || !(eps_min <= eps_max) || !(eps_max <= 1.0)) {
    throw std::invalid_argument("AdaptiveStepConfig: need 0 < eps_min <= eps_max <= 1");
  }
  if (max_nfe < 1) throw std::invalid_argument("AdaptiveStepConfig: max_nfe must be >= 1");
  if (eps_min * static_cast<double>(max_nfe) < 1.0) {
    throw std::invalid_argument("AdaptiveStepConfig: eps_min * max_nfe must cover [0, 1]");
  }
}

std::vector<double> integrate_euler(const VelocityField& field, std::vector<double> z,
                                    int steps, SamplerStats* stats) {
  if (steps < 1) throw std::invalid_argument("integrate_euler: steps must be >= 1");
  if (static_cast<int>(z.size()) != field.dim()) {
    throw std::invalid_argument("integrate_euler: state size does not match the field");
  }
  const double start = now_seconds();
  const double eps = 1.0 / static_cast<double>(steps);
  std::vector<double> v;
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    const double sigma = field.evaluate(z, t, v);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += eps * v[i];
    check_state(z, v, sigma, k);
    record(stats, eps, sigma);
  }
  if (stats != nullptr) stats->wall_time = now_seconds() - start;
  return z;
}

std::vector<double> integrate_adaptive(const VelocityField& field, std::vector<double> z,
                                       const AdaptiveStepConfig& config, SamplerStats* stats) {
  config.check();
  if (static_cast<int>(z.size()) != field.dim()) {
    throw std::invalid_argument("integrate_adaptive: state size does not match the field");
  }
  const double start = now_seconds();
  std::vector<double> v;
  double t = 0.0;
  int step = 0;
  while (t < 1.0 - 1e-12) {
    if (step >= config.max_nfe) {
      throw std::runtime_error("integrate_adaptive: max_nfe exceeded at t=" + std::to_string(t));
    }
    const double sigma = field.evaluate(z, t, v);
    double eps = std::clamp(std::max(config.eta / sigma, config.eps_min), config.eps_min,
                            config.eps_max);
    const double remaining = 1.0 - t;
    if (eps >= remaining) {
      eps = remaining;  // truncated final step lands exactly on t = 1
      t = 1.0;
    } else {
      t += eps;
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += eps * v[i];
    check_state(z, v, sigma, step);
    record(stats, eps, sigma);
    ++step;
  }
  if (stats != nullptr) stats->wall_time = now_seconds() - start;
  return z;
}

template <typename Scalar>
std::pair<std::vector<double>, SamplerStats> sample_euler(const nets::FlowModel<Scalar>& model,
                                                          const SceneSample& sample, int steps,
                                                          Rng& rng, bool with_goal) {
  const EgoFramed ef = to_ego_frame(sample);
  const nets::ContextEmbedding ctx = model.encode_one(ef.sample, with_goal);
  const ModelField<Scalar> field(model, ctx);
  std::vector<double> z0(static_cast<std::size_t>(field.dim()));
  for (auto& x : z0) x = rng.normal();
  SamplerStats stats;
  std::vector<double> z = integrate_euler(field, std::move(z0), steps, &stats);
  denormalize_joint(z, model.stats(), model.config());
  return {std::move(z), std::move(stats)};
}

template <typename Scalar>
std::pair<std::vector<double>, SamplerStats> sample_adaptive(
    const nets::FlowModel<Scalar>& model, const SceneSample& sample,
    const AdaptiveStepConfig& config, Rng& rng, bool with_goal) {
  const EgoFramed ef = to_ego_frame(sample);
  const nets::ContextEmbedding ctx = model.encode_one(ef.sample, with_goal);
  const ModelField<Scalar> field(model, ctx);
  std::vector<double> z0(static_cast<std::size_t>(field.dim()));
  for (auto& x : z0) x = rng.normal();
  SamplerStats stats;
  std::vector<double> z = integrate_adaptive(field, std::move(z0), config, &stats);
  denormalize_joint(z, model.stats(), model.config());
  return {std::move(z), std::move(stats)};
}

template <typename Scalar>
PlanResult plan(const nets::FlowModel<Scalar>& model, const SceneSample& sample,
                const PlanConfig& config, Rng& rng) {
  std::pair<std::vector<double>, SamplerStats> drawn =
      config.adaptive ? sample_adaptive(model, sample, config.step, rng, config.with_goal)
                      : sample_euler(model, sample, config.euler_steps, rng, config.with_goal);

  // The sampled tensor is already in ego-frame meters; identity stats make
  // split_joint a pure reshape.
  const NormalizationStats identity;
  const double dt = sample.ego_history.dt;
  std::vector<Trajectory> parts =
      nets::split_joint(drawn.first, sample.neighbor_valid, identity, model.config(), dt);

  const EgoFramed ef = to_ego_frame(sample);
  PlanResult out;
  out.stats = std::move(drawn.second);
  out.neighbor_valid = sample.neighbor_valid;

  Trajectory ego = std::move(parts.front());
  if (config.refine) {
    const AgentState current = ef.sample.ego_history.states.back();
    out.refinement = qp::refine(ego, current, ef.sample.goal, config.weights, config.admm);
    ego = out.refinement.refined;
    out.refined = true;
  }
  out.ego = to_world_frame(ego, ef.world_from_ego);

  out.neighbors.reserve(parts.size() - 1);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (out.neighbor_valid[i - 1] != 0) {
      out.neighbors.push_back(to_world_frame(parts[i], ef.world_from_ego));
    } else {
      Trajectory empty;
      empty.dt = dt;
      out.neighbors.push_back(std::move(empty));
    }
  }
  return out;
}

template class ModelField<float>;
template class ModelField<double>;

template std::pair<std::vector<double>, SamplerStats> sample_euler<float>(
    const nets::FlowModel<float>&, const SceneSample&, int, Rng&, bool);
template std::pair<std::vector<double>, SamplerStats> sample_euler<double>(
    const nets::FlowModel<double>&, const SceneSample&, int, Rng&, bool);
template std::pair<std::vector<double>, SamplerStats> sample_adaptive<float>(
    const nets::FlowModel<float>&, const SceneSample&, const AdaptiveStepConfig&, Rng&, bool);
template std::pair<std::vector<double>, SamplerStats> sample_adaptive<double>(
    const nets::FlowModel<double>&, const SceneSample&, const AdaptiveStepConfig&, Rng&, bool);
template PlanResult plan<float>(const nets::FlowModel<float>&, const SceneSample&,
                                const PlanConfig&, Rng&);
template PlanResult plan<double>(const nets::FlowModel<double>&, const SceneSample&,
                                 const PlanConfig&, Rng&);

}  // namespace flowplan::sampler
