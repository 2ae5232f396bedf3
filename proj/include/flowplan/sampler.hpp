// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_SAMPLER_HPP
#define FLOWPLAN_SAMPLER_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "flowplan/core.hpp"
#include "flowplan/nets/model.hpp"
#include "flowplan/qp/qprefine.hpp"

namespace flowplan {
class Rng;
}

namespace flowplan::sampler {

/// Velocity field with a per-evaluation uncertainty estimate. Implementations
/// must be pure in (z, t): the integrators assume a replay with the same
/// inputs reproduces the same outputs.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  /// Flattened state dimension.
  virtual int dim() const = 0;
  /// Writes v(z, t) into out_velocity (resized to dim()) and returns sigma.
  virtual double evaluate(const std::vector<double>& z, double t,
                          std::vector<double>& out_velocity) const = 0;
};

/// Variance-adaptive step rule: eps_t = clamp(max(eta / sigma, eps_min),
/// eps_min, eps_max), with the final step truncated so t lands exactly on 1.
struct AdaptiveStepConfig {
  double eta{0.1};      // regulation constant in eps = eta / sigma
  double eps_min{0.01};  // smallest allowed step
  double eps_max{0.5};   // cap on a single step; 1.0 removes the cap
  int max_nfe{200};      // hard evaluation limit

  /// Throws std::invalid_argument unless 0 < eps_min <= eps_max <= 1, eta > 0,
  /// and eps_min * max_nfe >= 1 (which makes the max_nfe abort unreachable).
  void check() const;
};

/// Per-integration record. step_sizes and sigmas are aligned per evaluation;
/// step_sizes sum to 1 within 1e-9 and nfe equals their count.
struct SamplerStats {
  int nfe{0};
  std::vector<double> step_sizes;
  std::vector<double> sigmas;
  double wall_time{0.0};  // [s]
};

/// Integrates dz/dt = v(z, t) from t=0 to t=1 with a fixed step 1/steps.
/// Throws std::invalid_argument on steps < 1 and std::runtime_error naming the
/// step index if the state or velocity turns non-finite.
std::vector<double> integrate_euler(const VelocityField& field, std::vector<double> z,
                                    int steps, SamplerStats* stats = nullptr);

/// Integrates with the variance-adaptive rule. One field evaluation yields
/// both the velocity and the sigma that sets the step taken with it.
std::vector<double> integrate_adaptive(const VelocityField& field, std::vector<double> z,
                                       const AdaptiveStepConfig& config,
                                       SamplerStats* stats = nullptr);

/// Joint velocity field of a trained model for one encoded scene context.
template <typename Scalar>
class ModelField final : public VelocityField {
 public:
  ModelField(const nets::FlowModel<Scalar>& model, nets::ContextEmbedding context)
      : model_(&model), context_(std::move(context)) {}

  int dim() const override {
    return model_->config().horizon * model_->config().joint_channels();
  }
  double evaluate(const std::vector<double>& z, double t,
                  std::vector<double>& out_velocity) const override {
    return model_->evaluate(z, t, context_, out_velocity);
  }

 private:
  const nets::FlowModel<Scalar>* model_;
  nets::ContextEmbedding context_;
};

/// Draws z0 from a standard Gaussian, integrates the model field with fixed
/// Euler steps, and returns the flattened (T, joint_channels) prediction in
/// ego-frame meters plus the integration stats. The sample is canonicalized
/// to the ego frame internally; rng is consumed only for z0.
template <typename Scalar>
std::pair<std::vector<double>, SamplerStats> sample_euler(const nets::FlowModel<Scalar>& model,
                                                          const SceneSample& sample, int steps,
                                                          Rng& rng, bool with_goal = true);

/// Same contract with the variance-adaptive rule.
template <typename Scalar>
std::pair<std::vector<double>, SamplerStats> sample_adaptive(
    const nets::FlowModel<Scalar>& model, const SceneSample& sample,
    const AdaptiveStepConfig& config, Rng& rng, bool with_goal = true);

/// Planner frontend configuration.
struct PlanConfig {
  bool adaptive{true};       // false selects fixed-step Euler
  int euler_steps{5};        // used when adaptive is false
  AdaptiveStepConfig step;   // used when adaptive is true
  bool refine{true};         // pass the ego plan through the QP
  bool with_goal{true};      // feed the goal token to the encoder
  qp::RefineWeights weights;
  qp::AdmmSettings admm;
};

/// Ego plan plus neighbor predictions in the frame of the input sample.
struct PlanResult {
  Trajectory ego;                           // T states
  std::vector<Trajectory> neighbors;        // per slot; invalid slots empty
  std::vector<std::uint8_t> neighbor_valid; // copied from the sample
  SamplerStats stats;
  bool refined{false};
  qp::RefinementReport refinement;          // populated when refined
};

/// Samples one joint trajectory, splits it into ego and neighbors, optionally
/// refines the ego plan (positions through the QP, velocities recomputed by
/// finite differences; neighbors are never refined), and maps everything back
/// to the input frame.
template <typename Scalar>
PlanResult plan(const nets::FlowModel<Scalar>& model, const SceneSample& sample,
                const PlanConfig& config, Rng& rng);

extern template class ModelField<float>;
extern template class ModelField<double>;

}  // namespace flowplan::sampler

#endif  // FLOWPLAN_SAMPLER_HPP
