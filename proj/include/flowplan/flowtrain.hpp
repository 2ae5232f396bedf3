// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_FLOWTRAIN_HPP
#define FLOWPLAN_FLOWTRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "flowplan/ad/adam.hpp"
#include "flowplan/ad/ops.hpp"
#include "flowplan/ad/tape.hpp"
#include "flowplan/core.hpp"
#include "flowplan/io/rng.hpp"
#include "flowplan/nets/model.hpp"

namespace flowplan::train {

/// Training hyperparameters. Defaults train the desk-scale model on CPU in
/// minutes.
struct TrainConfig {
  int batch_size{32};      // must be a multiple of the 4 gradient shards
  double lr{3e-4};
  int total_steps{5000};
  double beta1_loss{0.0};  // encoder-loss weight, unused (no encoder loss)
  double beta2_loss{1.0};  // flow-loss weight
  double goal_dropout{0.1};
  std::uint64_t seed{1};
  int eval_interval{250};
  int threads{4};          // shard workers; results are thread-count invariant
  bool fit_stats{true};    // fit normalization from the train split

  void check() const;  // throws std::invalid_argument on bad values
};

/// Loss terms of one batch. flow_loss == velocity_mse + mean_log_sigma by
/// construction (the two reported terms are the actual summands).
struct LossReport {
  double flow_loss{0.0};
  double velocity_mse{0.0};      // mean over samples of mse_i / (2 sigma_i)
  double mean_log_sigma{0.0};    // mean over samples of log sigma_i
  int step{0};
  double wall_time{0.0};         // [s]
};

/// One row of the training curve. val_loss is NaN on steps without a
/// validation pass.
struct CurveRow {
  int step{0};
  double flow_loss{0.0};
  double velocity_mse{0.0};
  double mean_log_sigma{0.0};
  double val_loss{0.0};
};

/// Per-sample flow-matching quantities. All tensors are flattened
/// (T x joint_channels) in normalized units.
struct FlowSample {
  std::vector<double> z0;      // prior draw
  std::vector<double> z1;      // ground-truth joint future
  std::vector<double> zt;      // (1 - t) z0 + t z1, exact
  std::vector<double> target;  // z1 - z0
  double t{0.0};
  bool with_goal{true};
};

/// zt = (1 - t) z0 + t z1 elementwise; exact at the endpoints.
std::vector<double> interpolate(const std::vector<double>& z0, const std::vector<double>& z1,
                                double t);

/// Draws (t, goal flag, z0) for one sample in a fixed order: t first, then the
/// goal-dropout uniform, then T*C standard normals. The order is part of the
/// determinism contract.
FlowSample draw_flow_sample(const SceneSample& sample, const NormalizationStats& stats,
                            const nets::ModelConfig& config, double goal_dropout, Rng& rng);

/// Loss pieces assembled from explicit head outputs; the seam lets tests feed
/// analytic velocity/sigma values. velocity (B,T,C), sigma (B,1), target and
/// mask (B,T,C), inv_count (B,1) holding 1 / (valid elements per sample).
/// Per-sample loss: mask-weighted mse / (2 sigma) + log sigma.
template <typename Scalar>
struct LossGraph {
  ad::Var loss;           // scalar, velocity_term + log_term
  ad::Var velocity_term;  // scalar, batch mean of mse_i / (2 sigma_i)
  ad::Var log_term;       // scalar, batch mean of log sigma_i
};

template <typename Scalar>
LossGraph<Scalar> loss_from_heads(ad::Tape<Scalar>& tape, ad::Var velocity, ad::Var sigma,
                                  ad::Var target, ad::Var mask, ad::Var inv_count);

/// Full flow-matching loss graph for a batch with pre-drawn flow samples
/// (draws.size() == count). Samples must be in the ego frame; the model's
/// normalization stats are applied internally.
template <typename Scalar>
LossGraph<Scalar> flow_loss_graph(ad::Tape<Scalar>& tape, const nets::FlowModel<Scalar>& model,
                                  const SceneSample* const* batch, int count,
                                  const std::vector<FlowSample>& draws);

/// Value-level wrapper: draws flow samples from rng and evaluates the loss.
template <typename Scalar>
LossReport flow_loss(const nets::FlowModel<Scalar>& model, const SceneSample* const* batch,
                     int count, Rng& rng, double goal_dropout = 0.1);

template <typename Scalar>
struct TrainResult {
  std::vector<CurveRow> curve;
  double best_val_loss{0.0};
  int best_step{0};
  std::vector<ad::Tensor<Scalar>> best_params;  // snapshot indexed by param id
  double wall_time{0.0};                        // [s]
};

/// Optimizer state carried across interrupted runs. Training continues with
/// steps start_step+1 .. total_steps; because every step seeds its own rng
/// stream, a resumed run is bit-identical to an uninterrupted one given the
/// same splits, config, and restored Adam moments. On return the struct holds
/// the final state.
template <typename Scalar>
struct ResumeState {
  ad::AdamState<Scalar> adam;
  int start_step{0};
};

/// Deterministic training loop: canonicalizes the splits to the ego frame,
/// fits normalization stats (if configured), and runs Adam over
/// config.total_steps batches of flow-matching loss. Gradients are computed in
/// 4 fixed shards and accumulated in shard order, so results do not depend on
/// config.threads. Validation uses noise drawn once up front, so val losses
/// are comparable across evals. Throws std::runtime_error on divergence
/// (non-finite loss or loss > 1e6) with the failing step in the message.
template <typename Scalar>
TrainResult<Scalar> train(nets::FlowModel<Scalar>& model,
                          const std::vector<SceneSample>& train_split,
                          const std::vector<SceneSample>& val_split, const TrainConfig& config,
                          ResumeState<Scalar>* resume = nullptr);

/// CSV rendering of the loss curve: header
/// step,flow_loss,velocity_mse,mean_log_sigma,val_loss with empty val cells on
/// non-eval rows. Deterministic (no timing columns).
std::string curve_to_csv(const std::vector<CurveRow>& curve);

extern template LossGraph<float> loss_from_heads<float>(ad::Tape<float>&, ad::Var, ad::Var,
                                                        ad::Var, ad::Var, ad::Var);
extern template LossGraph<double> loss_from_heads<double>(ad::Tape<double>&, ad::Var, ad::Var,
                                                          ad::Var, ad::Var, ad::Var);
extern template LossGraph<float> flow_loss_graph<float>(ad::Tape<float>&,
                                                        const nets::FlowModel<float>&,
                                                        const SceneSample* const*, int,
                                                        const std::vector<FlowSample>&);
extern template LossGraph<double> flow_loss_graph<double>(ad::Tape<double>&,
                                                          const nets::FlowModel<double>&,
                                                          const SceneSample* const*, int,
                                                          const std::vector<FlowSample>&);
extern template LossReport flow_loss<float>(const nets::FlowModel<float>&,
                                            const SceneSample* const*, int, Rng&, double);
extern template LossReport flow_loss<double>(const nets::FlowModel<double>&,
                                             const SceneSample* const*, int, Rng&, double);
extern template TrainResult<float> train<float>(nets::FlowModel<float>&,
                                                const std::vector<SceneSample>&,
                                                const std::vector<SceneSample>&,
                                                const TrainConfig&, ResumeState<float>*);
extern template TrainResult<double> train<double>(nets::FlowModel<double>&,
                                                  const std::vector<SceneSample>&,
                                                  const std::vector<SceneSample>&,
                                                  const TrainConfig&, ResumeState<double>*);

}  // namespace flowplan::train

#endif  // FLOWPLAN_FLOWTRAIN_HPP
