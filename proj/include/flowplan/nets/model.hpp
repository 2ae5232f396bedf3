// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_NETS_MODEL_HPP
#define FLOWPLAN_NETS_MODEL_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowplan/ad/ops.hpp"
#include "flowplan/ad/tape.hpp"
#include "flowplan/core.hpp"

namespace flowplan {
class Rng;
}

namespace flowplan::nets {

/// Architecture hyperparameters. Every dimension is explicit so that tests can
/// instantiate tiny models and checkpoints can rebuild the exact architecture.
struct ModelConfig {
  // Scene shape (must match the data pipeline).
  int history{10};        // K, states per agent history
  int horizon{80};        // T, future steps; multiple of 4 (two pooling levels)
  int max_neighbors{5};   // N_o
  int map_polylines{12};  // polyline slots
  int map_points{20};     // points per polyline
  int map_attrs{8};       // raw attributes per point

  // Encoder.
  int point_hidden{32};  // map point MLP width
  int token_dim{64};     // per-token embedding width
  int attn_heads{4};     // heads in the single self-attention block
  int context_dim{128};  // context vector c

  // Conditioning trunk shared by the U-Net and the variance head.
  int time_embed_dim{64};  // sinusoidal embedding of flow time t, even
  int cond_dim{128};       // width of the fused (t, c) conditioning vector

  // Velocity U-Net.
  int unet_base{32};                    // channels at full temporal resolution
  std::array<int, 3> unet_mults{1, 2, 4};  // channel multipliers per level

  // Variance head.
  int var_layers{4};       // linear layers, including the scalar output layer
  int var_hidden{128};     // hidden width
  double sigma_floor{1e-3};

  /// Joint trajectory channels: (x, y, vx, vy) for ego plus each neighbor slot.
  int joint_channels() const { return 4 * (1 + max_neighbors); }
  /// Tokens entering self-attention: ego, neighbor slots, pooled map, goal.
  int num_tokens() const { return 1 + max_neighbors + 2; }
  /// Map point features after heading is expanded to (cos, sin).
  int point_features() const { return map_attrs + 1; }

  /// Throws std::invalid_argument on inconsistent dimensions.
  void check() const;

  /// CPU-friendly configuration used by the shipped pipeline.
  static ModelConfig desk_default();
  /// Full-scale configuration: U-Net base width 128, variance hidden 512.
  static ModelConfig paper_scale();
};

/// Fixed-length scene context vector c.
struct ContextEmbedding {
  std::vector<double> v;
};

/// Scene context encoder, velocity-field U-Net, and variance head over one
/// shared parameter store. Scalar is float for training, double for
/// finite-difference gradient checks.
///
/// The joint trajectory tensor is (T, joint_channels) with column 4*a + ch,
/// agent 0 the ego, ch in {x, y, vx, vy}; all values in normalized units.
template <typename Scalar>
class FlowModel {
 public:
  /// Deterministic initialization from the seed. Final U-Net conv and final
  /// variance layer start at zero, so the untrained model outputs v = 0 and
  /// sigma = softplus(0) + sigma_floor.
  FlowModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ad::ParamStore<Scalar>& params() { return params_; }
  const ad::ParamStore<Scalar>& params() const { return params_; }

  const NormalizationStats& stats() const { return stats_; }
  void set_stats(const NormalizationStats& stats) { stats_ = stats; }

  /// Encodes a batch of ego-frame samples into context vectors (B, context_dim).
  /// Trajectories, map coordinates, and the goal are standardized internally
  /// with the model's normalization stats. with_goal[b] == 0 masks sample b's
  /// goal token (the token contributes exactly zero). Invalid neighbor slots
  /// and padded map entries never influence the output. Throws
  /// std::invalid_argument on history length != K or mismatched map shape.
  ad::Var encode(ad::Tape<Scalar>& tape, const SceneSample* const* samples, int count,
                 const std::uint8_t* with_goal) const;

  struct Output {
    ad::Var velocity;  // (B, T, joint_channels), same shape as the input
    ad::Var sigma;     // (B, 1), strictly positive
  };

  /// One U-Net forward pass: velocity field plus the variance head evaluated
  /// on the bottleneck features of the same pass. zt is (B, T, joint_channels)
  /// and ts holds one flow time per batch row. Throws std::invalid_argument if
  /// any t is outside [0, 1] or the shape disagrees with the config.
  Output velocity_and_variance(ad::Tape<Scalar>& tape, ad::Var zt,
                               const std::vector<double>& ts, ad::Var context) const;

  // -- value-level wrappers used by the sampler (no gradients retained) --

  /// Single-sample context in double precision.
  ContextEmbedding encode_one(const SceneSample& sample, bool with_goal = true) const;

  /// Evaluates (v, sigma) at one flow time. zt and out_velocity are flattened
  /// (T * joint_channels) row-major buffers; returns sigma.
  double evaluate(const std::vector<double>& zt, double t, const ContextEmbedding& context,
                  std::vector<double>& out_velocity) const;

 private:
  struct Linear {
    int w{-1};
    int b{-1};
  };
  struct Block {
    int conv_a_w{-1}, conv_a_b{-1};
    Linear proj;
    int conv_b_w{-1}, conv_b_b{-1};
  };

  int add_tensor(const std::string& name, std::vector<int> shape, double scale, Rng* rng);
  Linear add_linear(const std::string& prefix, int in, int out, Rng& rng, bool zero);
  Block add_block(const std::string& prefix, int cin, int cout, Rng& rng);

  ad::Var linear2d(ad::Tape<Scalar>& tape, ad::Var x, const Linear& l) const;
  ad::Var block_forward(ad::Tape<Scalar>& tape, ad::Var x, ad::Var cond, const Block& blk) const;

  ModelConfig config_;
  NormalizationStats stats_;
  ad::ParamStore<Scalar> params_;

  // Encoder.
  Linear agent1_, agent2_;
  Linear point1_, point2_;
  Linear poly_;
  Linear goal1_, goal2_;
  int token_embed_{-1};
  int ln_gamma_{-1}, ln_beta_{-1};
  Linear attn_q_, attn_k_, attn_v_, attn_o_;
  Linear ctx1_, ctx2_;

  // Conditioning trunk.
  Linear cond1_, cond2_;

  // U-Net.
  Block enc1_, enc2_, mid_, dec2_, dec1_;
  int out_w_{-1}, out_b_{-1};

  // Variance head.
  std::vector<Linear> var_;
};

/// Sinusoidal embedding of flow time t in [0, 1], length dim (even): the first
/// half is sin(1000 t w_i), the second cos(1000 t w_i), w_i log-spaced from 1
/// down to 1e-4.
std::vector<double> time_embedding(double t, int dim);

/// Joint future tensor (T, joint_channels) in normalized units; invalid
/// neighbor slots are zero-filled.
std::vector<double> joint_future(const SceneSample& sample, const NormalizationStats& stats,
                                 const ModelConfig& config);

/// Per-channel loss mask: 1 for ego and valid-neighbor channels, else 0.
std::vector<double> joint_mask(const SceneSample& sample, const ModelConfig& config);

/// Splits a flattened (T, joint_channels) tensor into denormalized
/// trajectories. Agent 0 is the ego; invalid slots come back empty.
std::vector<Trajectory> split_joint(const std::vector<double>& flat,
                                    const std::vector<std::uint8_t>& neighbor_valid,
                                    const NormalizationStats& stats, const ModelConfig& config,
                                    double dt);

extern template class FlowModel<float>;
extern template class FlowModel<double>;

}  // namespace flowplan::nets

#endif  // FLOWPLAN_NETS_MODEL_HPP
