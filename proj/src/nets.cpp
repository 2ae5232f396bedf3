// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/nets/model.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "flowplan/io/rng.hpp"

namespace flowplan::nets {

using ad::Tensor;

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void ModelConfig::check() const {
  require(history >= 1, "ModelConfig: history must be >= 1");
  require(horizon >= 4 && horizon % 4 == 0, "ModelConfig: horizon must be a positive multiple of 4");
  require(max_neighbors >= 0, "ModelConfig: max_neighbors must be >= 0");
  require(map_polylines >= 1 && map_points >= 1, "ModelConfig: map dimensions must be >= 1");
  require(map_attrs == 8, "ModelConfig: map_attrs must be 8 (x, y, heading, one-hot 4, valid)");
  require(point_hidden >= 1 && token_dim >= 1 && context_dim >= 1 && cond_dim >= 1,
          "ModelConfig: widths must be >= 1");
  require(attn_heads >= 1 && token_dim % attn_heads == 0,
          "ModelConfig: token_dim must be divisible by attn_heads");
  require(time_embed_dim >= 4 && time_embed_dim % 2 == 0,
          "ModelConfig: time_embed_dim must be even and >= 4");
  require(unet_base >= 1 && unet_mults[0] >= 1 && unet_mults[1] >= 1 && unet_mults[2] >= 1,
          "ModelConfig: U-Net widths must be >= 1");
  require(var_layers >= 2, "ModelConfig: var_layers must be >= 2");
  require(var_hidden >= 1, "ModelConfig: var_hidden must be >= 1");
  require(sigma_floor > 0.0, "ModelConfig: sigma_floor must be positive");
}

ModelConfig ModelConfig::desk_default() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.unet_base = 128;
  cfg.var_hidden = 512;
  return cfg;
}

std::vector<double> time_embedding(double t, int dim) {
  const int half = dim / 2;
  std::vector<double> emb(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half - 1));
    const double arg = 1000.0 * t * w;
    emb[static_cast<std::size_t>(i)] = std::sin(arg);
    emb[static_cast<std::size_t>(half + i)] = std::cos(arg);
  }
  return emb;
}

std::vector<double> joint_future(const SceneSample& sample, const NormalizationStats& stats,
                                 const ModelConfig& config) {
  const int T = config.horizon;
  const int C = config.joint_channels();
  require(static_cast<int>(sample.ego_future.size()) == T, "joint_future: ego future length != T");
  require(static_cast<int>(sample.neighbor_futures.size()) == config.max_neighbors,
          "joint_future: neighbor future count != max_neighbors");
  std::vector<double> out(static_cast<std::size_t>(T * C), 0.0);
  auto put = [&](int agent, const Trajectory& traj) {
    for (int k = 0; k < T; ++k) {
      const AgentState n = normalize(traj.states[static_cast<std::size_t>(k)], stats);
      double* row = out.data() + static_cast<std::size_t>(k) * C + 4 * agent;
      row[0] = n.x;
      row[1] = n.y;
      row[2] = n.vx;
      row[3] = n.vy;
    }
  };
  put(0, sample.ego_future);
  for (int i = 0; i < config.max_neighbors; ++i) {
    if (!sample.neighbor_valid[static_cast<std::size_t>(i)]) continue;
    require(static_cast<int>(sample.neighbor_futures[static_cast<std::size_t>(i)].size()) == T,
            "joint_future: valid neighbor future length != T");
    put(1 + i, sample.neighbor_futures[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<double> joint_mask(const SceneSample& sample, const ModelConfig& config) {
  std::vector<double> mask(static_cast<std::size_t>(config.joint_channels()), 0.0);
  for (int ch = 0; ch < 4; ++ch) mask[static_cast<std::size_t>(ch)] = 1.0;
  for (int i = 0; i < config.max_neighbors; ++i) {
    if (!sample.neighbor_valid[static_cast<std::size_t>(i)]) continue;
    for (int ch = 0; ch < 4; ++ch) mask[static_cast<std::size_t>(4 * (1 + i) + ch)] = 1.0;
  }
  return mask;
}

std::vector<Trajectory> split_joint(const std::vector<double>& flat,
                                    const std::vector<std::uint8_t>& neighbor_valid,
                                    const NormalizationStats& stats, const ModelConfig& config,
                                    double dt) {
  const int T = config.horizon;
  const int C = config.joint_channels();
  require(static_cast<int>(flat.size()) == T * C, "split_joint: tensor size != T * joint_channels");
  require(static_cast<int>(neighbor_valid.size()) == config.max_neighbors,
          "split_joint: mask size != max_neighbors");
  std::vector<Trajectory> out(static_cast<std::size_t>(1 + config.max_neighbors));
  for (int a = 0; a <= config.max_neighbors; ++a) {
    Trajectory& traj = out[static_cast<std::size_t>(a)];
    traj.dt = dt;
    if (a > 0 && !neighbor_valid[static_cast<std::size_t>(a - 1)]) continue;
    traj.states.resize(static_cast<std::size_t>(T));
    for (int k = 0; k < T; ++k) {
      const double* row = flat.data() + static_cast<std::size_t>(k) * C + 4 * a;
      traj.states[static_cast<std::size_t>(k)] =
          denormalize(AgentState{row[0], row[1], row[2], row[3]}, stats);
    }
  }
  return out;
}

template <typename Scalar>
int FlowModel<Scalar>::add_tensor(const std::string& name, std::vector<int> shape, double scale,
                                  Rng* rng) {
  Tensor<Scalar> t(shape);
  if (rng != nullptr) {
    for (auto& v : t.data) v = static_cast<Scalar>(rng->uniform(-scale, scale));
  } else if (scale != 0.0) {
    for (auto& v : t.data) v = static_cast<Scalar>(scale);
  }
  return params_.add(name, std::move(t));
}

template <typename Scalar>
typename FlowModel<Scalar>::Linear FlowModel<Scalar>::add_linear(const std::string& prefix, int in,
                                                                 int out, Rng& rng, bool zero) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Linear l;
  l.w = add_tensor(prefix + ".w", {in, out}, zero ? 0.0 : a, zero ? nullptr : &rng);
  l.b = add_tensor(prefix + ".b", {out}, 0.0, nullptr);
  return l;
}

template <typename Scalar>
typename FlowModel<Scalar>::Block FlowModel<Scalar>::add_block(const std::string& prefix, int cin,
                                                               int cout, Rng& rng) {
  const double aa = std::sqrt(6.0 / static_cast<double>(3 * cin + 3 * cout));
  const double ab = std::sqrt(6.0 / static_cast<double>(3 * cout + 3 * cout));
  Block blk;
  blk.conv_a_w = add_tensor(prefix + ".conv_a.w", {3, cin, cout}, aa, &rng);
  blk.conv_a_b = add_tensor(prefix + ".conv_a.b", {cout}, 0.0, nullptr);
  blk.proj = add_linear(prefix + ".proj", config_.cond_dim, cout, rng, false);
  blk.conv_b_w = add_tensor(prefix + ".conv_b.w", {3, cout, cout}, ab, &rng);
  blk.conv_b_b = add_tensor(prefix + ".conv_b.b", {cout}, 0.0, nullptr);
  return blk;
}

template <typename Scalar>
FlowModel<Scalar>::FlowModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.check();
  Rng rng(seed, 0x6e657473ull);  // independent stream per model instance
  const int D = config_.token_dim;
  const int A = config_.num_tokens();

  agent1_ = add_linear("enc.agent.l1", config_.history * 4, D, rng, false);
  agent2_ = add_linear("enc.agent.l2", D, D, rng, false);
  point1_ = add_linear("enc.point.l1", config_.point_features(), config_.point_hidden, rng, false);
  point2_ = add_linear("enc.point.l2", config_.point_hidden, config_.point_hidden, rng, false);
  poly_ = add_linear("enc.poly", config_.point_hidden, D, rng, false);
  goal1_ = add_linear("enc.goal.l1", 4, D, rng, false);
  goal2_ = add_linear("enc.goal.l2", D, D, rng, false);
  token_embed_ = add_tensor("enc.token_embed", {A * D}, 0.02, &rng);
  ln_gamma_ = add_tensor("enc.ln.gamma", {D}, 1.0, nullptr);
  ln_beta_ = add_tensor("enc.ln.beta", {D}, 0.0, nullptr);
  attn_q_ = add_linear("enc.attn.q", D, D, rng, false);
  attn_k_ = add_linear("enc.attn.k", D, D, rng, false);
  attn_v_ = add_linear("enc.attn.v", D, D, rng, false);
  attn_o_ = add_linear("enc.attn.o", D, D, rng, false);
  ctx1_ = add_linear("enc.ctx.l1", A * D, config_.context_dim, rng, false);
  ctx2_ = add_linear("enc.ctx.l2", config_.context_dim, config_.context_dim, rng, false);

  cond1_ = add_linear("cond.l1", config_.time_embed_dim + config_.context_dim, config_.cond_dim,
                      rng, false);
  cond2_ = add_linear("cond.l2", config_.cond_dim, config_.cond_dim, rng, false);

  const int c1 = config_.unet_base * config_.unet_mults[0];
  const int c2 = config_.unet_base * config_.unet_mults[1];
  const int c3 = config_.unet_base * config_.unet_mults[2];
  const int cj = config_.joint_channels();
  enc1_ = add_block("unet.enc1", cj, c1, rng);
  enc2_ = add_block("unet.enc2", c1, c2, rng);
  mid_ = add_block("unet.mid", c2, c3, rng);
  dec2_ = add_block("unet.dec2", c3 + c2, c2, rng);
  dec1_ = add_block("unet.dec1", c2 + c1, c1, rng);
  // Zero-initialized output conv: the untrained velocity field is exactly zero.
  out_w_ = add_tensor("unet.out.w", {3, c1, cj}, 0.0, nullptr);
  out_b_ = add_tensor("unet.out.b", {cj}, 0.0, nullptr);

  int in = c3 + config_.cond_dim;
  for (int i = 0; i < config_.var_layers; ++i) {
    const bool last = (i == config_.var_layers - 1);
    const int out = last ? 1 : config_.var_hidden;
    // Zero-initialized final layer: the untrained sigma is softplus(0) + floor.
    var_.push_back(add_linear("var.l" + std::to_string(i + 1), in, out, rng, last));
    in = out;
  }
}

template <typename Scalar>
ad::Var FlowModel<Scalar>::linear2d(ad::Tape<Scalar>& tape, ad::Var x, const Linear& l) const {
  return ad::bias_add(tape, ad::matmul(tape, x, tape.param(params_, l.w)),
                      tape.param(params_, l.b));
}

template <typename Scalar>
ad::Var FlowModel<Scalar>::block_forward(ad::Tape<Scalar>& tape, ad::Var x, ad::Var cond,
                                         const Block& blk) const {
  ad::Var h = ad::conv1d(tape, x, tape.param(params_, blk.conv_a_w),
                         tape.param(params_, blk.conv_a_b));
  h = ad::add_row_broadcast(tape, h, linear2d(tape, cond, blk.proj));
  h = ad::silu(tape, h);
  h = ad::conv1d(tape, h, tape.param(params_, blk.conv_b_w), tape.param(params_, blk.conv_b_b));
  return ad::silu(tape, h);
}

template <typename Scalar>
ad::Var FlowModel<Scalar>::encode(ad::Tape<Scalar>& tape, const SceneSample* const* samples,
                                  int count, const std::uint8_t* with_goal) const {
  require(count >= 1, "encode: empty batch");
  const int B = count;
  const int K = config_.history;
  const int N = config_.max_neighbors;
  const int P = config_.map_polylines;
  const int L = config_.map_points;
  const int F = config_.point_features();
  const int D = config_.token_dim;
  const int A = config_.num_tokens();
  const int H = config_.attn_heads;
  const int dh = D / H;

  Tensor<Scalar> agent_feats({B * (1 + N), K * 4});
  Tensor<Scalar> point_feats({B * P * L, F});
  Tensor<Scalar> point_w({B * P, 1, L});
  Tensor<Scalar> poly_w({B, 1, P});
  Tensor<Scalar> goal_feats({B, 4});
  Tensor<Scalar> key_mask({B * H, A, A});
  Tensor<Scalar> query_mask({B, A * D});

  auto put_history = [&](int row, const Trajectory& hist) {
    require(static_cast<int>(hist.size()) == K, "encode: history length != K");
    Scalar* dst = agent_feats.data.data() + static_cast<std::size_t>(row) * K * 4;
    for (int k = 0; k < K; ++k) {
      const AgentState n = normalize(hist.states[static_cast<std::size_t>(k)], stats_);
      dst[4 * k + 0] = static_cast<Scalar>(n.x);
      dst[4 * k + 1] = static_cast<Scalar>(n.y);
      dst[4 * k + 2] = static_cast<Scalar>(n.vx);
      dst[4 * k + 3] = static_cast<Scalar>(n.vy);
    }
  };

  std::vector<std::uint8_t> token_valid(static_cast<std::size_t>(B * A), 0);
  for (int b = 0; b < B; ++b) {
    const SceneSample& s = *samples[b];
    require(static_cast<int>(s.neighbor_histories.size()) == N,
            "encode: neighbor slot count != max_neighbors");
    require(static_cast<int>(s.neighbor_valid.size()) == N,
            "encode: neighbor mask size != max_neighbors");
    require(s.map.num_polylines == P && s.map.points_per == L && s.map.attr_dim == config_.map_attrs,
            "encode: map shape mismatch");

    put_history(b * (1 + N), s.ego_history);
    token_valid[static_cast<std::size_t>(b * A)] = 1;
    for (int i = 0; i < N; ++i) {
      if (!s.neighbor_valid[static_cast<std::size_t>(i)]) continue;  // slot stays zero
      put_history(b * (1 + N) + 1 + i, s.neighbor_histories[static_cast<std::size_t>(i)]);
      token_valid[static_cast<std::size_t>(b * A + 1 + i)] = 1;
    }

    bool any_poly = false;
    for (int p = 0; p < P; ++p) {
      int valid_points = 0;
      for (int i = 0; i < L; ++i) {
        if (s.map.at(p, i, 7) != 0.0) ++valid_points;
      }
      if (valid_points > 0) any_poly = true;
      const Scalar inv =
          valid_points > 0 ? static_cast<Scalar>(1.0 / valid_points) : static_cast<Scalar>(0);
      for (int i = 0; i < L; ++i) {
        const bool ok = s.map.at(p, i, 7) != 0.0;
        point_w.data[(static_cast<std::size_t>(b) * P + p) * L + i] = ok ? inv : Scalar(0);
        Scalar* dst =
            point_feats.data.data() + ((static_cast<std::size_t>(b) * P + p) * L + i) * F;
        dst[0] = static_cast<Scalar>((s.map.at(p, i, 0) - stats_.mean[0]) / stats_.std[0]);
        dst[1] = static_cast<Scalar>((s.map.at(p, i, 1) - stats_.mean[1]) / stats_.std[1]);
        dst[2] = static_cast<Scalar>(std::cos(s.map.at(p, i, 2)));
        dst[3] = static_cast<Scalar>(std::sin(s.map.at(p, i, 2)));
        for (int a = 3; a < config_.map_attrs; ++a) {
          dst[1 + a] = static_cast<Scalar>(s.map.at(p, i, a));
        }
      }
    }
    int valid_polys = 0;
    for (int p = 0; p < P; ++p) {
      bool ok = false;
      for (int i = 0; i < L; ++i) {
        if (s.map.at(p, i, 7) != 0.0) {
          ok = true;
          break;
        }
      }
      if (ok) ++valid_polys;
    }
    for (int p = 0; p < P; ++p) {
      bool ok = false;
      for (int i = 0; i < L; ++i) {
        if (s.map.at(p, i, 7) != 0.0) {
          ok = true;
          break;
        }
      }
      poly_w.data[static_cast<std::size_t>(b) * P + p] =
          ok ? static_cast<Scalar>(1.0 / valid_polys) : Scalar(0);
    }
    token_valid[static_cast<std::size_t>(b * A + 1 + N)] = any_poly ? 1 : 0;

    const bool use_goal = with_goal == nullptr || with_goal[b] != 0;
    if (use_goal) {
      Scalar* dst = goal_feats.data.data() + static_cast<std::size_t>(b) * 4;
      dst[0] = static_cast<Scalar>((s.goal.x - stats_.mean[0]) / stats_.std[0]);
      dst[1] = static_cast<Scalar>((s.goal.y - stats_.mean[1]) / stats_.std[1]);
      dst[2] = static_cast<Scalar>(std::cos(s.goal.heading));
      dst[3] = static_cast<Scalar>(std::sin(s.goal.heading));
      token_valid[static_cast<std::size_t>(b * A + A - 1)] = 1;
    }
  }

  // Invalid tokens are removed twice: -1e9 on their key columns before the
  // softmax, and a zero multiplier on their output rows. Buffer contents of
  // padded slots therefore cannot reach the context.
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int qi = 0; qi < A; ++qi) {
        Scalar* row = key_mask.data.data() +
                      ((static_cast<std::size_t>(b) * H + h) * A + qi) * A;
        for (int j = 0; j < A; ++j) {
          row[j] = token_valid[static_cast<std::size_t>(b * A + j)] ? Scalar(0) : Scalar(-1e9);
        }
      }
    }
    for (int j = 0; j < A; ++j) {
      const Scalar v = token_valid[static_cast<std::size_t>(b * A + j)] ? Scalar(1) : Scalar(0);
      Scalar* dst = query_mask.data.data() + (static_cast<std::size_t>(b) * A + j) * D;
      for (int c = 0; c < D; ++c) dst[c] = v;
    }
  }

  ad::Var af = tape.input(std::move(agent_feats));
  ad::Var atok = linear2d(tape, ad::silu(tape, linear2d(tape, af, agent1_)), agent2_);
  ad::Var agents = ad::reshape(tape, atok, {B, 1 + N, D});

  ad::Var pf = tape.input(std::move(point_feats));
  ad::Var pts = linear2d(tape, ad::silu(tape, linear2d(tape, pf, point1_)), point2_);
  ad::Var pooled = ad::bmm(tape, tape.input(std::move(point_w)),
                           ad::reshape(tape, pts, {B * P, L, config_.point_hidden}));
  ad::Var ptok =
      linear2d(tape, ad::silu(tape, ad::reshape(tape, pooled, {B * P, config_.point_hidden})),
               poly_);
  ad::Var maptok =
      ad::bmm(tape, tape.input(std::move(poly_w)), ad::reshape(tape, ptok, {B, P, D}));

  ad::Var gf = tape.input(std::move(goal_feats));
  ad::Var gtok = ad::reshape(
      tape, linear2d(tape, ad::silu(tape, linear2d(tape, gf, goal1_)), goal2_), {B, 1, D});

  ad::Var tokens = ad::concat(tape, {agents, maptok, gtok}, 1);
  tokens = ad::reshape(
      tape,
      ad::bias_add(tape, ad::reshape(tape, tokens, {B, A * D}), tape.param(params_, token_embed_)),
      {B, A, D});

  ad::Var ln = ad::layer_norm(tape, tokens, tape.param(params_, ln_gamma_),
                              tape.param(params_, ln_beta_));
  auto heads = [&](const Linear& l) {
    ad::Var h = linear2d(tape, ad::reshape(tape, ln, {B * A, D}), l);
    h = ad::reshape(tape, h, {B, A, H, dh});
    h = ad::permute(tape, h, {0, 2, 1, 3});
    return ad::reshape(tape, h, {B * H, A, dh});
  };
  ad::Var q = heads(attn_q_);
  ad::Var k = heads(attn_k_);
  ad::Var v = heads(attn_v_);
  ad::Var scores =
      ad::scale(tape, ad::bmm(tape, q, ad::permute(tape, k, {0, 2, 1})),
                static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh))));
  scores = ad::add(tape, scores, tape.input(std::move(key_mask)));
  ad::Var attn = ad::bmm(tape, ad::softmax_lastdim(tape, scores), v);
  attn = ad::permute(tape, ad::reshape(tape, attn, {B, H, A, dh}), {0, 2, 1, 3});
  ad::Var out = linear2d(tape, ad::reshape(tape, attn, {B * A, D}), attn_o_);
  ad::Var res = ad::add(tape, ad::reshape(tape, out, {B, A, D}), tokens);
  ad::Var flat =
      ad::mul(tape, ad::reshape(tape, res, {B, A * D}), tape.input(std::move(query_mask)));
  return linear2d(tape, ad::silu(tape, linear2d(tape, flat, ctx1_)), ctx2_);
}

template <typename Scalar>
typename FlowModel<Scalar>::Output FlowModel<Scalar>::velocity_and_variance(
    ad::Tape<Scalar>& tape, ad::Var zt, const std::vector<double>& ts, ad::Var context) const {
  const auto& vz = tape.value(zt);
  require(vz.ndim() == 3, "velocity: zt must be (B, T, channels)");
  const int B = vz.dim(0);
  require(vz.dim(1) == config_.horizon && vz.dim(2) == config_.joint_channels(),
          "velocity: zt shape mismatch");
  require(static_cast<int>(ts.size()) == B, "velocity: one flow time per batch row required");
  for (double t : ts) {
    require(t >= 0.0 && t <= 1.0, "velocity: t outside [0, 1]");
  }
  const auto& vc = tape.value(context);
  require(vc.ndim() == 2 && vc.dim(0) == B && vc.dim(1) == config_.context_dim,
          "velocity: context shape mismatch");

  Tensor<Scalar> temb({B, config_.time_embed_dim});
  for (int b = 0; b < B; ++b) {
    const std::vector<double> e = time_embedding(ts[static_cast<std::size_t>(b)],
                                                 config_.time_embed_dim);
    for (int i = 0; i < config_.time_embed_dim; ++i) {
      temb.data[static_cast<std::size_t>(b) * config_.time_embed_dim + i] =
          static_cast<Scalar>(e[static_cast<std::size_t>(i)]);
    }
  }

  ad::Var cond_in = ad::concat(tape, {tape.input(std::move(temb)), context}, 1);
  ad::Var cond = ad::silu(
      tape, linear2d(tape, ad::silu(tape, linear2d(tape, cond_in, cond1_)), cond2_));

  ad::Var h1 = block_forward(tape, zt, cond, enc1_);                       // (B, T, c1)
  ad::Var h2 = block_forward(tape, ad::avg_pool1d(tape, h1), cond, enc2_); // (B, T/2, c2)
  ad::Var hm = block_forward(tape, ad::avg_pool1d(tape, h2), cond, mid_);  // (B, T/4, c3)
  ad::Var u2 = ad::concat(tape, {ad::upsample_nearest1d(tape, hm), h2}, 2);
  ad::Var d2 = block_forward(tape, u2, cond, dec2_);                       // (B, T/2, c2)
  ad::Var u1 = ad::concat(tape, {ad::upsample_nearest1d(tape, d2), h1}, 2);
  ad::Var d1 = block_forward(tape, u1, cond, dec1_);                       // (B, T, c1)
  ad::Var vel = ad::conv1d(tape, d1, tape.param(params_, out_w_), tape.param(params_, out_b_));

  ad::Var vh = ad::concat(tape, {ad::mean_axis1(tape, hm), cond}, 1);
  for (std::size_t i = 0; i < var_.size(); ++i) {
    vh = linear2d(tape, vh, var_[i]);
    if (i + 1 < var_.size()) vh = ad::silu(tape, vh);
  }
  Tensor<Scalar> floor({B, 1});
  for (auto& f : floor.data) f = static_cast<Scalar>(config_.sigma_floor);
  ad::Var sigma = ad::add(tape, ad::softplus(tape, vh), tape.input(std::move(floor)));
  return Output{vel, sigma};
}

template <typename Scalar>
ContextEmbedding FlowModel<Scalar>::encode_one(const SceneSample& sample, bool with_goal) const {
  ad::Tape<Scalar> tape(false);  // values only, no backward closures
  const SceneSample* ptr = &sample;
  const std::uint8_t flag = with_goal ? 1 : 0;
  const ad::Var c = encode(tape, &ptr, 1, &flag);
  const auto& val = tape.value(c);
  ContextEmbedding out;
  out.v.resize(val.numel());
  for (std::size_t i = 0; i < val.numel(); ++i) out.v[i] = static_cast<double>(val.data[i]);
  return out;
}

template <typename Scalar>
double FlowModel<Scalar>::evaluate(const std::vector<double>& zt, double t,
                                   const ContextEmbedding& context,
                                   std::vector<double>& out_velocity) const {
  const int T = config_.horizon;
  const int C = config_.joint_channels();
  require(static_cast<int>(zt.size()) == T * C, "evaluate: zt size != T * joint_channels");
  require(static_cast<int>(context.v.size()) == config_.context_dim,
          "evaluate: context dimension mismatch");
  ad::Tape<Scalar> tape(false);
  Tensor<Scalar> z({1, T, C});
  for (std::size_t i = 0; i < zt.size(); ++i) z.data[i] = static_cast<Scalar>(zt[i]);
  Tensor<Scalar> c({1, config_.context_dim});
  for (std::size_t i = 0; i < context.v.size(); ++i) c.data[i] = static_cast<Scalar>(context.v[i]);
  const Output out = velocity_and_variance(tape, tape.input(std::move(z)), {t},
                                           tape.input(std::move(c)));
  const auto& vv = tape.value(out.velocity);
  out_velocity.resize(vv.numel());
  for (std::size_t i = 0; i < vv.numel(); ++i) out_velocity[i] = static_cast<double>(vv.data[i]);
  return static_cast<double>(tape.value(out.sigma).data[0]);
}

template class FlowModel<float>;
template class FlowModel<double>;

}  // namespace flowplan::nets
