// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/flowtrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>

namespace flowplan::train {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr int kShards = 4;  // fixed shard count keeps gradient order stable

}  // namespace

void TrainConfig::check() const {
  require(batch_size >= kShards && batch_size % kShards == 0,
          "TrainConfig: batch_size must be a positive multiple of 4");
  require(lr > 0.0, "TrainConfig: lr must be positive");
  require(total_steps >= 1, "TrainConfig: total_steps must be >= 1");
  require(beta1_loss >= 0.0 && beta2_loss >= 0.0, "TrainConfig: loss weights must be >= 0");
  require(goal_dropout >= 0.0 && goal_dropout <= 1.0,
          "TrainConfig: goal_dropout must lie in [0, 1]");
  require(eval_interval >= 1, "TrainConfig: eval_interval must be >= 1");
  require(threads >= 1, "TrainConfig: threads must be >= 1");
}

std::vector<double> interpolate(const std::vector<double>& z0, const std::vector<double>& z1,
                                double t) {
  require(z0.size() == z1.size(), "interpolate: size mismatch");
  std::vector<double> zt(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) zt[i] = (1.0 - t) * z0[i] + t * z1[i];
  return zt;
}

FlowSample draw_flow_sample(const SceneSample& sample, const NormalizationStats& stats,
                            const nets::ModelConfig& config, double goal_dropout, Rng& rng) {
  FlowSample fs;
  // Draw order is a contract: t, goal-dropout uniform, then T*C normals.
  fs.t = rng.uniform();
  fs.with_goal = rng.uniform() >= goal_dropout;
  fs.z1 = nets::joint_future(sample, stats, config);
  fs.z0.resize(fs.z1.size());
  for (auto& v : fs.z0) v = rng.normal();
  fs.zt = interpolate(fs.z0, fs.z1, fs.t);
  fs.target.resize(fs.z1.size());
  for (std::size_t i = 0; i < fs.z1.size(); ++i) fs.target[i] = fs.z1[i] - fs.z0[i];
  return fs;
}

template <typename Scalar>
LossGraph<Scalar> loss_from_heads(ad::Tape<Scalar>& tape, ad::Var velocity, ad::Var sigma,
                                  ad::Var target, ad::Var mask, ad::Var inv_count) {
  const auto& vv = tape.value(velocity);
  require(vv.ndim() == 3, "loss_from_heads: velocity must be (B, T, C)");
  const int B = vv.dim(0);
  const int tc = vv.dim(1) * vv.dim(2);

  ad::Var diff = ad::sub(tape, velocity, target);
  ad::Var sq = ad::square(tape, ad::mul(tape, diff, mask));
  ad::Tensor<Scalar> ones({tc, 1});
  for (auto& v : ones.data) v = Scalar(1);
  ad::Var per = ad::matmul(tape, ad::reshape(tape, sq, {B, tc}), tape.input(std::move(ones)));
  ad::Var mse = ad::mul(tape, per, inv_count);  // (B, 1) valid-element mean

  LossGraph<Scalar> g;
  g.velocity_term = ad::mean(tape, ad::div(tape, mse, ad::scale(tape, sigma, Scalar(2))));
  g.log_term = ad::mean(tape, ad::log(tape, sigma));
  g.loss = ad::add(tape, g.velocity_term, g.log_term);
  return g;
}

template <typename Scalar>
LossGraph<Scalar> flow_loss_graph(ad::Tape<Scalar>& tape, const nets::FlowModel<Scalar>& model,
                                  const SceneSample* const* batch, int count,
                                  const std::vector<FlowSample>& draws) {
  require(count >= 1, "flow_loss: empty batch");
  require(static_cast<int>(draws.size()) == count, "flow_loss: one draw per sample required");
  const auto& cfg = model.config();
  const int T = cfg.horizon;
  const int C = cfg.joint_channels();

  ad::Tensor<Scalar> zt({count, T, C}), target({count, T, C}), mask({count, T, C});
  ad::Tensor<Scalar> inv_count({count, 1});
  std::vector<double> ts(static_cast<std::size_t>(count));
  std::vector<std::uint8_t> goal_flags(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) {
    const FlowSample& fs = draws[static_cast<std::size_t>(b)];
    require(static_cast<int>(fs.zt.size()) == T * C, "flow_loss: draw tensor size mismatch");
    ts[static_cast<std::size_t>(b)] = fs.t;
    goal_flags[static_cast<std::size_t>(b)] = fs.with_goal ? 1 : 0;
    const std::vector<double> chmask = nets::joint_mask(*batch[b], cfg);
    double valid = 0.0;
    for (double m : chmask) valid += m;
    inv_count.data[static_cast<std::size_t>(b)] = static_cast<Scalar>(1.0 / (valid * T));
    for (int k = 0; k < T; ++k) {
      for (int c = 0; c < C; ++c) {
        const std::size_t src = static_cast<std::size_t>(k * C + c);
        const std::size_t dst = (static_cast<std::size_t>(b) * T + k) * C + c;
        zt.data[dst] = static_cast<Scalar>(fs.zt[src]);
        target.data[dst] = static_cast<Scalar>(fs.target[src]);
        mask.data[dst] = static_cast<Scalar>(chmask[static_cast<std::size_t>(c)]);
      }
    }
  }

  const ad::Var ctx = model.encode(tape, batch, count, goal_flags.data());
  const auto out = model.velocity_and_variance(tape, tape.input(std::move(zt)), ts, ctx);
  return loss_from_heads(tape, out.velocity, out.sigma, tape.input(std::move(target)),
                         tape.input(std::move(mask)), tape.input(std::move(inv_count)));
}

template <typename Scalar>
LossReport flow_loss(const nets::FlowModel<Scalar>& model, const SceneSample* const* batch,
                     int count, Rng& rng, double goal_dropout) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<FlowSample> draws;
  draws.reserve(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) {
    draws.push_back(
        draw_flow_sample(*batch[b], model.stats(), model.config(), goal_dropout, rng));
  }
  ad::Tape<Scalar> tape(false);
  const LossGraph<Scalar> g = flow_loss_graph(tape, model, batch, count, draws);
  LossReport report;
  report.flow_loss = static_cast<double>(tape.value(g.loss).data[0]);
  report.velocity_mse = static_cast<double>(tape.value(g.velocity_term).data[0]);
  report.mean_log_sigma = static_cast<double>(tape.value(g.log_term).data[0]);
  report.wall_time = seconds_since(t0);
  return report;
}

template <typename Scalar>
TrainResult<Scalar> train(nets::FlowModel<Scalar>& model,
                          const std::vector<SceneSample>& train_split,
                          const std::vector<SceneSample>& val_split, const TrainConfig& config,
                          ResumeState<Scalar>* resume) {
  config.check();
  require(!train_split.empty() && !val_split.empty(), "train: empty split");
  const int start_step = resume != nullptr ? resume->start_step : 0;
  require(start_step >= 0 && start_step < config.total_steps,
          "train: start_step must lie in [0, total_steps)");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<SceneSample> tr, va;
  tr.reserve(train_split.size());
  va.reserve(val_split.size());
  for (const auto& s : train_split) tr.push_back(to_ego_frame(s).sample);
  for (const auto& s : val_split) va.push_back(to_ego_frame(s).sample);
  if (config.fit_stats) model.set_stats(fit_normalization(tr));

  const auto& mcfg = model.config();
  auto& params = model.params();

  // Validation noise is drawn once so val losses are comparable across evals.
  Rng vrng(config.seed, 0x76616cull);
  std::vector<FlowSample> val_draws;
  val_draws.reserve(va.size());
  for (const auto& s : va) {
    val_draws.push_back(draw_flow_sample(s, model.stats(), mcfg, config.goal_dropout, vrng));
  }

  auto eval_val = [&]() {
    double acc = 0.0;
    const int n = static_cast<int>(va.size());
    for (int start = 0; start < n; start += config.batch_size) {
      const int chunk = std::min(config.batch_size, n - start);
      std::vector<const SceneSample*> ptrs(static_cast<std::size_t>(chunk));
      for (int i = 0; i < chunk; ++i) ptrs[static_cast<std::size_t>(i)] = &va[static_cast<std::size_t>(start + i)];
      std::vector<FlowSample> dslice(val_draws.begin() + start, val_draws.begin() + start + chunk);
      ad::Tape<Scalar> tape(false);
      const LossGraph<Scalar> g = flow_loss_graph(tape, model, ptrs.data(), chunk, dslice);
      acc += static_cast<double>(tape.value(g.loss).data[0]) * chunk;
    }
    return acc / static_cast<double>(n);
  };

  ad::AdamState<Scalar> local_adam;
  ad::AdamState<Scalar>& adam = resume != nullptr ? resume->adam : local_adam;
  ad::AdamConfig acfg;
  acfg.lr = config.lr;

  TrainResult<Scalar> result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.best_step = 0;
  result.curve.reserve(static_cast<std::size_t>(config.total_steps - start_step));
  const int per_shard = config.batch_size / kShards;

  for (int step = start_step + 1; step <= config.total_steps; ++step) {
    Rng srng(config.seed, 0x1000000ull + static_cast<std::uint64_t>(step));
    std::vector<const SceneSample*> batch(static_cast<std::size_t>(config.batch_size));
    for (auto& p : batch) {
      p = &tr[static_cast<std::size_t>(srng.uniform_int(0, static_cast<int>(tr.size()) - 1))];
    }
    std::vector<FlowSample> draws;
    draws.reserve(batch.size());
    for (const SceneSample* s : batch) {
      draws.push_back(draw_flow_sample(*s, model.stats(), mcfg, config.goal_dropout, srng));
    }

    struct ShardOut {
      ad::GradientMap<Scalar> grads;
      double sum_velocity{0.0};
      double sum_log{0.0};
      std::string error;
    };
    std::vector<ShardOut> outs(kShards);
    auto run_shard = [&](int si) {
      try {
        const int lo = si * per_shard;
        std::vector<FlowSample> dslice(draws.begin() + lo, draws.begin() + lo + per_shard);
        ad::Tape<Scalar> tape;
        const LossGraph<Scalar> g =
            flow_loss_graph(tape, model, batch.data() + lo, per_shard, dslice);
        // Scale so that summed shard gradients equal the full-batch-mean
        // gradient times beta2.
        const ad::Var scaled = ad::scale(
            tape, g.loss,
            static_cast<Scalar>(config.beta2_loss * per_shard / config.batch_size));
        outs[static_cast<std::size_t>(si)].grads = tape.backward(scaled);
        outs[static_cast<std::size_t>(si)].sum_velocity =
            static_cast<double>(tape.value(g.velocity_term).data[0]) * per_shard;
        outs[static_cast<std::size_t>(si)].sum_log =
            static_cast<double>(tape.value(g.log_term).data[0]) * per_shard;
      } catch (const std::exception& e) {
        outs[static_cast<std::size_t>(si)].error = e.what();
      }
    };

    if (config.threads > 1) {
      std::vector<std::thread> pool;
      pool.reserve(kShards);
      for (int si = 0; si < kShards; ++si) pool.emplace_back(run_shard, si);
      for (auto& th : pool) th.join();
    } else {
      for (int si = 0; si < kShards; ++si) run_shard(si);
    }

    ad::GradientMap<Scalar> total;
    double sum_velocity = 0.0, sum_log = 0.0;
    for (int si = 0; si < kShards; ++si) {  // fixed accumulation order
      ShardOut& so = outs[static_cast<std::size_t>(si)];
      if (!so.error.empty()) {
        throw std::runtime_error("train: aborted at step " + std::to_string(step) + ": " +
                                 so.error);
      }
      ad::accumulate(total, so.grads);
      sum_velocity += so.sum_velocity;
      sum_log += so.sum_log;
    }

    CurveRow row;
    row.step = step;
    row.velocity_mse = sum_velocity / config.batch_size;
    row.mean_log_sigma = sum_log / config.batch_size;
    row.flow_loss = row.velocity_mse + row.mean_log_sigma;
    row.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(row.flow_loss) || row.flow_loss > 1e6) {
      throw std::runtime_error("train: diverged at step " + std::to_string(step) +
                               ", flow_loss=" + std::to_string(row.flow_loss));
    }

    ad::adam_step(params, total, adam, acfg);

    if (step % config.eval_interval == 0 || step == config.total_steps) {
      row.val_loss = eval_val();
      if (row.val_loss < result.best_val_loss) {
        result.best_val_loss = row.val_loss;
        result.best_step = step;
        result.best_params.clear();
        result.best_params.reserve(static_cast<std::size_t>(params.count()));
        for (int id = 0; id < params.count(); ++id) result.best_params.push_back(params.value(id));
      }
    }
    result.curve.push_back(row);
  }

  if (resume != nullptr) resume->start_step = config.total_steps;
  result.wall_time = seconds_since(t0);
  return result;
}

std::string curve_to_csv(const std::vector<CurveRow>& curve) {
  std::string out = "step,flow_loss,velocity_mse,mean_log_sigma,val_loss\n";
  char buf[160];
  for (const CurveRow& r : curve) {
    if (std::isnan(r.val_loss)) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,\n", r.step, r.flow_loss,
                    r.velocity_mse, r.mean_log_sigma);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.flow_loss,
                    r.velocity_mse, r.mean_log_sigma, r.val_loss);
    }
    out += buf;
  }
  return out;
}

template LossGraph<float> loss_from_heads<float>(ad::Tape<float>&, ad::Var, ad::Var, ad::Var,
                                                 ad::Var, ad::Var);
template LossGraph<double> loss_from_heads<double>(ad::Tape<double>&, ad::Var, ad::Var, ad::Var,
                                                   ad::Var, ad::Var);
template LossGraph<float> flow_loss_graph<float>(ad::Tape<float>&, const nets::FlowModel<float>&,
                                                 const SceneSample* const*, int,
                                                 const std::vector<FlowSample>&);
template LossGraph<double> flow_loss_graph<double>(ad::Tape<double>&,
                                                   const nets::FlowModel<double>&,
                                                   const SceneSample* const*, int,
                                                   const std::vector<FlowSample>&);
template LossReport flow_loss<float>(const nets::FlowModel<float>&, const SceneSample* const*,
                                     int, Rng&, double);
template LossReport flow_loss<double>(const nets::FlowModel<double>&, const SceneSample* const*,
                                      int, Rng&, double);
template TrainResult<float> train<float>(nets::FlowModel<float>&, const std::vector<SceneSample>&,
                                         const std::vector<SceneSample>&, const TrainConfig&,
                                         ResumeState<float>*);
template TrainResult<double> train<double>(nets::FlowModel<double>&,
                                           const std::vector<SceneSample>&,
                                           const std::vector<SceneSample>&, const TrainConfig&,
                                           ResumeState<double>*);

}  // namespace flowplan::train
