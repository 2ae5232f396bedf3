// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/scenegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flowplan::scenegen {

namespace {
constexpr double kLaneWidth = 3.5;        // [m]
constexpr double kEdgeOffset = 5.25;      // [m] road edge lateral offset
constexpr double kPointSpacing = 2.0;     // [m] map polyline sampling
constexpr int kMapSlots = 12;             // fixed polyline budget per scene
constexpr int kPointsPerPolyline = 20;
constexpr int kAttrDim = 8;
}  // namespace

const char* kind_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStraightCruise: return "straight-cruise";
    case ScenarioKind::kLaneChangeLeft: return "lane-change-left";
    case ScenarioKind::kLaneChangeRight: return "lane-change-right";
    case ScenarioKind::kRightTurn: return "right-turn";
    case ScenarioKind::kLeftTurn: return "left-turn";
    case ScenarioKind::kStopAndGo: return "stop-and-go";
    case ScenarioKind::kTwoGoalFork: return "two-goal-fork";
  }
  return "unknown";
}

ScenarioKind kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumScenarioKinds; ++i) {
    const auto k = static_cast<ScenarioKind>(i);
    if (name == kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown scenario kind: " + name);
}

// ---- PiecewisePath ----

void PiecewisePath::push(double len, double curv) {
  if (len <= 0.0) throw std::invalid_argument("PiecewisePath: segment length must be positive");
  segs_.push_back({cx_, cy_, ch_, len, curv});
  if (curv == 0.0) {
    cx_ += len * std::cos(ch_);
    cy_ += len * std::sin(ch_);
  } else {
    const double h1 = ch_ + curv * len;
    cx_ += (std::sin(h1) - std::sin(ch_)) / curv;
    cy_ -= (std::cos(h1) - std::cos(ch_)) / curv;
    ch_ = h1;
  }
  total_ += len;
}

void PiecewisePath::add_straight(double length) { push(length, 0.0); }

void PiecewisePath::add_arc(double radius, double angle, bool left) {
  if (radius <= 0.0 || angle <= 0.0) {
    throw std::invalid_argument("PiecewisePath: arc radius and angle must be positive");
  }
  push(radius * angle, (left ? 1.0 : -1.0) / radius);
}

PiecewisePath::Point PiecewisePath::at(double s) const {
  if (segs_.empty()) return {s, 0.0, 0.0};
  if (s < 0.0) {
    const Seg& f = segs_.front();
    return {f.x0 + s * std::cos(f.h0), f.y0 + s * std::sin(f.h0), f.h0};
  }
  double acc = 0.0;
  for (const Seg& seg : segs_) {
    if (s <= acc + seg.len || &seg == &segs_.back()) {
      double ds = s - acc;
      if (&seg == &segs_.back() && ds > seg.len) {
        // extend straight beyond the end
        const double he = seg.curv == 0.0 ? seg.h0 : seg.h0 + seg.curv * seg.len;
        double xe, ye;
        if (seg.curv == 0.0) {
          xe = seg.x0 + seg.len * std::cos(seg.h0);
          ye = seg.y0 + seg.len * std::sin(seg.h0);
        } else {
          xe = seg.x0 + (std::sin(he) - std::sin(seg.h0)) / seg.curv;
          ye = seg.y0 - (std::cos(he) - std::cos(seg.h0)) / seg.curv;
        }
        return {xe + (ds - seg.len) * std::cos(he), ye + (ds - seg.len) * std::sin(he), he};
      }
      if (seg.curv == 0.0) {
        return {seg.x0 + ds * std::cos(seg.h0), seg.y0 + ds * std::sin(seg.h0), seg.h0};
      }
      const double h = seg.h0 + seg.curv * ds;
      return {seg.x0 + (std::sin(h) - std::sin(seg.h0)) / seg.curv,
              seg.y0 - (std::cos(h) - std::cos(seg.h0)) / seg.curv, h};
    }
    acc += seg.len;
  }
  return {0.0, 0.0, 0.0};  // unreachable
}

PiecewisePath PiecewisePath::offset(double lateral) const {
  PiecewisePath out;
  for (const Seg& seg : segs_) {
    Seg o = seg;
    // shift start along the left normal (-sin h, cos h)
    o.x0 = seg.x0 - lateral * std::sin(seg.h0);
    o.y0 = seg.y0 + lateral * std::cos(seg.h0);
    if (seg.curv != 0.0) {
      const double denom = 1.0 - lateral * seg.curv;
      if (denom <= 0.05) {
        throw std::invalid_argument("PiecewisePath::offset: offset exceeds arc radius");
      }
      o.curv = seg.curv / denom;
      o.len = seg.len * denom;  // same swept angle
    }
    out.segs_.push_back(o);
    out.total_ += o.len;
  }
  return out;
}

// ---- SpeedProfile ----

void SpeedProfile::hold(double duration, double speed) { ramp(duration, speed, speed); }

void SpeedProfile::ramp(double duration, double v0, double v1) {
  if (duration <= 0.0) throw std::invalid_argument("SpeedProfile: duration must be positive");
  if (v0 < 0.0 || v1 < 0.0) throw std::invalid_argument("SpeedProfile: speeds must be >= 0");
  const double d0 = segs_.empty() ? 0.0 : distance(total_);
  segs_.push_back({total_, duration, v0, v1, d0});
  total_ += duration;
}

double SpeedProfile::speed(double t) const {
  if (segs_.empty()) return 0.0;
  if (t <= 0.0) return segs_.front().v0;
  for (const Seg& s : segs_) {
    if (t <= s.t0 + s.dur) {
      const double f = (t - s.t0) / s.dur;
      return s.v0 + f * (s.v1 - s.v0);
    }
  }
  return segs_.back().v1;
}

double SpeedProfile::distance(double t) const {
  if (segs_.empty()) return 0.0;
  if (t <= 0.0) return segs_.front().v0 * t;
  for (const Seg& s : segs_) {
    if (t <= s.t0 + s.dur) {
      const double dt = t - s.t0;
      const double v = s.v0 + (s.v1 - s.v0) * dt / s.dur;
      return s.d0 + 0.5 * (s.v0 + v) * dt;
    }
  }
  const Seg& last = segs_.back();
  const double d_end = last.d0 + 0.5 * (last.v0 + last.v1) * last.dur;
  return d_end + last.v1 * (t - total_);
}

// ---- SmoothNoise ----

SmoothNoise::SmoothNoise(double scale, Rng& rng) {
  double weights[kComponents];
  double wsum = 0.0;
  for (int i = 0; i < kComponents; ++i) {
    weights[i] = rng.uniform(0.2, 1.0);
    wsum += weights[i];
    freq_[i] = rng.uniform(0.25, 0.6);  // [rad/s]
    phase_[i] = rng.uniform(0.0, 2.0 * M_PI);
  }
  for (int i = 0; i < kComponents; ++i) amp_[i] = scale * weights[i] / wsum;
}

double SmoothNoise::at(double t) const {
  double v = 0.0;
  for (int i = 0; i < kComponents; ++i) v += amp_[i] * std::sin(freq_[i] * t + phase_[i]);
  return v;
}

// ---- motion sampling ----

Trajectory sample_motion(const PiecewisePath& path, const SpeedProfile& profile, double start_s,
                         double t0, int count, double dt, const SmoothNoise* noise_x,
                         const SmoothNoise* noise_y) {
  if (count < 1) throw std::invalid_argument("sample_motion: count must be >= 1");
  std::vector<std::array<double, 2>> pos(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i) {
    const double t = t0 + i * dt;
    const double s = start_s + profile.distance(t) - profile.distance(t0);
    const auto pt = path.at(s);
    pos[static_cast<std::size_t>(i)] = {pt.x + (noise_x ? noise_x->at(t) : 0.0),
                                        pt.y + (noise_y ? noise_y->at(t) : 0.0)};
  }
  Trajectory traj;
  traj.dt = dt;
  traj.states.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& p = pos[static_cast<std::size_t>(i)];
    const auto& q = pos[static_cast<std::size_t>(i) + 1];
    traj.states[static_cast<std::size_t>(i)] =
        AgentState{p[0], p[1], (q[0] - p[0]) / dt, (q[1] - p[1]) / dt};
  }
  return traj;
}

namespace {

struct Scenario {
  PiecewisePath ego_path;
  SpeedProfile profile;
  bool has_other_branch{false};
  PiecewisePath other_branch;
  double crosswalk_s{-1.0};   // arclength of crossing line; <0 means none
  double noise_atten{1.0};    // per-kind jitter attenuation
};

// All scenarios start at arclength 0, profile time 0 = oldest history sample.
Scenario build_scenario(const ScenarioSpec& spec, const HorizonConfig& h, Rng& rng) {
  Scenario sc;
  const double t_cur = (h.past_steps - 1) * h.dt;
  const double horizon_t = (h.past_steps + h.future_steps + 1) * h.dt;

  switch (spec.kind) {
    case ScenarioKind::kStraightCruise: {
      const double v0 = rng.uniform(3.0, 12.0);
      sc.ego_path.add_straight(v0 * horizon_t + 60.0);
      sc.profile.hold(horizon_t, v0);
      break;
    }
    case ScenarioKind::kLaneChangeLeft:
    case ScenarioKind::kLaneChangeRight: {
      const bool left = spec.kind == ScenarioKind::kLaneChangeLeft;
      const double v0 = rng.uniform(6.0, 10.0);
      const double theta = rng.uniform(0.22, 0.30);
      const double radius = kLaneWidth / (2.0 * (1.0 - std::cos(theta)));
      const double t_start = t_cur + rng.uniform(0.5, 1.5);
      sc.profile.hold(horizon_t, v0);
      sc.ego_path.add_straight(v0 * t_start);
      sc.ego_path.add_arc(radius, theta, left);
      sc.ego_path.add_arc(radius, theta, !left);
      sc.ego_path.add_straight(v0 * horizon_t + 40.0);
      break;
    }
    case ScenarioKind::kRightTurn:
    case ScenarioKind::kLeftTurn: {
      const bool left = spec.kind == ScenarioKind::kLeftTurn;
      const double radius = rng.uniform(8.0, 14.0);
      const double v_turn = std::clamp(rng.uniform(0.32, 0.48) * radius, 2.0, 6.7);
      const double t_arc = t_cur + rng.uniform(0.8, 1.6);
      const double ramp_window = t_arc - 0.1;
      const double v0 = std::min(rng.uniform(4.0, 8.0), v_turn + 2.0 * ramp_window);
      const double arc_len = radius * M_PI / 2.0;
      const double arc_dur = arc_len / v_turn;
      sc.profile.hold(0.1, v0);
      sc.profile.ramp(ramp_window, v0, v_turn);
      sc.profile.hold(arc_dur, v_turn);
      sc.profile.ramp(1.5, v_turn, v_turn + rng.uniform(1.0, 2.5));
      const double approach = sc.profile.distance(t_arc);
      sc.ego_path.add_straight(approach);
      sc.ego_path.add_arc(radius, M_PI / 2.0, left);
      sc.ego_path.add_straight(120.0);
      sc.crosswalk_s = approach - 1.0;
      break;
    }
    case ScenarioKind::kStopAndGo: {
      // braking is kept gentle: near standstill the floored-speed angular
      // velocity couples brake acceleration with lateral jitter
      const double v0 = rng.uniform(3.5, 5.0);
      const double a_dec = rng.uniform(1.0, 1.4);
      const double a_acc = rng.uniform(1.0, 1.4);
      const double v1 = rng.uniform(2.0, 4.0);
      const double t_dec = t_cur + rng.uniform(0.2, 0.6);
      const double t_hold = rng.uniform(0.8, 1.5);
      sc.profile.hold(t_dec, v0);
      sc.profile.ramp(v0 / a_dec, v0, 0.0);
      sc.profile.hold(t_hold, 0.0);
      sc.profile.ramp(v1 / a_acc, 0.0, v1);
      sc.ego_path.add_straight(v0 * horizon_t + 60.0);
      sc.noise_atten = 0.6;
      break;
    }
    case ScenarioKind::kTwoGoalFork: {
      const bool left = (spec.seed % 2) == 0;  // goal branch by seed parity
      const double v0 = rng.uniform(5.0, 7.5);
      const double theta = rng.uniform(0.35, 0.45);
      const double lateral = 4.0;  // [m] each branch shifts this far off center
      const double radius = lateral / (2.0 * (1.0 - std::cos(theta)));
      const double t_fork = t_cur + rng.uniform(1.5, 2.5);
      sc.profile.hold(horizon_t, v0);
      const double approach = v0 * t_fork;
      auto build_branch = [&](bool to_left) {
        PiecewisePath p;
        p.add_straight(approach);
        p.add_arc(radius, theta, to_left);
        p.add_arc(radius, theta, !to_left);
        p.add_straight(v0 * horizon_t + 40.0);
        return p;
      };
      sc.ego_path = build_branch(left);
      sc.other_branch = build_branch(!left);
      sc.has_other_branch = true;
      break;
    }
  }
  return sc;
}

struct NeighborSlot {
  double lateral;   // lane offset, +left
  double ds_lo, ds_hi;  // longitudinal arclength offset range at current time
};

const std::array<NeighborSlot, 6>& neighbor_slots() {
  static const std::array<NeighborSlot, 6> slots = {{
      {kLaneWidth, 1.0, 8.0},
      {-kLaneWidth, 1.0, 8.0},
      {0.0, 6.5, 8.5},
      {0.0, -8.5, -6.5},
      {kLaneWidth, -8.0, -1.0},
      {-kLaneWidth, -8.0, -1.0},
  }};
  return slots;
}

struct MapBuilder {
  std::vector<std::vector<std::array<double, 3>>> polylines;  // x, y, heading
  std::vector<PolylineTag> tags;

  bool full() const { return static_cast<int>(polylines.size()) >= kMapSlots; }

  void add_chain(const PiecewisePath& path, double s0, double s1, PolylineTag tag,
                 int max_chunks) {
    std::vector<std::array<double, 3>> pts;
    for (double s = s0; s <= s1; s += kPointSpacing) {
      const auto pt = path.at(s);
      pts.push_back({pt.x, pt.y, pt.heading});
    }
    int chunks = 0;
    for (std::size_t i = 0; i < pts.size() && chunks < max_chunks && !full();
         i += kPointsPerPolyline, ++chunks) {
      const std::size_t end = std::min(pts.size(), i + kPointsPerPolyline);
      polylines.emplace_back(pts.begin() + static_cast<long>(i),
                             pts.begin() + static_cast<long>(end));
      tags.push_back(tag);
    }
  }

  void add_cross_line(PiecewisePath::Point center, double half_width, PolylineTag tag) {
    if (full()) return;
    std::vector<std::array<double, 3>> pts;
    const double nx = -std::sin(center.heading), ny = std::cos(center.heading);
    for (double d = -half_width; d <= half_width; d += kPointSpacing) {
      pts.push_back({center.x + d * nx, center.y + d * ny, center.heading + M_PI / 2.0});
    }
    polylines.push_back(std::move(pts));
    tags.push_back(tag);
  }

  PolylineMap finalize() const {
    PolylineMap map;
    map.num_polylines = kMapSlots;
    map.points_per = kPointsPerPolyline;
    map.attr_dim = kAttrDim;
    map.data.assign(static_cast<std::size_t>(kMapSlots * kPointsPerPolyline * kAttrDim), 0.0);
    for (std::size_t p = 0; p < polylines.size(); ++p) {
      const int tag = static_cast<int>(tags[p]);
      for (std::size_t i = 0; i < polylines[p].size() && i < kPointsPerPolyline; ++i) {
        map.at(static_cast<int>(p), static_cast<int>(i), 0) = polylines[p][i][0];
        map.at(static_cast<int>(p), static_cast<int>(i), 1) = polylines[p][i][1];
        map.at(static_cast<int>(p), static_cast<int>(i), 2) = polylines[p][i][2];
        map.at(static_cast<int>(p), static_cast<int>(i), 3 + tag) = 1.0;
        map.at(static_cast<int>(p), static_cast<int>(i), 7) = 1.0;
      }
    }
    return map;
  }
};

}  // namespace

SceneSample generate_scene(const ScenarioSpec& spec, const HorizonConfig& h) {
  if (spec.num_neighbors < 0 || spec.num_neighbors > h.max_neighbors) {
    throw std::invalid_argument("generate_scene: num_neighbors exceeds horizon budget");
  }
  if (spec.num_neighbors > static_cast<int>(neighbor_slots().size())) {
    throw std::invalid_argument("generate_scene: geometry cannot fit neighbors inside R_o");
  }
  if (spec.noise_scale < 0.0) {
    throw std::invalid_argument("generate_scene: noise_scale must be >= 0");
  }

  const int K = h.past_steps, T = h.future_steps;
  const double t_cur = (K - 1) * h.dt;
  Rng rng_geom(spec.seed, 0x11);
  Rng rng_noise(spec.seed, 0x22);
  Rng rng_nbr(spec.seed, 0x33);
  Rng rng_pose(spec.seed, 0x44);

  Scenario sc = build_scenario(spec, h, rng_geom);

  SceneSample sample;
  sample.scene_id = std::string(kind_name(spec.kind)) + "-" + std::to_string(spec.seed);

  // ego motion
  SmoothNoise ego_nx(spec.noise_scale * sc.noise_atten, rng_noise);
  SmoothNoise ego_ny(spec.noise_scale * sc.noise_atten, rng_noise);
  Trajectory full = sample_motion(sc.ego_path, sc.profile, 0.0, 0.0, K + T, h.dt, &ego_nx, &ego_ny);
  sample.ego_history.dt = h.dt;
  sample.ego_future.dt = h.dt;
  sample.ego_history.states.assign(full.states.begin(), full.states.begin() + K);
  sample.ego_future.states.assign(full.states.begin() + K, full.states.end());

  // goal is the exact final ground-truth pose
  const AgentState& last = sample.ego_future.states.back();
  const double last_speed = std::hypot(last.vx, last.vy);
  sample.goal.x = last.x;
  sample.goal.y = last.y;
  sample.goal.heading = last_speed >= 0.1
                            ? std::atan2(last.vy, last.vx)
                            : sc.ego_path.at(sc.profile.distance((K + T - 1) * h.dt)).heading;

  // neighbors
  const auto N = static_cast<std::size_t>(h.max_neighbors);
  sample.neighbor_valid.assign(N, 0);
  sample.neighbor_histories.assign(N, Trajectory{{}, h.dt});
  sample.neighbor_futures.assign(N, Trajectory{{}, h.dt});
  std::vector<int> order(neighbor_slots().size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng_nbr.uniform_int(0, i))]);
  }
  const double s_cur = sc.profile.distance(t_cur);
  for (int n = 0; n < spec.num_neighbors; ++n) {
    const NeighborSlot& slot = neighbor_slots()[static_cast<std::size_t>(order[static_cast<std::size_t>(n)])];
    double ds = rng_nbr.uniform(slot.ds_lo, slot.ds_hi);
    SmoothNoise nx(spec.noise_scale * sc.noise_atten, rng_nbr);
    SmoothNoise ny(spec.noise_scale * sc.noise_atten, rng_nbr);
    Trajectory nb;
    if (slot.lateral == 0.0) {
      // same lane: mirror the ego profile at a fixed arclength gap
      nb = sample_motion(sc.ego_path, sc.profile, ds, 0.0, K + T, h.dt, &nx, &ny);
    } else {
      PiecewisePath lane = sc.ego_path.offset(slot.lateral);
      const double v_cur = std::max(1.0, sc.profile.speed(t_cur));
      SpeedProfile cruise;
      cruise.hold(1.0, std::clamp(v_cur * rng_nbr.uniform(0.75, 1.1), 1.0, 12.0));
      const AgentState& ego_cur = full.states[static_cast<std::size_t>(K - 1)];
      // arclength reparameterization on arcs can stretch the chord; shrink the
      // gap until the neighbor starts inside the sensing radius
      for (int iter = 0; iter < 8; ++iter) {
        nb = sample_motion(lane, cruise, s_cur + ds - cruise.speed(0.0) * t_cur, 0.0, K + T, h.dt,
                           &nx, &ny);
        const AgentState& nc = nb.states[static_cast<std::size_t>(K - 1)];
        if (std::hypot(nc.x - ego_cur.x, nc.y - ego_cur.y) <= h.neighbor_radius - 0.5) break;
        ds *= 0.7;
      }
    }
    sample.neighbor_valid[static_cast<std::size_t>(n)] = 1;
    sample.neighbor_histories[static_cast<std::size_t>(n)].states.assign(
        nb.states.begin(), nb.states.begin() + K);
    sample.neighbor_futures[static_cast<std::size_t>(n)].states.assign(nb.states.begin() + K,
                                                                       nb.states.end());
  }
  // invalid slots stay zero-filled at the expected lengths
  for (std::size_t n = 0; n < N; ++n) {
    if (sample.neighbor_valid[n]) continue;
    sample.neighbor_histories[n].states.assign(static_cast<std::size_t>(K), AgentState{});
    sample.neighbor_futures[n].states.assign(static_cast<std::size_t>(T), AgentState{});
  }

  // map: lane centers, road edges, optional crossing and fork branch
  MapBuilder mb;
  const double s_end = sc.profile.distance((K + T + 1) * h.dt);
  const double lo = s_cur - 10.0;
  mb.add_chain(sc.ego_path, lo, s_end + 12.0, PolylineTag::kLaneCenter, 3);
  if (sc.has_other_branch) {
    mb.add_chain(sc.other_branch, s_cur + 2.0, s_end + 12.0, PolylineTag::kLaneCenter, 2);
    mb.add_chain(sc.ego_path.offset(kLaneWidth), lo, lo + 38.0, PolylineTag::kLaneCenter, 1);
    mb.add_chain(sc.ego_path.offset(-kLaneWidth), lo, lo + 38.0, PolylineTag::kLaneCenter, 1);
  } else {
    mb.add_chain(sc.ego_path.offset(kLaneWidth), lo, lo + 76.0, PolylineTag::kLaneCenter, 2);
    mb.add_chain(sc.ego_path.offset(-kLaneWidth), lo, lo + 76.0, PolylineTag::kLaneCenter, 2);
  }
  mb.add_chain(sc.ego_path.offset(kEdgeOffset), lo, lo + 76.0, PolylineTag::kRoadEdge, 2);
  mb.add_chain(sc.ego_path.offset(-kEdgeOffset), lo, lo + 76.0, PolylineTag::kRoadEdge, 2);
  if (sc.crosswalk_s >= 0.0) {
    mb.add_cross_line(sc.ego_path.at(sc.crosswalk_s), 7.0, PolylineTag::kCrosswalk);
  }
  sample.map = mb.finalize();

  // random world pose exercises frame handling downstream
  const auto pose = RigidTransform2::from(rng_pose.uniform(-M_PI, M_PI),
                                          rng_pose.uniform(-60.0, 60.0),
                                          rng_pose.uniform(-60.0, 60.0));
  sample = apply_rigid(sample, pose);
  validate(sample, h);
  return sample;
}

std::vector<SceneSample> generate_dataset(const std::vector<ScenarioSpec>& specs,
                                          const HorizonConfig& horizon) {
  std::vector<SceneSample> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(generate_scene(s, horizon));
  return out;
}

std::pair<GoalPose, GoalPose> fork_goals(const ScenarioSpec& spec, const HorizonConfig& h) {
  if (spec.kind != ScenarioKind::kTwoGoalFork) {
    throw std::invalid_argument("fork_goals: spec is not a two-goal-fork scenario");
  }
  // replay the draws generate_scene makes from the geometry, noise, and pose
  // streams; the neighbor stream is independent and can be skipped
  Rng rng_geom(spec.seed, 0x11);
  Rng rng_noise(spec.seed, 0x22);
  Rng rng_pose(spec.seed, 0x44);
  Scenario sc = build_scenario(spec, h, rng_geom);
  SmoothNoise ego_nx(spec.noise_scale * sc.noise_atten, rng_noise);
  SmoothNoise ego_ny(spec.noise_scale * sc.noise_atten, rng_noise);
  const double t_last = (h.past_steps + h.future_steps - 1) * h.dt;
  const double s_last = sc.profile.distance(t_last);
  const auto pose = RigidTransform2::from(rng_pose.uniform(-M_PI, M_PI),
                                          rng_pose.uniform(-60.0, 60.0),
                                          rng_pose.uniform(-60.0, 60.0));
  const double pose_angle = std::atan2(pose.sin_a, pose.cos_a);
  auto endpoint = [&](const PiecewisePath& path) {
    const auto pt = path.at(s_last);
    double wx = pt.x + ego_nx.at(t_last), wy = pt.y + ego_ny.at(t_last);
    pose.apply_point(wx, wy);
    const double h = pt.heading + pose_angle;
    return GoalPose{wx, wy, std::atan2(std::sin(h), std::cos(h))};
  };
  return {endpoint(sc.ego_path), endpoint(sc.other_branch)};
}

}  // namespace flowplan::scenegen
