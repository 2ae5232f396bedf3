// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/io/json_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace flowplan::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

const json& need(const json& j, const char* key, const char* where) {
  const auto it = j.find(key);
  if (it == j.end()) fail(std::string(where) + ": missing key '" + key + "'");
  return *it;
}

void check_schema(const json& j, const char* schema, int version, const char* where) {
  if (need(j, "schema", where).get<std::string>() != schema) {
    fail(std::string(where) + ": wrong schema, expected " + schema);
  }
  if (need(j, "version", where).get<int>() != version) {
    fail(std::string(where) + ": unsupported version");
  }
}

json trajectory_to_json(const Trajectory& t) {
  json states = json::array();
  for (const AgentState& s : t.states) states.push_back({s.x, s.y, s.vx, s.vy});
  return {{"dt", t.dt}, {"states", std::move(states)}};
}

Trajectory trajectory_from_json(const json& j, const char* where) {
  Trajectory t;
  t.dt = need(j, "dt", where).get<double>();
  for (const json& row : need(j, "states", where)) {
    if (!row.is_array() || row.size() != 4) fail(std::string(where) + ": state must be [x,y,vx,vy]");
    t.states.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                        row[3].get<double>()});
  }
  return t;
}

json horizon_to_json(const HorizonConfig& h) {
  return {{"dt", h.dt},
          {"past_steps", h.past_steps},
          {"future_steps", h.future_steps},
          {"max_neighbors", h.max_neighbors},
          {"neighbor_radius", h.neighbor_radius},
          {"collision_radius", h.collision_radius}};
}

HorizonConfig horizon_from_json(const json& j) {
  HorizonConfig h;
  h.dt = need(j, "dt", "horizon").get<double>();
  h.past_steps = need(j, "past_steps", "horizon").get<int>();
  h.future_steps = need(j, "future_steps", "horizon").get<int>();
  h.max_neighbors = need(j, "max_neighbors", "horizon").get<int>();
  h.neighbor_radius = need(j, "neighbor_radius", "horizon").get<double>();
  h.collision_radius = need(j, "collision_radius", "horizon").get<double>();
  return h;
}

json model_config_to_json(const nets::ModelConfig& m) {
  return {{"history", m.history},
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
          {"sigma_floor", m.sigma_floor}};
}

nets::ModelConfig model_config_from_json(const json& j) {
  nets::ModelConfig m;
  const char* w = "model";
  m.history = need(j, "history", w).get<int>();
  m.horizon = need(j, "horizon", w).get<int>();
  m.max_neighbors = need(j, "max_neighbors", w).get<int>();
  m.map_polylines = need(j, "map_polylines", w).get<int>();
  m.map_points = need(j, "map_points", w).get<int>();
  m.map_attrs = need(j, "map_attrs", w).get<int>();
  m.point_hidden = need(j, "point_hidden", w).get<int>();
  m.token_dim = need(j, "token_dim", w).get<int>();
  m.attn_heads = need(j, "attn_heads", w).get<int>();
  m.context_dim = need(j, "context_dim", w).get<int>();
  m.time_embed_dim = need(j, "time_embed_dim", w).get<int>();
  m.cond_dim = need(j, "cond_dim", w).get<int>();
  m.unet_base = need(j, "unet_base", w).get<int>();
  const json& mults = need(j, "unet_mults", w);
  if (!mults.is_array() || mults.size() != 3) fail("model: unet_mults must have 3 entries");
  for (int i = 0; i < 3; ++i) m.unet_mults[static_cast<std::size_t>(i)] = mults[static_cast<std::size_t>(i)].get<int>();
  m.var_layers = need(j, "var_layers", w).get<int>();
  m.var_hidden = need(j, "var_hidden", w).get<int>();
  m.sigma_floor = need(j, "sigma_floor", w).get<double>();
  return m;
}

json train_config_to_json(const train::TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"lr", t.lr},
          {"total_steps", t.total_steps},
          {"beta1_loss", t.beta1_loss},
          {"beta2_loss", t.beta2_loss},
          {"goal_dropout", t.goal_dropout},
          {"seed", t.seed},
          {"eval_interval", t.eval_interval},
          {"threads", t.threads},
          {"fit_stats", t.fit_stats}};
}

train::TrainConfig train_config_from_json(const json& j) {
  train::TrainConfig t;
  const char* w = "train";
  t.batch_size = need(j, "batch_size", w).get<int>();
  t.lr = need(j, "lr", w).get<double>();
  t.total_steps = need(j, "total_steps", w).get<int>();
  t.beta1_loss = need(j, "beta1_loss", w).get<double>();
  t.beta2_loss = need(j, "beta2_loss", w).get<double>();
  t.goal_dropout = need(j, "goal_dropout", w).get<double>();
  t.seed = need(j, "seed", w).get<std::uint64_t>();
  t.eval_interval = need(j, "eval_interval", w).get<int>();
  t.threads = need(j, "threads", w).get<int>();
  t.fit_stats = need(j, "fit_stats", w).get<bool>();
  return t;
}

json stats_to_json(const NormalizationStats& s) {
  return {{"mean", {s.mean[0], s.mean[1], s.mean[2], s.mean[3]}},
          {"std", {s.std[0], s.std[1], s.std[2], s.std[3]}}};
}

NormalizationStats stats_from_json(const json& j) {
  NormalizationStats s;
  const json& mean = need(j, "mean", "stats");
  const json& std_ = need(j, "std", "stats");
  if (!mean.is_array() || mean.size() != 4 || !std_.is_array() || std_.size() != 4) {
    fail("stats: mean/std must have 4 entries");
  }
  for (int i = 0; i < 4; ++i) {
    s.mean[i] = mean[static_cast<std::size_t>(i)].get<double>();
    s.std[i] = std_[static_cast<std::size_t>(i)].get<double>();
  }
  return s;
}

json tensor_to_json(const ad::Tensor<float>& t) {
  return {{"shape", t.shape}, {"data", floats_to_base64(t.data)}};
}

ad::Tensor<float> tensor_from_json(const json& j) {
  ad::Tensor<float> t(need(j, "shape", "tensor").get<std::vector<int>>());
  t.data = base64_to_floats(need(j, "data", "tensor").get<std::string>());
  if (t.data.size() != t.numel()) fail("tensor: data length does not match shape");
  return t;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) fail("read failed for " + path);
  return ss.str();
}

void write_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.good()) fail("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail("rename failed for " + path + ": " + ec.message());
}

std::string scene_to_json(const SceneSample& s) {
  json histories = json::array(), futures = json::array();
  for (const Trajectory& t : s.neighbor_histories) histories.push_back(trajectory_to_json(t));
  for (const Trajectory& t : s.neighbor_futures) futures.push_back(trajectory_to_json(t));
  json valid = json::array();
  for (std::uint8_t v : s.neighbor_valid) valid.push_back(static_cast<int>(v));
  const json j = {{"scene_id", s.scene_id},
                  {"ego_history", trajectory_to_json(s.ego_history)},
                  {"neighbor_histories", std::move(histories)},
                  {"neighbor_futures", std::move(futures)},
                  {"neighbor_valid", std::move(valid)},
                  {"map",
                   {{"num_polylines", s.map.num_polylines},
                    {"points_per", s.map.points_per},
                    {"attr_dim", s.map.attr_dim},
                    {"data", s.map.data}}},
                  {"goal", {s.goal.x, s.goal.y, s.goal.heading}},
                  {"ego_future", trajectory_to_json(s.ego_future)}};
  return j.dump();
}

SceneSample scene_from_json(const std::string& line) {
  const json j = json::parse(line);
  SceneSample s;
  const char* w = "scene";
  s.scene_id = need(j, "scene_id", w).get<std::string>();
  s.ego_history = trajectory_from_json(need(j, "ego_history", w), w);
  for (const json& t : need(j, "neighbor_histories", w)) {
    s.neighbor_histories.push_back(trajectory_from_json(t, w));
  }
  for (const json& t : need(j, "neighbor_futures", w)) {
    s.neighbor_futures.push_back(trajectory_from_json(t, w));
  }
  for (const json& v : need(j, "neighbor_valid", w)) {
    s.neighbor_valid.push_back(static_cast<std::uint8_t>(v.get<int>()));
  }
  const json& m = need(j, "map", w);
  s.map.num_polylines = need(m, "num_polylines", w).get<int>();
  s.map.points_per = need(m, "points_per", w).get<int>();
  s.map.attr_dim = need(m, "attr_dim", w).get<int>();
  s.map.data = need(m, "data", w).get<std::vector<double>>();
  const json& g = need(j, "goal", w);
  if (!g.is_array() || g.size() != 3) fail("scene: goal must be [x,y,heading]");
  s.goal = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
  s.ego_future = trajectory_from_json(need(j, "ego_future", w), w);
  return s;
}

std::string scenes_to_jsonl(const std::vector<SceneSample>& scenes,
                            const HorizonConfig& horizon) {
  json header = {{"schema", "flowplan.scenes"}, {"version", 1}, {"horizon", horizon_to_json(horizon)}};
  std::string out = header.dump();
  out.push_back('\n');
  for (const SceneSample& s : scenes) {
    out += scene_to_json(s);
    out.push_back('\n');
  }
  return out;
}

SceneFile scenes_from_jsonl(const std::string& text) {
  SceneFile file;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail("scenes: empty input");
  const json header = json::parse(line);
  check_schema(header, "flowplan.scenes", 1, "scenes");
  file.horizon = horizon_from_json(need(header, "horizon", "scenes"));
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      file.scenes.push_back(scene_from_json(line));
    } catch (const std::exception& e) {
      fail("scenes line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return file;
}

void write_scenes(const std::string& path, const std::vector<SceneSample>& scenes,
                  const HorizonConfig& horizon) {
  write_atomic(path, scenes_to_jsonl(scenes, horizon));
}

SceneFile read_scenes(const std::string& path) {
  try {
    return scenes_from_jsonl(read_file(path));
  } catch (const std::exception& e) {
    fail(path + ": " + e.what());
  }
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json params = json::array();
  if (ckpt.param_names.size() != ckpt.params.size()) fail("checkpoint: name/param count mismatch");
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    json p = tensor_to_json(ckpt.params[i]);
    p["name"] = ckpt.param_names[i];
    params.push_back(std::move(p));
  }
  json curve = json::array();
  for (const train::CurveRow& r : ckpt.curve) {
    curve.push_back({r.step, r.flow_loss, r.velocity_mse, r.mean_log_sigma,
                     std::isnan(r.val_loss) ? json() : json(r.val_loss)});
  }
  json j = {{"schema", "flowplan.checkpoint"},
            {"version", 1},
            {"model", model_config_to_json(ckpt.model_config)},
            {"stats", stats_to_json(ckpt.stats)},
            {"train", train_config_to_json(ckpt.train_config)},
            {"step", ckpt.step},
            {"best_val_loss", std::isnan(ckpt.best_val_loss) ? json() : json(ckpt.best_val_loss)},
            {"params", std::move(params)},
            {"curve", std::move(curve)}};
  if (!ckpt.adam_m.empty()) {
    json m = json::array(), v = json::array();
    for (const auto& t : ckpt.adam_m) m.push_back(tensor_to_json(t));
    for (const auto& t : ckpt.adam_v) v.push_back(tensor_to_json(t));
    j["adam"] = {{"step", ckpt.adam_step}, {"m", std::move(m)}, {"v", std::move(v)}};
  }
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  check_schema(j, "flowplan.checkpoint", 1, "checkpoint");
  Checkpoint c;
  c.model_config = model_config_from_json(need(j, "model", "checkpoint"));
  c.stats = stats_from_json(need(j, "stats", "checkpoint"));
  c.train_config = train_config_from_json(need(j, "train", "checkpoint"));
  c.step = need(j, "step", "checkpoint").get<int>();
  const json& best = need(j, "best_val_loss", "checkpoint");
  c.best_val_loss = best.is_null() ? std::numeric_limits<double>::quiet_NaN() : best.get<double>();
  for (const json& p : need(j, "params", "checkpoint")) {
    c.param_names.push_back(need(p, "name", "checkpoint").get<std::string>());
    c.params.push_back(tensor_from_json(p));
  }
  for (const json& r : need(j, "curve", "checkpoint")) {
    if (!r.is_array() || r.size() != 5) fail("checkpoint: curve row must have 5 entries");
    train::CurveRow row;
    row.step = r[0].get<int>();
    row.flow_loss = r[1].get<double>();
    row.velocity_mse = r[2].get<double>();
    row.mean_log_sigma = r[3].get<double>();
    row.val_loss = r[4].is_null() ? std::numeric_limits<double>::quiet_NaN() : r[4].get<double>();
    c.curve.push_back(row);
  }
  if (j.contains("adam")) {
    const json& a = j["adam"];
    c.adam_step = need(a, "step", "checkpoint").get<std::int64_t>();
    for (const json& t : need(a, "m", "checkpoint")) c.adam_m.push_back(tensor_from_json(t));
    for (const json& t : need(a, "v", "checkpoint")) c.adam_v.push_back(tensor_from_json(t));
    if (c.adam_m.size() != c.params.size() || c.adam_v.size() != c.params.size()) {
      fail("checkpoint: optimizer state does not match parameters");
    }
  }
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_atomic(path, checkpoint_to_json(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return checkpoint_from_json(read_file(path));
  } catch (const std::exception& e) {
    fail(path + ": " + e.what());
  }
}

Checkpoint snapshot(const nets::FlowModel<float>& model, const train::TrainConfig& tc) {
  Checkpoint c;
  c.model_config = model.config();
  c.stats = model.stats();
  c.train_config = tc;
  const auto& ps = model.params();
  for (int id = 0; id < ps.count(); ++id) {
    c.param_names.push_back(ps.name(id));
    c.params.push_back(ps.value(id));
  }
  return c;
}

nets::FlowModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  nets::FlowModel<float> model(ckpt.model_config, 0);
  auto& ps = model.params();
  if (static_cast<std::size_t>(ps.count()) != ckpt.params.size()) {
    throw std::invalid_argument("checkpoint: parameter count does not match the architecture");
  }
  for (int id = 0; id < ps.count(); ++id) {
    const auto i = static_cast<std::size_t>(id);
    if (ps.name(id) != ckpt.param_names[i]) {
      throw std::invalid_argument("checkpoint: unexpected parameter " + ckpt.param_names[i]);
    }
    if (ps.value(id).shape != ckpt.params[i].shape) {
      throw std::invalid_argument("checkpoint: shape mismatch for " + ckpt.param_names[i]);
    }
    ps.value(id).data = ckpt.params[i].data;
  }
  model.set_stats(ckpt.stats);
  return model;
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  static const char* abc = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= size; i += 3) {
    const unsigned n = (unsigned(data[i]) << 16) | (unsigned(data[i + 1]) << 8) | data[i + 2];
    out.push_back(abc[(n >> 18) & 63]);
    out.push_back(abc[(n >> 12) & 63]);
    out.push_back(abc[(n >> 6) & 63]);
    out.push_back(abc[n & 63]);
  }
  if (i + 1 == size) {
    const unsigned n = unsigned(data[i]) << 16;
    out.push_back(abc[(n >> 18) & 63]);
    out.push_back(abc[(n >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (i + 2 == size) {
    const unsigned n = (unsigned(data[i]) << 16) | (unsigned(data[i + 1]) << 8);
    out.push_back(abc[(n >> 18) & 63]);
    out.push_back(abc[(n >> 12) & 63]);
    out.push_back(abc[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) fail("base64: length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) fail("base64: misplaced padding");
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) fail("base64: data after padding");
        vals[k] = value_of(c);
        if (vals[k] < 0) fail("base64: invalid character");
      }
    }
    const unsigned n = (unsigned(vals[0]) << 18) | (unsigned(vals[1]) << 12) |
                       (unsigned(vals[2]) << 6) | unsigned(vals[3]);
    out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

std::string floats_to_base64(const std::vector<float>& values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (float f : values) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<float> base64_to_floats(const std::string& text) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 4 != 0) fail("base64: byte count is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                            (std::uint32_t(bytes[4 * i + 2]) << 16) |
                            (std::uint32_t(bytes[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

}  // namespace flowplan::io
