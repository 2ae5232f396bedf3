// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_IO_JSON_IO_HPP
#define FLOWPLAN_IO_JSON_IO_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "flowplan/ad/tensor.hpp"
#include "flowplan/core.hpp"
#include "flowplan/flowtrain.hpp"
#include "flowplan/nets/model.hpp"

namespace flowplan::io {

/// Reads a whole file; throws std::runtime_error naming the path.
std::string read_file(const std::string& path);

/// Writes via a temp file in the same directory plus rename, so readers never
/// observe a partial file. Throws std::runtime_error naming the path.
void write_atomic(const std::string& path, const std::string& content);

// ---- scenes (JSON Lines) ----
//
// Line 1 is the header {"schema":"flowplan.scenes","version":1,"horizon":{..}};
// every further line is one scene. Doubles are serialized with full
// round-trip precision, so parse(serialize(s)) == s exactly.

std::string scene_to_json(const SceneSample& sample);
SceneSample scene_from_json(const std::string& line);

struct SceneFile {
  HorizonConfig horizon;
  std::vector<SceneSample> scenes;
};

std::string scenes_to_jsonl(const std::vector<SceneSample>& scenes, const HorizonConfig& horizon);
SceneFile scenes_from_jsonl(const std::string& text);

void write_scenes(const std::string& path, const std::vector<SceneSample>& scenes,
                  const HorizonConfig& horizon);
SceneFile read_scenes(const std::string& path);

// ---- checkpoints ----
//
// Single JSON document {"schema":"flowplan.checkpoint","version":1,...} with
// parameter and optimizer buffers stored as base64 little-endian float32, so
// the round trip is bit-exact for the float-trained model.

struct Checkpoint {
  nets::ModelConfig model_config;
  NormalizationStats stats;
  train::TrainConfig train_config;
  int step{0};  // completed training steps
  double best_val_loss{std::numeric_limits<double>::quiet_NaN()};
  std::vector<std::string> param_names;           // by param id
  std::vector<ad::Tensor<float>> params;          // by param id
  std::vector<ad::Tensor<float>> adam_m, adam_v;  // empty when never trained
  std::int64_t adam_step{0};
  std::vector<train::CurveRow> curve;  // training history up to `step`
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Snapshot of a model (and optionally its optimizer state) as a checkpoint.
Checkpoint snapshot(const nets::FlowModel<float>& model, const train::TrainConfig& tc);

/// Rebuilds the model a checkpoint describes. Verifies parameter names and
/// shapes against a freshly constructed architecture; throws
/// std::invalid_argument on any mismatch.
nets::FlowModel<float> model_from_checkpoint(const Checkpoint& ckpt);

// ---- base64 (RFC 4648, used by the checkpoint format) ----

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Little-endian float32 packing for tensor buffers.
std::string floats_to_base64(const std::vector<float>& values);
std::vector<float> base64_to_floats(const std::string& text);

}  // namespace flowplan::io

#endif  // FLOWPLAN_IO_JSON_IO_HPP
