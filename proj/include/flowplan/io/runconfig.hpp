// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_IO_RUNCONFIG_HPP
#define FLOWPLAN_IO_RUNCONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "flowplan/core.hpp"
#include "flowplan/flowtrain.hpp"
#include "flowplan/nets/model.hpp"
#include "flowplan/qp/qprefine.hpp"
#include "flowplan/sampler.hpp"
#include "flowplan/scenegen.hpp"

namespace flowplan::io {

/// Dataset generation request ({"schema":"flowplan.dataspec","version":1}).
/// Scene kinds rotate round-robin; scene seeds are disjoint across splits.
struct DataSpec {
  int n_train{700};
  int n_val{200};
  std::vector<scenegen::ScenarioKind> kinds;  // empty selects all 7 kinds
  double noise_scale{0.1};  // [m]
  int num_neighbors{2};
  HorizonConfig horizon;

  void validate() const;  // throws std::invalid_argument
};

/// One experiment's configuration ({"schema":"flowplan.runconfig","version":1}).
/// Every block is optional in the file and defaults to the values below;
/// unknown keys anywhere are rejected.
struct RunConfig {
  HorizonConfig horizon;
  nets::ModelConfig model;  // defaults to ModelConfig::desk_default()
  train::TrainConfig train;
  sampler::AdaptiveStepConfig step;
  qp::RefineWeights weights;
  std::string data_dir;
  std::string out_dir;
  std::uint64_t seed{1};

  /// Block-level checks plus cross-consistency (model shape vs horizon).
  void validate() const;  // throws std::invalid_argument
};

/// Parsers throw std::invalid_argument with a field or byte-offset diagnostic
/// and validate() the result before returning it.
DataSpec dataspec_from_json(const std::string& text);
DataSpec load_dataspec(const std::string& path);
std::string dataspec_to_json(const DataSpec& spec);

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace flowplan::io

#endif  // FLOWPLAN_IO_RUNCONFIG_HPP
