#pragma once

#include "fwspde/action.hpp"
#include "fwspde/exit.hpp"
#include "fwspde/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fwspde {

using Json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

/// Validated experiment description. `model` and `block` hold the normalized JSON
/// (every documented default written out), so emit/load round-trips exactly.
struct ExperimentConfig {
  std::string schema_version = kSchemaVersion;
  std::string command;
  Json model;
  Json block;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;

  bool operator==(const ExperimentConfig& o) const {
    return schema_version == o.schema_version && command == o.command && model == o.model && block == o.block &&
           output_dir == o.output_dir && master_seed == o.master_seed;
  }
};

const std::vector<std::string>& valid_commands();

/// Reads and validates a config file. ParseError / SchemaError / RangeError name the field path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const Json& j);
Json config_to_json(const ExperimentConfig& c);
/// Pretty JSON text with a trailing newline.
std::string emit_config(const ExperimentConfig& c);

/// Typed model assembled from a normalized model block.
struct BuiltModel {
  ModelSpec model;
  SpectralField x0;
  SimConfig sim;
};
BuiltModel build_model(const Json& model_block);

/// Control block {kind: zero | constant, value: [...]} on the model grid.
ControlPath build_control(const Json& control_block, const ModelSpec& model, const std::string& path);
/// Target block {kind: point, y} or {kind: ball, radius, norm, n_directions}.
Target build_target(const Json& target_block, const BuiltModel& m, const std::string& path);
OptimizerOptions build_optimizer(const Json& block);
ExitDomain build_domain(const Json& domain_block, const BuiltModel& m);

}  // namespace fwspde
