#pragma once

#include "fwspde/config.hpp"

#include <string>
#include <vector>

namespace fwspde {

struct OutputFile {
  std::string name;    ///< relative to the output directory
  std::string sha256;  ///< hex digest of the bytes written
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string config_hash;  ///< sha256 of emit_config(config)
  std::string code_version;
  std::string started_at;   ///< UTC, ISO 8601; not part of any digest
  std::string finished_at;
  std::uint64_t master_seed = 0;
  std::string seed_rule;
  int threads = 1;
  std::vector<OutputFile> files;

  Json to_json() const;
};

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);

/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

/// Runs the configured command, writes its data files, then manifest.json.
/// `threads` <= 0 selects FWSPDE_THREADS (default 1). Data files never depend on `threads`.
RunManifest run(const ExperimentConfig& config, int threads = 0);

/// Formats a double for CSV: shortest round-trip text, literal "inf", "-inf", "nan".
std::string csv_number(double v);
/// RFC 4180 CSV (LF line endings). Cells are quoted only when needed.
std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

/// Tidy plot table from a report JSON. Kinds: "ldp", "exit_scaling", "quasipotential", "exit_place".
/// Null entries in eps_log_p / margin (zero hits) are emitted as "-inf". Unknown kinds throw UnknownKind.
std::string export_plotdata(const Json& report, const std::string& kind);

/// JSON document for an error, as printed by the CLI.
Json error_report(const std::exception& e);

}  // namespace fwspde
