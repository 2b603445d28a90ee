// fwspde: command-line front end. One subcommand per experiment kind.
#include "fwspde/error.hpp"
#include "fwspde/run.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace fwspde;

namespace {

void write_error_file(const std::string& dir, const Json& report) {
  if (dir.empty()) return;
  try {
    if (std::filesystem::is_directory(dir))
      write_file_atomic((std::filesystem::path(dir) / "error.json").string(), report.dump(2) + "\n");
  } catch (...) {
    // the report already went to stderr
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-noise large deviation experiments for spectral SPDE models"};
  app.set_version_flag("--version", std::string(FWSPDE_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const auto& name : valid_commands()) {
    CLI::App* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override master_seed");
    sub->add_option("--threads", threads, "worker threads (default: FWSPDE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "override output_dir");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::string report_dir = out_dir;
  try {
    ExperimentConfig cfg = load_config(config_path);
    if (cfg.command != command)
      throw schema_error("command", "config is for '" + cfg.command + "' but the subcommand is '" + command + "'");
    if (app.get_subcommands().front()->count("--seed")) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    report_dir = cfg.output_dir;
    const RunManifest man = run(cfg, threads);
    std::cout << man.to_json().dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    const Json rep = error_report(e);
    std::cerr << rep.dump(2) << "\n";
    write_error_file(report_dir, rep);
    return rep.at("exit_code").get<int>();
  }
}
