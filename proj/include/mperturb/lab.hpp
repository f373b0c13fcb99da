#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mperturb/perturbation.hpp"

namespace mperturb::lab {

/// Parsed experiment configuration: the problem plus the family and run keys.
/// `echo` keeps the raw key-value pairs (defaults merged in) for the manifest.
struct ExperimentConfig {
  ProblemConfig problem;
  geometry::FamilyKind family = geometry::FamilyKind::Dumbbell;
  int n_max = 4;
  std::string out_dir = "runs";
  std::vector<std::pair<std::string, std::string>> echo;
};

ExperimentConfig default_config();
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// The documented key schema (also shipped as docs/config.md).
std::string config_schema();
std::string default_config_text();

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path file(const std::string& name) const { return dir / name; }
};

RunPaths prepare_run_dir(const std::string& base, const std::string& name);

void write_manifest(const RunPaths& run, const ExperimentConfig& cfg,
                    const std::string& subcommand, double seconds);

void cmd_spectrum(const ExperimentConfig& cfg, const RunPaths& run);
void cmd_manifold(const ExperimentConfig& cfg, spectral::SplitKind kind, const RunPaths& run);
void cmd_sweep(const ExperimentConfig& cfg, const RunPaths& run);

struct ValidateOutcome {
  int failures = 0;
  int total = 0;
};
ValidateOutcome cmd_validate(const ExperimentConfig& cfg, const RunPaths& run,
                             bool quiet = false);

/// Formats a double exactly (round-trip) for CSV output.
std::string fmt(double v);

/// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 validation
/// failure.
int run_cli(int argc, const char* const* argv);

}  // namespace mperturb::lab
