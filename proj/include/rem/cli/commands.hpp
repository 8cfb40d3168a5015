#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rem/cli/experiment_config.hpp"
#include "rem/metrics/report.hpp"

namespace rem::cli {

struct PretrainArgs {
  std::filesystem::path config;  // empty: defaults
  std::filesystem::path out = "source.ckpt";
};

struct AdaptArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::optional<std::string> method;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;  // overrides output.dir
};

struct SweepArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  // "key=v1,v2;key2=v3,v4": the cartesian product of the listed values.
  std::string grid;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::filesystem::path> out;
};

struct ReportArgs {
  std::filesystem::path runs;
  std::optional<std::filesystem::path> out;  // defaults to <runs>/report.csv
};

ExperimentConfig load_config(const std::filesystem::path& path);

// Each returns the process exit code; diagnostics go to `err`.
int cmd_pretrain(const PretrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_adapt(const AdaptArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

// One adaptation run from a resolved config. Writes results.csv, run.json and
// steps.jsonl into `dir` when given.
metrics::RunReport run_experiment(const ExperimentConfig& config,
                                  const std::filesystem::path& checkpoint, std::uint64_t seed,
                                  const std::optional<std::filesystem::path>& dir);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};
std::vector<GridAxis> parse_grid(const std::string& grid);

}  // namespace rem::cli
