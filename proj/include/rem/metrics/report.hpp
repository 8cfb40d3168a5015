#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rem/metrics/metrics.hpp"

namespace rem::metrics {

struct DomainReport {
  std::size_t index = 0;
  std::string corruption;  // kind name
  int severity = 0;
  bool seen = true;  // false: evaluated without adaptation (forward transfer)
  double error = 0.0;  // percent
  double mean_entropy = 0.0;
  double hist_entropy = 0.0;
  double ece = 0.0;
  std::optional<double> tvd;  // only when a masked chain was evaluated
  bool collapsed = false;
  std::size_t samples = 0;
};

struct RunReport {
  std::string method;
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<DomainReport> domains;
  std::optional<TransferSummary> transfer;
  std::vector<std::pair<std::string, std::string>> settings;  // resolved configuration
  std::string config_text;                                     // config file, verbatim

  double mean_error() const;
};

// Collects the online predictions of one domain.
class DomainAccumulator {
 public:
  explicit DomainAccumulator(std::size_t classes) : classes_(classes) {}

  void add(std::span<const int> predictions, std::span<const int> labels,
           std::span<const double> probs, std::optional<double> batch_tvd);

  DomainReport finish(std::size_t index, std::string corruption, int severity, bool seen) const;
  std::size_t samples() const noexcept { return labels_.size(); }

 private:
  std::size_t classes_;
  std::vector<int> predictions_, labels_;
  std::vector<double> probs_;
  double tvd_sum_ = 0.0;
  std::size_t tvd_samples_ = 0;
};

// Fixed six-decimal formatting so equal inputs give equal bytes.
std::string format_results_csv(const RunReport& report);
std::string format_run_json(const RunReport& report);

// Writes <dir>/results.csv and <dir>/run.json.
void write_reports(const RunReport& report, const std::filesystem::path& dir);

}  // namespace rem::metrics
