#include "rem/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rem/common/error.hpp"

namespace rem::metrics {

double error_rate(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("error_rate: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ContractError("error_rate: empty input");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predictions[i] != labels[i];
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(labels.size());
}

CollapseDiagnostic collapse_diagnostic(std::span<const int> predictions, std::size_t classes) {
  if (predictions.empty()) throw ContractError("collapse_diagnostic: empty window");
  if (classes < 2) throw ContractError("collapse_diagnostic: needs at least 2 classes");
  std::vector<std::size_t> counts(classes, 0);
  for (int p : predictions) {
    if (p < 0 || static_cast<std::size_t>(p) >= classes) {
      throw ContractError("collapse_diagnostic: class index out of range");
    }
    ++counts[static_cast<std::size_t>(p)];
  }
  const double n = static_cast<double>(predictions.size());
  CollapseDiagnostic out;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / n;
    out.histogram_entropy -= q * std::log(q);
  }
  out.histogram_entropy = std::max(0.0, out.histogram_entropy);
  out.collapsed = out.histogram_entropy < kCollapseFraction * std::log(static_cast<double>(classes));
  return out;
}

double ece(std::span<const double> probs, std::size_t classes, std::span<const int> labels,
           std::size_t bins) {
  if (classes == 0 || probs.size() != labels.size() * classes) {
    throw DimensionError("ece: probabilities do not match labels");
  }
  if (bins == 0) throw ContractError("ece: bins must be positive");
  if (labels.empty()) throw ContractError("ece: empty input");
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = probs.data() + i * classes;
    const auto top = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    const double c = row[top];
    auto bin = static_cast<long>(std::ceil(c * static_cast<double>(bins))) - 1;
    bin = std::clamp(bin, 0L, static_cast<long>(bins) - 1);
    conf_sum[static_cast<std::size_t>(bin)] += c;
    hit_sum[static_cast<std::size_t>(bin)] += static_cast<int>(top) == labels[i] ? 1.0 : 0.0;
  }
  // sum_b (n_b / n) |acc_b - conf_b| = sum_b |hits_b - conf_b| / n
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) total += std::abs(hit_sum[b] - conf_sum[b]);
  return total / static_cast<double>(labels.size());
}

double tvd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("tvd: distributions differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

TransferSummary transfer_summary(std::span<const double> seen_errors,
                                 std::span<const double> unseen_errors) {
  if (seen_errors.empty() || unseen_errors.empty()) {
    throw ContractError("transfer_summary: both error lists must be nonempty");
  }
  TransferSummary out;
  out.seen = std::accumulate(seen_errors.begin(), seen_errors.end(), 0.0) /
             static_cast<double>(seen_errors.size());
  out.unseen = std::accumulate(unseen_errors.begin(), unseen_errors.end(), 0.0) /
               static_cast<double>(unseen_errors.size());
  const double denom = out.seen + out.unseen;
  out.harmonic = denom == 0.0 ? 0.0 : 2.0 * out.seen * out.unseen / denom;
  return out;
}

}  // namespace rem::metrics
