#pragma once

#include <cstddef>
#include <span>

namespace rem::metrics {

// 100 * (1 - accuracy).
double error_rate(std::span<const int> predictions, std::span<const int> labels);

inline constexpr double kCollapseFraction = 0.1;

struct CollapseDiagnostic {
  double histogram_entropy = 0.0;  // entropy of the argmax class histogram
  bool collapsed = false;          // histogram_entropy < 0.1 ln C
};

CollapseDiagnostic collapse_diagnostic(std::span<const int> predictions, std::size_t classes);

// Equal-width confidence bins over the max probability of each row of
// probs [n, classes]; a confidence c falls in bin ceil(c * bins) - 1.
double ece(std::span<const double> probs, std::size_t classes, std::span<const int> labels,
           std::size_t bins = 15);

double tvd(std::span<const double> p, std::span<const double> q);

struct TransferSummary {
  double seen = 0.0;
  double unseen = 0.0;
  double harmonic = 0.0;
};

TransferSummary transfer_summary(std::span<const double> seen_errors,
                                 std::span<const double> unseen_errors);

}  // namespace rem::metrics
