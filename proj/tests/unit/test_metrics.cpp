#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"
#include "rem/metrics/metrics.hpp"
#include "rem/metrics/report.hpp"

using namespace rem;
using namespace rem::metrics;

namespace {

// Two-pass oracle: assign every sample to a bin by scanning bin edges, then
// weight each bin gap by its population.
double ece_oracle(const std::vector<double>& probs, std::size_t classes,
                  const std::vector<int>& labels, std::size_t bins) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    double conf = 0.0, acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -1.0;
      int arg = 0;
      for (std::size_t k = 0; k < classes; ++k) {
        if (probs[i * classes + k] > best) {
          best = probs[i * classes + k];
          arg = static_cast<int>(k);
        }
      }
      const bool in = b == 0 ? best <= hi : (best > lo && best <= hi);
      if (!in) continue;
      ++count;
      conf += best;
      acc += arg == labels[i] ? 1.0 : 0.0;
    }
    if (count == 0) continue;
    total += static_cast<double>(count) / static_cast<double>(n) *
             std::abs(acc / static_cast<double>(count) - conf / static_cast<double>(count));
  }
  return total;
}

std::vector<double> random_probs(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<double> p(n * classes);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double temp = rng.uniform(0.2, 3.0);
    for (std::size_t k = 0; k < classes; ++k) {
      p[i * classes + k] = std::exp(rng.normal() / temp);
      s += p[i * classes + k];
    }
    for (std::size_t k = 0; k < classes; ++k) p[i * classes + k] /= s;
  }
  return p;
}

}  // namespace

TEST(ErrorRate, Examples) {
  const std::vector<int> y{0, 1, 2, 3, 4, 5, 6, 7, 0, 1};
  EXPECT_EQ(error_rate(y, y), 0.0);
  std::vector<int> wrong(y);
  for (auto& v : wrong) v = (v + 1) % 8;
  EXPECT_EQ(error_rate(wrong, y), 100.0);
  std::vector<int> three(y);
  three[0] = 5;
  three[4] = 0;
  three[9] = 7;
  EXPECT_NEAR(error_rate(three, y), 30.0, 1e-12);
  EXPECT_THROW(error_rate(std::vector<int>{1}, y), DimensionError);
}

TEST(Collapse, Examples) {
  const std::vector<int> all3(40, 3);
  auto d = collapse_diagnostic(all3, 8);
  EXPECT_EQ(d.histogram_entropy, 0.0);
  EXPECT_TRUE(d.collapsed);

  std::vector<int> uniform;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 8; ++c) uniform.push_back(c);
  d = collapse_diagnostic(uniform, 8);
  EXPECT_NEAR(d.histogram_entropy, std::log(8.0), 1e-12);
  EXPECT_FALSE(d.collapsed);

  std::vector<int> half(20, 0);
  half.insert(half.end(), 20, 1);
  d = collapse_diagnostic(half, 8);
  EXPECT_NEAR(d.histogram_entropy, std::log(2.0), 1e-12);
  EXPECT_FALSE(d.collapsed);
}

TEST(Collapse, ThresholdAndOrderInvariance) {
  // 99 of one class, 1 of another: entropy ~0.056 < 0.1 ln 8 = 0.208.
  std::vector<int> p(99, 2);
  p.push_back(5);
  EXPECT_TRUE(collapse_diagnostic(p, 8).collapsed);
  Rng rng(1);
  std::vector<int> w(200);
  for (auto& v : w) v = static_cast<int>(rng.below(8));
  const double h = collapse_diagnostic(w, 8).histogram_entropy;
  for (int t = 0; t < 10; ++t) {
    rng.shuffle(w.begin(), w.end());
    EXPECT_DOUBLE_EQ(collapse_diagnostic(w, 8).histogram_entropy, h);
  }
  EXPECT_THROW(collapse_diagnostic(std::vector<int>{}, 8), ContractError);
}

TEST(Ece, PerfectAndInverted) {
  const std::vector<double> p{1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(ece(p, 3, std::vector<int>{0, 1, 2}), 0.0);
  EXPECT_EQ(ece(p, 3, std::vector<int>{1, 2, 0}), 1.0);
}

TEST(Ece, MatchesBruteForceBinning) {
  Rng rng(2024);
  for (int t = 0; t < 30; ++t) {
    const std::size_t classes = 2 + rng.below(9);
    const auto p = random_probs(rng, 200, classes);
    std::vector<int> y(200);
    for (auto& v : y) v = static_cast<int>(rng.below(classes));
    EXPECT_NEAR(ece(p, classes, y, 15), ece_oracle(p, classes, y, 15), 1e-12);
  }
}

TEST(Ece, OneBinIsAccuracyGap) {
  Rng rng(7);
  const auto p = random_probs(rng, 100, 5);
  std::vector<int> y(100);
  for (auto& v : y) v = static_cast<int>(rng.below(5));
  double conf = 0.0, hit = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto* r = p.data() + i * 5;
    const auto top = std::max_element(r, r + 5) - r;
    conf += r[top];
    hit += top == y[i];
  }
  EXPECT_NEAR(ece(p, 5, y, 1), std::abs(hit / 100 - conf / 100), 1e-12);
}

TEST(Tvd, Examples) {
  const std::vector<double> a{0.3, 0.7};
  EXPECT_EQ(tvd(a, a), 0.0);
  EXPECT_EQ(tvd(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0);
  EXPECT_NEAR(tvd(std::vector<double>{0.6, 0.4}, std::vector<double>{0.5, 0.5}), 0.1, 1e-12);
}

TEST(Tvd, SymmetricAndTriangle) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_probs(rng, 3, 6);
    std::span<const double> a(p.data(), 6), b(p.data() + 6, 6), c(p.data() + 12, 6);
    EXPECT_EQ(tvd(a, b), tvd(b, a));
    EXPECT_LE(tvd(a, c), tvd(a, b) + tvd(b, c) + 1e-15);
    EXPECT_GE(tvd(a, b), 0.0);
    EXPECT_LE(tvd(a, b), 1.0);
  }
}

TEST(Transfer, PaperRows) {
  const std::vector<double> tent_seen{54.4}, tent_unseen{49.5};
  EXPECT_NEAR(transfer_summary(tent_seen, tent_unseen).harmonic, 51.8, 0.05);
  const std::vector<double> vida_seen{45.9}, vida_unseen{42.3};
  EXPECT_NEAR(transfer_summary(vida_seen, vida_unseen).harmonic, 44.0, 0.05);
}

TEST(Transfer, EqualMeansAndAveraging) {
  const std::vector<double> a{30.0, 50.0}, b{40.0};
  const auto s = transfer_summary(a, b);
  EXPECT_EQ(s.seen, 40.0);
  EXPECT_EQ(s.unseen, 40.0);
  EXPECT_NEAR(s.harmonic, 40.0, 1e-12);
  EXPECT_THROW(transfer_summary(std::vector<double>{}, b), ContractError);
}

namespace {

RunReport sample_report() {
  RunReport r;
  r.method = "rem";
  r.mode = "continual";
  r.seed = 3;
  r.settings = {{"adapt.lr", "0.001"}};
  r.config_text = "adapt.lr = 0.001\n";
  DomainAccumulator acc(2);
  acc.add(std::vector<int>{0, 1}, std::vector<int>{0, 0}, std::vector<double>{0.9, 0.1, 0.2, 0.8},
          0.25);
  r.domains.push_back(acc.finish(0, "gaussian_noise", 5, true));
  DomainAccumulator acc2(2);
  acc2.add(std::vector<int>{1, 1}, std::vector<int>{1, 1}, std::vector<double>{0.4, 0.6, 0.3, 0.7},
           std::nullopt);
  r.domains.push_back(acc2.finish(1, "contrast", 3, true));
  return r;
}

}  // namespace

TEST(Report, DomainAccumulatorMetrics) {
  const auto r = sample_report();
  EXPECT_EQ(r.domains[0].error, 50.0);
  EXPECT_EQ(r.domains[0].samples, 2u);
  EXPECT_NEAR(r.domains[0].hist_entropy, std::log(2.0), 1e-12);
  EXPECT_NEAR(*r.domains[0].tvd, 0.25, 1e-15);
  EXPECT_FALSE(r.domains[1].tvd.has_value());
  EXPECT_TRUE(r.domains[1].collapsed);
  EXPECT_EQ(r.mean_error(), 25.0);
}

TEST(Report, CsvGolden) {
  const std::string want =
      "domain_index,corruption,severity,error,mean_entropy,hist_entropy,ece,tvd,collapse_flag\n"
      "0,gaussian_noise,5,50.000000,0.412743,0.693147,0.450000,0.250000,0\n"
      "1,contrast,3,0.000000,0.641938,0.000000,0.350000,,1\n"
      "mean,all,,25.000000,0.527340,0.346574,0.400000,0.250000,1\n";
  EXPECT_EQ(format_results_csv(sample_report()), want);
}

TEST(Report, RunJsonCarriesConfigAndDomains) {
  const auto j = nlohmann::json::parse(format_run_json(sample_report()));
  EXPECT_EQ(j["method"], "rem");
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["config"]["adapt.lr"], "0.001");
  EXPECT_EQ(j["config_text"], "adapt.lr = 0.001\n");
  EXPECT_EQ(j["domains"].size(), 2u);
  EXPECT_TRUE(j["domains"][1]["tvd"].is_null());
  EXPECT_DOUBLE_EQ(j["mean_error"].get<double>(), 25.0);
  EXPECT_TRUE(j["transfer"].is_null());
}

TEST(Report, StableAcrossRepeatedFormatting) {
  EXPECT_EQ(format_results_csv(sample_report()), format_results_csv(sample_report()));
  EXPECT_EQ(format_run_json(sample_report()), format_run_json(sample_report()));
}
