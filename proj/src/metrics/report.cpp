#include "rem/metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "rem/common/error.hpp"

namespace rem::metrics {

double RunReport::mean_error() const {
  if (domains.empty()) return 0.0;
  double s = 0.0;
  for (const auto& d : domains) s += d.error;
  return s / static_cast<double>(domains.size());
}

void DomainAccumulator::add(std::span<const int> predictions, std::span<const int> labels,
                            std::span<const double> probs, std::optional<double> batch_tvd) {
  if (predictions.size() != labels.size() || probs.size() != labels.size() * classes_) {
    throw DimensionError("DomainAccumulator: inconsistent batch");
  }
  predictions_.insert(predictions_.end(), predictions.begin(), predictions.end());
  labels_.insert(labels_.end(), labels.begin(), labels.end());
  probs_.insert(probs_.end(), probs.begin(), probs.end());
  if (batch_tvd) {
    tvd_sum_ += *batch_tvd * static_cast<double>(labels.size());
    tvd_samples_ += labels.size();
  }
}

DomainReport DomainAccumulator::finish(std::size_t index, std::string corruption, int severity,
                                       bool seen) const {
  DomainReport r;
  r.index = index;
  r.corruption = std::move(corruption);
  r.severity = severity;
  r.seen = seen;
  r.samples = labels_.size();
  r.error = error_rate(predictions_, labels_);
  double s = 0.0;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    for (std::size_t c = 0; c < classes_; ++c) {
      const double q = probs_[i * classes_ + c];
      if (q > 0.0) s -= q * std::log(q);
    }
  }
  r.mean_entropy = s / static_cast<double>(labels_.size());
  const auto cd = collapse_diagnostic(predictions_, classes_);
  r.hist_entropy = cd.histogram_entropy;
  r.collapsed = cd.collapsed;
  r.ece = ece(probs_, classes_, labels_);
  if (tvd_samples_ > 0) r.tvd = tvd_sum_ / static_cast<double>(tvd_samples_);
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_results_csv(const RunReport& report) {
  std::string out = "domain_index,corruption,severity,error,mean_entropy,hist_entropy,ece,tvd,collapse_flag\n";
  double err = 0, ent = 0, hist = 0, e = 0, tv = 0;
  std::size_t tv_n = 0, collapsed = 0;
  for (const auto& d : report.domains) {
    out += std::to_string(d.index) + "," + d.corruption + "," + std::to_string(d.severity) + "," +
           fixed(d.error) + "," + fixed(d.mean_entropy) + "," + fixed(d.hist_entropy) + "," +
           fixed(d.ece) + "," + (d.tvd ? fixed(*d.tvd) : std::string()) + "," +
           (d.collapsed ? "1" : "0") + "\n";
    err += d.error;
    ent += d.mean_entropy;
    hist += d.hist_entropy;
    e += d.ece;
    if (d.tvd) {
      tv += *d.tvd;
      ++tv_n;
    }
    collapsed += d.collapsed;
  }
  if (!report.domains.empty()) {
    const auto n = static_cast<double>(report.domains.size());
    // Mean row: column means; collapse_flag counts collapsed domains.
    out += "mean,all,," + fixed(err / n) + "," + fixed(ent / n) + "," + fixed(hist / n) + "," +
           fixed(e / n) + "," + (tv_n ? fixed(tv / static_cast<double>(tv_n)) : std::string()) +
           "," + std::to_string(collapsed) + "\n";
  }
  return out;
}

std::string format_run_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = "rem-run";
  j["version"] = 1;
  j["method"] = report.method;
  j["mode"] = report.mode;
  j["seed"] = report.seed;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.settings) settings[k] = v;
  j["config"] = settings;
  j["config_text"] = report.config_text;
  j["mean_error"] = report.mean_error();
  auto& domains = j["domains"] = nlohmann::ordered_json::array();
  for (const auto& d : report.domains) {
    nlohmann::ordered_json o;
    o["index"] = d.index;
    o["corruption"] = d.corruption;
    o["severity"] = d.severity;
    o["seen"] = d.seen;
    o["samples"] = d.samples;
    o["error"] = d.error;
    o["mean_entropy"] = d.mean_entropy;
    o["hist_entropy"] = d.hist_entropy;
    o["ece"] = d.ece;
    o["tvd"] = d.tvd ? nlohmann::ordered_json(*d.tvd) : nlohmann::ordered_json(nullptr);
    o["collapse_flag"] = d.collapsed;
    domains.push_back(std::move(o));
  }
  if (report.transfer) {
    j["transfer"] = {{"seen", report.transfer->seen},
                     {"unseen", report.transfer->unseen},
                     {"harmonic", report.transfer->harmonic}};
  } else {
    j["transfer"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void write_reports(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ContractError("cannot write " + p.string());
    f << text;
    if (!f) throw ContractError("write failed: " + p.string());
  };
  write(dir / "results.csv", format_results_csv(report));
  write(dir / "run.json", format_run_json(report));
}

}  // namespace rem::metrics
