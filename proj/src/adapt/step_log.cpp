#include "json.hpp"

#include "rem/adapt/engine.hpp"

namespace rem::adapt {

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void StepLog::write(const StepRecord& record) {
  const StepResult& r = *record.result;
  nlohmann::ordered_json j;
  j["v"] = kVersion;
  j["domain"] = record.domain;
  j["step"] = record.step;
  j["loss"] = optional_number(r.loss);
  j["loss_mcl"] = optional_number(r.loss_mcl);
  j["loss_erl"] = optional_number(r.loss_erl);
  j["per_ratio_entropy"] = r.per_ratio_entropy;
  j["batch_error"] = record.batch_error;
  j["tvd"] = optional_number(r.tvd);
  j["collapse_histogram"] = record.histogram;
  j["updated"] = r.updated;
  out_ << j.dump() << '\n';
}

}  // namespace rem::adapt
