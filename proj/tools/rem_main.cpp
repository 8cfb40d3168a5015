#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rem/cli/commands.hpp"
#include "rem/kernels/gemm.hpp"

namespace {

std::string config_footer() {
  std::ostringstream os;
  os << "Config keys (key = value, '#' comments) and defaults:\n";
  for (const auto& k : rem::cli::config_keys()) {
    os << "  " << k.key << " = " << k.default_value << "\n      " << k.help << "\n";
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rem: ranked entropy minimization for continual test-time adaptation"};
  app.require_subcommand(1);
  app.footer(config_footer());
  std::string backend = "auto";
  app.add_option("--backend", backend, "GEMM kernels: auto | scalar | avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}))
      ->capture_default_str();

  rem::cli::PretrainArgs pre;
  std::string pre_config, pre_out = pre.out.string();
  auto* p = app.add_subcommand("pretrain", "train the source model on clean synthetic data");
  p->add_option("--config", pre_config, "experiment config file (empty: built-in defaults)")
      ->capture_default_str();
  p->add_option("--out", pre_out, "checkpoint to write")->capture_default_str();

  rem::cli::AdaptArgs ad;
  std::string ad_config, ad_ckpt, ad_method, ad_mode, ad_out;
  std::uint64_t ad_seed = 0;
  auto* a = app.add_subcommand("adapt", "run online adaptation over the corruption stream");
  a->add_option("--config", ad_config, "experiment config file (empty: built-in defaults)")
      ->capture_default_str();
  a->add_option("--checkpoint", ad_ckpt, "source checkpoint")->required();
  auto* a_method = a->add_option("--method", ad_method, "source | tent | rem")
                       ->check(CLI::IsMember({"source", "tent", "rem"}))
                       ->default_str("config adapt.method (rem)");
  auto* a_mode = a->add_option("--mode", ad_mode, "continual | episodic")
                     ->check(CLI::IsMember({"continual", "episodic"}))
                     ->default_str("config adapt.mode (continual)");
  auto* a_seed = a->add_option("--seed", ad_seed, "run seed: stream pool, order, corruption noise")
                     ->default_str("config seed (0)");
  auto* a_out = a->add_option("--out", ad_out, "output directory")
                    ->default_str("config output.dir (runs)");

  rem::cli::SweepArgs sw;
  std::string sw_config, sw_ckpt, sw_out;
  std::vector<std::uint64_t> sw_seeds{0};
  auto* s = app.add_subcommand("sweep", "grid over config keys x seeds");
  s->add_option("--config", sw_config, "experiment config file (empty: built-in defaults)")
      ->capture_default_str();
  s->add_option("--checkpoint", sw_ckpt, "source checkpoint")->required();
  s->add_option("--grid", sw.grid, "key=v1,v2;key2=v3 (cartesian product)")->required();
  s->add_option("--seeds", sw_seeds, "run seeds")->delimiter(',')->default_str("0");
  auto* s_out = s->add_option("--out", sw_out, "output directory")
                    ->default_str("config output.dir (runs)");

  rem::cli::ReportArgs rp;
  std::string rp_runs, rp_out;
  auto* r = app.add_subcommand("report", "compare the run.json files under a directory");
  r->add_option("--runs", rp_runs, "directory searched recursively for run.json")->required();
  auto* r_out = r->add_option("--out", rp_out, "comparison CSV")->default_str("<runs>/report.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (backend == "scalar") rem::kernels::set_backend(rem::kernels::Backend::scalar);
    if (backend == "avx2") rem::kernels::set_backend(rem::kernels::Backend::avx2);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (*p) {
    pre.config = pre_config;
    pre.out = pre_out;
    return rem::cli::cmd_pretrain(pre, std::cout, std::cerr);
  }
  if (*a) {
    ad.config = ad_config;
    ad.checkpoint = ad_ckpt;
    if (*a_method) ad.method = ad_method;
    if (*a_mode) ad.mode = ad_mode;
    if (*a_seed) ad.seed = ad_seed;
    if (*a_out) ad.out = ad_out;
    return rem::cli::cmd_adapt(ad, std::cout, std::cerr);
  }
  if (*s) {
    sw.config = sw_config;
    sw.checkpoint = sw_ckpt;
    sw.seeds = sw_seeds;
    if (*s_out) sw.out = sw_out;
    return rem::cli::cmd_sweep(sw, std::cout, std::cerr);
  }
  if (*r) {
    rp.runs = rp_runs;
    if (*r_out) rp.out = rp_out;
    return rem::cli::cmd_report(rp, std::cout, std::cerr);
  }
  return 0;
}
