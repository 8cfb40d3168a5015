#include "rem/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "rem/adapt/engine.hpp"
#include "rem/common/error.hpp"
#include "rem/data/synthetic.hpp"
#include "rem/vit/checkpoint.hpp"

namespace rem::cli {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ContractError("cannot write " + p.string());
  f << text;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  return path.empty() ? ExperimentConfig() : ExperimentConfig::load(path);
}

int cmd_pretrain(const PretrainArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const auto cfg = load_config(args.config);
    const auto model = cfg.model();
    const auto held_out = data::gen_dataset(cfg.held_out_data());
    const auto t0 = std::chrono::steady_clock::now();
    auto result = vit::pretrain_source(
        model,
        [&](std::size_t epoch) {
          return std::make_shared<const data::ImageSet>(data::gen_dataset(cfg.train_data(epoch)));
        },
        held_out, cfg.pretrain());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    vit::save_checkpoint(args.out, model, result.params);
    out << "final epoch loss " << fixed(result.epoch_loss.back()) << ", train accuracy "
        << fixed(100.0 * result.train_accuracy, 2) << "%, clean accuracy "
        << fixed(100.0 * result.clean_accuracy, 2) << "% (" << fixed(secs, 1) << " s)\n"
        << "wrote " << args.out.string() << "\n";
    return 0;
  } catch (const TrainingError& e) {
    err << "pretrain failed in epoch " << e.epoch() << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "pretrain: " << e.what() << "\n";
    return 2;
  }
}

metrics::RunReport run_experiment(const ExperimentConfig& config,
                                  const std::filesystem::path& checkpoint, std::uint64_t seed,
                                  const std::optional<std::filesystem::path>& dir) {
  auto ckpt = vit::load_checkpoint(checkpoint);
  if (ckpt.config.num_classes != config.model().num_classes) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.config.num_classes) +
                      " classes, config expects " + std::to_string(config.model().num_classes));
  }
  vit::VisionTransformer model(ckpt.config, std::move(ckpt.params));
  auto pool = std::make_shared<const data::ImageSet>(data::gen_dataset(config.stream_pool(seed)));
  const data::DomainStream stream(pool, config.stream(seed));
  const adapt::AdaptConfig acfg = config.adapt(seed);

  std::ofstream steps;
  std::optional<adapt::StepLog> log;
  if (dir) {
    std::filesystem::create_directories(*dir);
    steps.open(*dir / "steps.jsonl", std::ios::binary);
    if (!steps) throw ContractError("cannot write " + (*dir / "steps.jsonl").string());
    log.emplace(steps);
  }
  auto report = adapt::run_stream(model, stream, acfg, [&](const adapt::StepRecord& r) {
    if (log) log->write(r);
  });
  report.settings = config.resolved();
  report.settings.emplace_back("run.seed", std::to_string(seed));
  report.config_text = config.text();
  if (dir) metrics::write_reports(report, *dir);
  return report;
}

int cmd_adapt(const AdaptArgs& args, std::ostream& out, std::ostream& err) {
  try {
    auto cfg = load_config(args.config);
    if (args.method) cfg.set("adapt.method", *args.method);
    if (args.mode) cfg.set("adapt.mode", *args.mode);
    const std::uint64_t seed = args.seed ? *args.seed : cfg.seed();
    (void)cfg.adapt(seed);
    const auto dir = args.out ? *args.out : cfg.output_dir();
    const auto report = run_experiment(cfg, args.checkpoint, seed, dir);
    for (const auto& d : report.domains) {
      out << d.index << " " << d.corruption << ":" << d.severity << "  error " << fixed(d.error, 2)
          << "%  hist_entropy " << fixed(d.hist_entropy) << (d.collapsed ? "  COLLAPSED" : "")
          << "\n";
    }
    out << "mean error " << fixed(report.mean_error(), 2) << "% (" << report.method << ", "
        << report.mode << ", seed " << seed << ")\n";
    if (report.transfer) {
      out << "seen " << fixed(report.transfer->seen, 2) << "  unseen "
          << fixed(report.transfer->unseen, 2) << "  harmonic "
          << fixed(report.transfer->harmonic, 2) << "\n";
    }
    out << "wrote " << (dir / "results.csv").string() << "\n";
    return 0;
  } catch (const AdaptationError& e) {
    err << "adaptation halted at step " << e.step() << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "adapt: " << e.what() << "\n";
    return 2;
  }
}

std::vector<GridAxis> parse_grid(const std::string& grid) {
  std::vector<GridAxis> axes;
  std::string_view rest = grid;
  while (!rest.empty()) {
    const auto semi = rest.find(';');
    std::string_view item = rest.substr(0, semi);
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("grid: expected key=v1,v2 in '" + std::string(item) + "'");
    }
    GridAxis axis{std::string(item.substr(0, eq)), {}};
    const auto& keys = config_keys();
    if (std::none_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == axis.key; })) {
      throw ConfigError("grid: unknown config key '" + axis.key + "'");
    }
    std::string_view vals = item.substr(eq + 1);
    while (true) {
      const auto comma = vals.find(',');
      axis.values.emplace_back(vals.substr(0, comma));
      if (comma == std::string_view::npos) break;
      vals.remove_prefix(comma + 1);
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const auto base = load_config(args.config);
    const auto axes = parse_grid(args.grid);
    for (const auto& a : axes) {
      auto probe = base;
      for (const auto& v : a.values) probe.set(a.key, v);
    }
    // Enumerate the cartesian product, last axis fastest.
    std::vector<std::vector<std::string>> points{{}};
    for (const auto& a : axes) {
      std::vector<std::vector<std::string>> next;
      for (const auto& p : points) {
        for (const auto& v : a.values) {
          auto q = p;
          q.push_back(v);
          next.push_back(std::move(q));
        }
      }
      points = std::move(next);
    }
    const auto dir = args.out ? *args.out : base.output_dir();
    std::string header = "point";
    for (const auto& a : axes) header += "," + a.key;
    std::string csv = header + ",seed,mean_error,collapsed_domains\n";
    std::string summary = header + ",seeds,mean_error,std_error\n";
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      auto cfg = base;
      std::string values;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        cfg.set(axes[a].key, points[pi][a]);
        values += "," + points[pi][a];
      }
      std::vector<double> errors;
      for (const auto seed : args.seeds) {
        const auto run_dir = dir / ("point" + std::to_string(pi) + "_seed" + std::to_string(seed));
        const auto report = run_experiment(cfg, args.checkpoint, seed, run_dir);
        std::size_t collapsed = 0;
        for (const auto& d : report.domains) collapsed += d.collapsed;
        errors.push_back(report.mean_error());
        csv += std::to_string(pi) + values + "," + std::to_string(seed) + "," +
               fixed(errors.back(), 6) + "," + std::to_string(collapsed) + "\n";
        out << "point " << pi << values << " seed " << seed << ": mean error "
            << fixed(errors.back(), 2) << "%\n";
      }
      double m = 0.0, v = 0.0;
      for (double e : errors) m += e;
      m /= static_cast<double>(errors.size());
      for (double e : errors) v += (e - m) * (e - m);
      const double sd = errors.size() > 1 ? std::sqrt(v / static_cast<double>(errors.size() - 1)) : 0.0;
      csv += std::to_string(pi) + values + ",mean," + fixed(m, 6) + ",\n";
      csv += std::to_string(pi) + values + ",std," + fixed(sd, 6) + ",\n";
      summary += std::to_string(pi) + values + "," + std::to_string(errors.size()) + "," +
                 fixed(m, 6) + "," + fixed(sd, 6) + "\n";
    }
    write_text(dir / "sweep.csv", csv);
    write_text(dir / "sweep_summary.csv", summary);
    out << "wrote " << (dir / "sweep.csv").string() << "\n";
    return 0;
  } catch (const AdaptationError& e) {
    err << "sweep halted at step " << e.step() << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << "\n";
    return 2;
  }
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (!std::filesystem::is_directory(args.runs)) {
      throw ConfigError("--runs: not a directory: " + args.runs.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(args.runs)) {
      if (e.is_regular_file() && e.path().filename() == "run.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no run.json found under " + args.runs.string());

    struct Row {
      std::string run, method, mode;
      std::uint64_t seed;
      std::vector<std::string> domains;
      std::vector<double> errors;
      std::size_t collapsed = 0;
      double mean = 0.0;
      std::optional<double> harmonic;
    };
    std::vector<Row> rows;
    std::size_t max_domains = 0;
    for (const auto& f : files) {
      std::ifstream in(f);
      const auto j = nlohmann::json::parse(in);
      Row r;
      r.run = std::filesystem::relative(f.parent_path(), args.runs).string();
      r.method = j.at("method").get<std::string>();
      r.mode = j.at("mode").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      for (const auto& d : j.at("domains")) {
        r.domains.push_back(d.at("corruption").get<std::string>());
        r.errors.push_back(d.at("error").get<double>());
        r.collapsed += d.at("collapse_flag").get<bool>();
      }
      r.mean = j.at("mean_error").get<double>();
      if (!j.at("transfer").is_null()) r.harmonic = j["transfer"].at("harmonic").get<double>();
      max_domains = std::max(max_domains, r.errors.size());
      rows.push_back(std::move(r));
    }

    std::string csv = "run,method,mode,seed";
    for (std::size_t d = 0; d < max_domains; ++d) csv += ",d" + std::to_string(d);
    csv += ",mean_error,collapsed_domains,harmonic\n";
    for (const auto& r : rows) {
      csv += r.run + "," + r.method + "," + r.mode + "," + std::to_string(r.seed);
      for (std::size_t d = 0; d < max_domains; ++d) {
        csv += "," + (d < r.errors.size() ? fixed(r.errors[d], 6) : std::string());
      }
      csv += "," + fixed(r.mean, 6) + "," + std::to_string(r.collapsed) + "," +
             (r.harmonic ? fixed(*r.harmonic, 6) : std::string()) + "\n";
    }
    write_text(args.out ? *args.out : args.runs / "report.csv", csv);

    char line[256];
    std::snprintf(line, sizeof line, "%-24s %-7s %-10s %5s", "run", "method", "mode", "seed");
    out << line;
    for (std::size_t d = 0; d < max_domains; ++d) {
      std::snprintf(line, sizeof line, " %7s", ("d" + std::to_string(d)).c_str());
      out << line;
    }
    out << "    mean  collapsed  harmonic\n";
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-24s %-7s %-10s %5llu", r.run.c_str(), r.method.c_str(),
                    r.mode.c_str(), static_cast<unsigned long long>(r.seed));
      out << line;
      for (std::size_t d = 0; d < max_domains; ++d) {
        std::snprintf(line, sizeof line, " %7s", d < r.errors.size() ? fixed(r.errors[d], 2).c_str() : "");
        out << line;
      }
      std::snprintf(line, sizeof line, " %7.2f  %9zu  %8s\n", r.mean, r.collapsed,
                    r.harmonic ? fixed(*r.harmonic, 2).c_str() : "-");
      out << line;
    }
    std::map<std::string, std::vector<double>> by_method;
    for (const auto& r : rows) by_method[r.method + "/" + r.mode].push_back(r.mean);
    out << "\nper method (mean over runs):\n";
    for (const auto& [k, v] : by_method) {
      double m = 0.0;
      for (double x : v) m += x;
      out << "  " << k << ": " << fixed(m / static_cast<double>(v.size()), 2) << "% over "
          << v.size() << " run(s)\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "report: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace rem::cli
