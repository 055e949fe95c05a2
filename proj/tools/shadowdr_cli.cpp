// shadowdr: doubly robust estimation of an outcome mean with a shadow
// variable.
//
//   shadowdr estimate --data data.csv [--config run.json] [--out-dir DIR] [--seed S] [--threads T]
//   shadowdr gof      --data data.csv [--config run.json] [--out-dir DIR] [--seed S] [--threads T]
//   shadowdr simulate [--config study.json] [--out-dir DIR] [--seed S] [--threads T]
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 solver failure,
// 5 oracle inconsistency.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shadowdr/errors.hpp"
#include "shadowdr/inference.hpp"
#include "shadowdr/io.hpp"
#include "shadowdr/pipeline.hpp"
#include "shadowdr/simulation.hpp"

namespace fs = std::filesystem;
using namespace shadowdr;

namespace {

struct Options {
  std::string data;
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

io::RunConfig resolve(const Options& opt) {
  io::RunConfig cfg = opt.config.empty() ? io::parse_config("{}") : io::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.threads) cfg.threads = *opt.threads;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  return cfg;
}

fs::path prepare_out_dir(const io::RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

io::Provenance provenance(const io::RunConfig& cfg, const std::string& data = {}) {
  return {cfg.hash, cfg.seed, data};
}

EstimateReport estimate(const Dataset& data, const io::RunConfig& cfg, bool need_inference) {
  const PipelineConfig pc = cfg.pipeline(data.dim());
  if (need_inference && cfg.bootstrap_replicates < 2) {
    throw ConfigError("the gof tests need bootstrap.replicates >= 2");
  }
  if (cfg.bootstrap_replicates == 0) return run_pipeline(data, pc);
  const BootstrapConfig boot{cfg.bootstrap_replicates, cfg.seed, cfg.threads};
  return estimate_with_inference(data, pc, boot);
}

int cmd_estimate(const Options& opt) {
  const io::RunConfig cfg = resolve(opt);
  const Dataset data = io::read_csv(opt.data);
  const EstimateReport rep = estimate(data, cfg, false);
  const fs::path dir = prepare_out_dir(cfg);
  write_text(dir / "estimate.json", io::report_json(rep, data, provenance(cfg, opt.data)).dump(2) + "\n");
  std::cout << "n = " << data.size() << ", complete cases = " << data.complete_cases() << ", config "
            << cfg.hash << ", seed " << cfg.seed << "\n";
  io::print_report(std::cout, rep);
  if (rep.gof_phi && rep.gof_phi->rejects()) {
    std::cerr << "warning: " << io::verdict("propensity", *rep.gof_phi) << "\n";
  }
  if (rep.gof_psi && rep.gof_psi->rejects()) {
    std::cerr << "warning: " << io::verdict("outcome", *rep.gof_psi) << "\n";
  }
  std::cout << "wrote " << (dir / "estimate.json").string() << "\n";
  return 0;
}

int cmd_gof(const Options& opt) {
  const io::RunConfig cfg = resolve(opt);
  const Dataset data = io::read_csv(opt.data);
  const EstimateReport rep = estimate(data, cfg, true);
  if (!rep.gof_phi || !rep.gof_psi) throw NumericalError("gof tests could not be computed");
  const fs::path dir = prepare_out_dir(cfg);
  io::json doc;
  doc["provenance"] = provenance(cfg, opt.data).to_json();
  doc["phi"] = io::gof_json(*rep.gof_phi);
  doc["phi"]["verdict"] = io::verdict("propensity", *rep.gof_phi);
  doc["psi"] = io::gof_json(*rep.gof_psi);
  doc["psi"]["verdict"] = io::verdict("outcome", *rep.gof_psi);
  write_text(dir / "gof.json", doc.dump(2) + "\n");
  std::cout << "  " << std::left << std::setw(6) << "test" << std::right << std::setw(13) << "estimate"
            << std::setw(13) << "boot_se" << std::setw(11) << "statistic" << std::setw(11) << "p_value" << "\n";
  for (const auto& [name, g] : {std::pair{"phi", *rep.gof_phi}, std::pair{"psi", *rep.gof_psi}}) {
    std::cout << "  " << std::left << std::setw(6) << name << std::right << std::setprecision(5) << std::setw(13)
              << g.estimate << std::setw(13) << g.se << std::setw(11) << g.statistic << std::setw(11) << g.p_value
              << "\n";
  }
  std::cout << "  propensity: " << io::verdict("propensity", *rep.gof_phi) << "\n"
            << "  outcome:    " << io::verdict("outcome", *rep.gof_psi) << "\n"
            << "wrote " << (dir / "gof.json").string() << "\n";
  return 0;
}

int cmd_simulate(const Options& opt) {
  const io::RunConfig cfg = resolve(opt);
  std::vector<sim::ScenarioConfig> scenarios = cfg.simulation.scenarios;
  if (scenarios.empty()) scenarios = sim::acceptance_grid();
  const std::size_t p = scenarios.front().p;
  for (const auto& s : scenarios) {
    if (s.p != p) throw ConfigError("all scenarios of one study must share the covariate dimension");
  }
  sim::StudyConfig study;
  study.replications = cfg.simulation.replications;
  study.master_seed = cfg.seed;
  study.threads = cfg.threads;
  study.bootstrap_replicates = cfg.simulation.bootstrap_replicates;
  study.truth_draws = cfg.simulation.truth_draws;
  study.pipeline = cfg.pipeline(p);
  if (cfg.model.g.empty()) study.pipeline.moments.g = sim::study_pipeline(p).moments.g;

  const sim::StudyResult res = sim::run_study(scenarios, study);
  const fs::path dir = prepare_out_dir(cfg);
  {
    std::ofstream out(dir / "summary.csv", std::ios::binary);
    io::write_summary_csv(out, res);
  }
  {
    std::ofstream out(dir / "replications.csv", std::ios::binary);
    io::write_replications_csv(out, res);
  }
  write_text(dir / "summary.json", io::study_json(res, study, provenance(cfg)).dump(2) + "\n");
  fs::create_directories(dir / "data");
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const Dataset first = sim::generate(scenarios[s], sim::replication_seed(study.master_seed, s, 0)).observed;
    io::write_csv(dir / "data" / (scenarios[s].name + ".csv"), first);
  }
  std::cout << "config " << cfg.hash << ", seed " << cfg.seed << "\n";
  io::print_study(std::cout, res);
  std::cout << "wrote " << (dir / "summary.csv").string() << ", " << (dir / "replications.csv").string() << ", "
            << (dir / "summary.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust estimation of an outcome mean with a shadow variable"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub, bool needs_data) {
    auto* d = sub->add_option("--data", opt.data, "CSV dataset with columns x1..xp, z, r, y");
    if (needs_data) d->required();
    sub->add_option("--config", opt.config, "JSON run configuration");
    sub->add_option("--out-dir", opt.out_dir, "Directory for output documents (overrides config)");
    sub->add_option("--seed", opt.seed, "Master seed (overrides config)");
    sub->add_option("--threads", opt.threads, "Worker threads; 0 uses all cores (overrides config)");
  };
  auto* est = app.add_subcommand("estimate", "Estimate the outcome mean with bootstrap standard errors");
  add_common(est, true);
  auto* gof = app.add_subcommand("gof", "Goodness-of-fit tests of the baseline propensity and outcome models");
  add_common(gof, true);
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study");
  add_common(sim, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::config_error);
  }

  try {
    if (est->parsed()) return cmd_estimate(opt);
    if (gof->parsed()) return cmd_gof(opt);
    return cmd_simulate(opt);
  } catch (const Error& e) {
    std::cerr << io::error_json(e).dump(2) << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    Error wrapped("internal_error", e.what(), ExitCode::data_error);
    std::cerr << io::error_json(wrapped).dump(2) << "\n";
    return static_cast<int>(ExitCode::data_error);
  }
}
