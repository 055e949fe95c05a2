#pragma once

// Dataset CSV files, the JSON run configuration, and the output documents
// written by the command-line driver.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shadowdr/dataset.hpp"
#include "shadowdr/errors.hpp"
#include "shadowdr/estimation.hpp"
#include "shadowdr/inference.hpp"
#include "shadowdr/model_core.hpp"
#include "shadowdr/pipeline.hpp"
#include "shadowdr/simulation.hpp"
#include "shadowdr/solver.hpp"

namespace shadowdr::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Formatting

/// Shortest text that reads back to the same double ("%.17g").
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// NaN and infinities become null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV datasets: header x1..xp, z, r, y; y empty iff r = 0.

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view s, std::size_t line, std::string_view column) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "column " + std::string(column) + ": '" + std::string(s) + "' is not a number");
  }
  if (!std::isfinite(v)) throw ParseError(line, "column " + std::string(column) + ": value is not finite");
  return v;
}

}  // namespace detail

inline Dataset read_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  // Header
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw SampleSizeError("dataset is empty (no header)");
  if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_fields(line);
  std::vector<std::string> names;
  for (auto h : header) names.emplace_back(detail::trim(h));
  std::map<std::string, std::size_t> column;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (!column.emplace(names[k], k).second) throw ParseError(lineno, "duplicate column '" + names[k] + "'");
  }
  for (const char* req : {"z", "r", "y"}) {
    if (!column.count(req)) throw ParseError(lineno, std::string("missing column '") + req + "'");
  }
  std::size_t p = 0;
  while (column.count("x" + std::to_string(p + 1))) ++p;
  if (names.size() != p + 3) {
    for (const auto& nm : names) {
      bool known = nm == "z" || nm == "r" || nm == "y";
      for (std::size_t j = 0; j < p && !known; ++j) known = nm == "x" + std::to_string(j + 1);
      if (!known) throw ParseError(lineno, "unexpected column '" + nm + "' (covariates must be x1..xp)");
    }
  }
  std::vector<std::size_t> xcol(p);
  for (std::size_t j = 0; j < p; ++j) xcol[j] = column.at("x" + std::to_string(j + 1));
  const std::size_t zc = column.at("z"), rc = column.at("r"), yc = column.at("y");

  std::vector<double> xs, zs, ys;
  std::vector<std::uint8_t> rs;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != names.size()) {
      throw ParseError(lineno, "expected " + std::to_string(names.size()) + " fields, found " +
                                   std::to_string(f.size()));
    }
    for (std::size_t j = 0; j < p; ++j) xs.push_back(detail::parse_number(f[xcol[j]], lineno, names[xcol[j]]));
    zs.push_back(detail::parse_number(f[zc], lineno, "z"));
    const auto rtext = detail::trim(f[rc]);
    if (rtext != "0" && rtext != "1") throw ParseError(lineno, "r must be 0 or 1, found '" + std::string(rtext) + "'");
    const bool r = rtext == "1";
    rs.push_back(r ? 1 : 0);
    const auto ytext = detail::trim(f[yc]);
    if (r && ytext.empty()) throw ParseError(lineno, "y is empty but r = 1");
    if (!r && !ytext.empty()) throw ParseError(lineno, "y is present but r = 0");
    ys.push_back(r ? detail::parse_number(ytext, lineno, "y") : std::numeric_limits<double>::quiet_NaN());
  }
  const auto n = static_cast<Eigen::Index>(rs.size());
  if (n == 0) throw SampleSizeError("dataset has no records");
  RowMatrix x(n, static_cast<Eigen::Index>(p));
  if (p > 0) x = Eigen::Map<const RowMatrix>(xs.data(), n, static_cast<Eigen::Index>(p));
  return Dataset(std::move(x), Eigen::Map<const Vector>(zs.data(), n), std::move(rs),
                 Eigen::Map<const Vector>(ys.data(), n));
}

inline Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "z,r,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.x(i);
    for (double v : x) out << format_double(v) << ',';
    out << format_double(data.z(i)) << ',' << (data.observed(i) ? '1' : '0') << ',';
    if (data.observed(i)) out << format_double(data.y(i));
    out << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  write_csv(out, data);
}

// ---------------------------------------------------------------------------
// Run configuration

/// Model choices as written in the config; resolved once p is known.
struct ModelChoices {
  std::vector<std::string> odds_ratio{"y"};
  std::vector<std::string> G;  // empty: mirror the odds-ratio basis
  std::string g;               // empty: first covariate
  std::string q = "1";
  std::optional<std::vector<std::string>> outcome_design;
  std::optional<std::vector<std::string>> H;  // propensity regressors besides the constant
  bool mar_mode = false;
  int extra_starts = 0;
};

struct SimulationChoices {
  int replications = 500;
  std::size_t truth_draws = 10'000'000;
  int bootstrap_replicates = 0;
  std::vector<sim::ScenarioConfig> scenarios;
};

struct RunConfig {
  std::uint64_t seed = 2016;
  unsigned threads = 0;
  int bootstrap_replicates = 200;
  std::string out_dir = "out";
  ModelChoices model;
  SolverConfig solver;
  SimulationChoices simulation;
  /// FNV-1a of the canonical (key-sorted, compact) config document.
  std::string hash = hex64(fnv1a64("{}"));

  PipelineConfig pipeline(std::size_t p) const {
    PipelineConfig pc;
    pc.odds.basis.clear();
    for (const auto& t : model.odds_ratio) pc.odds.basis.push_back(OddsRatioTerm::parse(t));
    pc.odds.gamma = Vector::Zero(static_cast<Eigen::Index>(pc.odds.basis.size()));
    pc.odds.validate(p);
    for (const auto& t : model.G) pc.moments.G.push_back(ShadowTerm::parse(t));
    pc.moments.g = model.g.empty() ? ExtendedWeightSpec::default_spec(p).g : ScalarFeature::parse(model.g, p);
    pc.moments.q = ScalarFeature::parse(model.q, p);
    auto design = [p](const std::vector<std::string>& terms) {
      Design d;
      for (const auto& t : terms) d.features.push_back(Feature::parse(t, p));
      return d;
    };
    if (model.outcome_design) pc.outcome_design = design(*model.outcome_design);
    if (model.H) pc.propensity_design = design(*model.H);
    pc.mar_mode = model.mar_mode;
    pc.extra_starts = model.extra_starts;
    pc.solver = solver;
    pc.resolved_moments(p).validate(pc.odds, p);
    return pc;
  }
};

namespace detail {

class Reader {
 public:
  Reader(const json& obj, std::string path, std::initializer_list<std::string_view> allowed) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
    const std::set<std::string_view> keys(allowed);
    for (const auto& [k, v] : obj_.items()) {
      if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where());
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json& at(const char* key) const { return obj_.at(key); }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(child(key) + " must be a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(child(key) + " must be finite");
  }

  template <class Int>
  void integer(const char* key, Int& out, long long lo) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() && !(v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())) {
      throw ConfigError(child(key) + " must be an integer");
    }
    const double d = v.get<double>();
    if (d < static_cast<double>(lo)) throw ConfigError(child(key) + " must be at least " + std::to_string(lo));
    if (v.is_number_unsigned()) {
      out = static_cast<Int>(v.get<std::uint64_t>());
    } else if (v.is_number_integer()) {
      out = static_cast<Int>(v.get<long long>());
    } else {
      out = static_cast<Int>(d);
    }
  }

  void boolean(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_boolean()) throw ConfigError(child(key) + " must be true or false");
    out = obj_.at(key).get<bool>();
  }

  void string(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!obj_.at(key).is_string()) throw ConfigError(child(key) + " must be a string");
    out = obj_.at(key).get<std::string>();
  }

  void strings(const char* key, std::vector<std::string>& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(child(key) + " must be an array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(child(key) + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
  }

  void numbers(const char* key, std::vector<double>& out) const {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(child(key) + " must be an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(child(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  const json& obj_;
  std::string path_;
};

inline sim::ScenarioConfig scenario_preset(const std::string& name) {
  if (name == "high_variability") return sim::high_variability_scenario();
  if (name == "weak_proxy") return sim::weak_proxy_scenario();
  if (name == "mar") return sim::mar_scenario();
  for (const auto& cell : sim::acceptance_grid()) {
    if (cell.name == name) return cell;
  }
  throw ConfigError("unknown scenario preset '" + name +
                    "' (known: both_correct, propensity_correct, outcome_correct, both_wrong, high_variability, "
                    "weak_proxy, mar)");
}

inline sim::ScenarioConfig parse_scenario(const json& j, const std::string& path) {
  const Reader r(j, path,
                 {"preset", "name", "n", "p", "a0", "a", "a_q", "sigma", "b_y", "b", "b_q", "tau", "c0", "c", "c_q",
                  "c_y", "misspecify_outcome", "misspecify_propensity", "seed"});
  sim::ScenarioConfig cfg;
  if (r.has("preset")) {
    std::string preset;
    r.string("preset", preset);
    cfg = scenario_preset(preset);
  }
  r.string("name", cfg.name);
  r.integer("n", cfg.n, 1);
  std::size_t p = cfg.p;
  r.integer("p", p, 1);
  if (p != cfg.p) {
    cfg.p = p;
    cfg.a.resize(p, 0.0);
    cfg.b.resize(p, 0.0);
    cfg.c.resize(p, 0.0);
  }
  r.number("a0", cfg.a0);
  r.numbers("a", cfg.a);
  r.number("a_q", cfg.a_q);
  r.number("sigma", cfg.sigma);
  r.number("b_y", cfg.b_y);
  r.numbers("b", cfg.b);
  r.number("b_q", cfg.b_q);
  r.number("tau", cfg.tau);
  r.number("c0", cfg.c0);
  r.numbers("c", cfg.c);
  r.number("c_q", cfg.c_q);
  r.number("c_y", cfg.c_y);
  r.boolean("misspecify_outcome", cfg.misspecify_outcome);
  r.boolean("misspecify_propensity", cfg.misspecify_propensity);
  r.integer("seed", cfg.seed, 0);
  cfg.validate_structure();
  return cfg;
}

}  // namespace detail

/// Parses and schema-checks a JSON config document. Unknown keys anywhere
/// are rejected.
inline RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  const detail::Reader top(doc, "", {"seed", "threads", "model", "solver", "bootstrap", "output", "simulation"});
  top.integer("seed", cfg.seed, 0);
  top.integer("threads", cfg.threads, 0);
  if (top.has("model")) {
    const detail::Reader m(top.at("model"), "model",
                           {"odds_ratio", "G", "g", "q", "outcome_design", "H", "mar_mode", "extra_starts"});
    m.strings("odds_ratio", cfg.model.odds_ratio);
    if (cfg.model.odds_ratio.empty()) throw ConfigError("model.odds_ratio must name at least one term");
    for (const auto& t : cfg.model.odds_ratio) OddsRatioTerm::parse(t);
    m.strings("G", cfg.model.G);
    for (const auto& t : cfg.model.G) ShadowTerm::parse(t);
    m.string("g", cfg.model.g);
    m.string("q", cfg.model.q);
    if (m.has("outcome_design")) {
      cfg.model.outcome_design.emplace();
      m.strings("outcome_design", *cfg.model.outcome_design);
    }
    if (m.has("H")) {
      cfg.model.H.emplace();
      m.strings("H", *cfg.model.H);
    }
    m.boolean("mar_mode", cfg.model.mar_mode);
    m.integer("extra_starts", cfg.model.extra_starts, 0);
  }
  if (top.has("solver")) {
    const detail::Reader s(top.at("solver"), "solver", {"tol", "max_iter", "max_halvings", "fd_step"});
    s.number("tol", cfg.solver.tol);
    s.integer("max_iter", cfg.solver.max_iter, 1);
    s.integer("max_halvings", cfg.solver.max_halvings, 0);
    s.number("fd_step", cfg.solver.fd_step);
    cfg.solver.validate();
  }
  if (top.has("bootstrap")) {
    const detail::Reader b(top.at("bootstrap"), "bootstrap", {"replicates"});
    b.integer("replicates", cfg.bootstrap_replicates, 0);
    if (cfg.bootstrap_replicates == 1) throw ConfigError("bootstrap.replicates must be 0 or at least 2");
  }
  if (top.has("output")) {
    const detail::Reader o(top.at("output"), "output", {"dir"});
    o.string("dir", cfg.out_dir);
  }
  if (top.has("simulation")) {
    const detail::Reader s(top.at("simulation"), "simulation",
                           {"replications", "truth_draws", "bootstrap_replicates", "scenarios"});
    s.integer("replications", cfg.simulation.replications, 0);
    if (cfg.simulation.replications < 2) throw ConfigError("simulation.replications must be at least 2");
    s.integer("truth_draws", cfg.simulation.truth_draws, 2);
    s.integer("bootstrap_replicates", cfg.simulation.bootstrap_replicates, 0);
    if (cfg.simulation.bootstrap_replicates == 1) {
      throw ConfigError("simulation.bootstrap_replicates must be 0 or at least 2");
    }
    if (s.has("scenarios")) {
      const auto& arr = s.at("scenarios");
      if (!arr.is_array() || arr.empty()) throw ConfigError("simulation.scenarios must be a non-empty array");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        cfg.simulation.scenarios.push_back(
            detail::parse_scenario(arr[k], "simulation.scenarios[" + std::to_string(k) + "]"));
      }
    }
  }
  // Canonical form: keys sorted, no whitespace, comments dropped.
  cfg.hash = hex64(fnv1a64(nlohmann::json(doc).dump()));
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

// ---------------------------------------------------------------------------
// Output documents

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string data;

  json to_json() const {
    json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    if (!data.empty()) j["data"] = data;
    return j;
  }
};

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
  return a;
}

inline json fit_json(const FitResult& f) {
  json j;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["final_moment_norm"] = number_or_null(f.final_moment_norm);
  return j;
}

inline json gof_json(const GofTestResult& g) {
  json j;
  j["estimate"] = number_or_null(g.estimate);
  j["se"] = number_or_null(g.se);
  j["statistic"] = number_or_null(g.statistic);
  j["p_value"] = number_or_null(g.p_value);
  j["rejects_at_0.05"] = g.rejects();
  return j;
}

inline json report_json(const EstimateReport& rep, const Dataset& data, const Provenance& prov) {
  json j;
  j["provenance"] = prov.to_json();
  j["n"] = data.size();
  j["p"] = data.dim();
  j["complete_cases"] = data.complete_cases();
  json est;
  est["mu_reg"] = number_or_null(rep.mu_reg);
  est["mu1"] = number_or_null(rep.mu1);
  est["mu2"] = number_or_null(rep.mu2);
  est["mu3"] = number_or_null(rep.mu3);
  est["phi"] = number_or_null(rep.phi_hat);
  est["psi"] = number_or_null(rep.psi_hat);
  j["estimates"] = est;
  if (rep.se) {
    json se;
    se["mu_reg"] = number_or_null(rep.se->mu_reg);
    se["mu1"] = number_or_null(rep.se->mu1);
    se["mu2"] = number_or_null(rep.se->mu2);
    se["mu3"] = number_or_null(rep.se->mu3);
    se["phi"] = number_or_null(rep.se->phi);
    se["psi"] = number_or_null(rep.se->psi);
    se["bootstrap_attempted"] = rep.se->attempted;
    se["bootstrap_used"] = rep.se->used;
    se["bootstrap_dropped_fraction"] = rep.se->dropped_fraction();
    j["standard_errors"] = se;
  } else {
    j["standard_errors"] = nullptr;
  }
  json gof;
  gof["phi"] = rep.gof_phi ? gof_json(*rep.gof_phi) : json(nullptr);
  gof["psi"] = rep.gof_psi ? gof_json(*rep.gof_psi) : json(nullptr);
  j["gof"] = gof;
  json fits;
  if (!rep.weights_degenerate) {
    fits["outcome_design"] = rep.fits.beta.design.describe();
    fits["beta_y"] = vector_json(rep.fits.beta.beta_y);
    fits["sigma_y"] = rep.fits.beta.sigma_y;
    fits["beta_zy"] = rep.fits.beta.beta_zy;
    fits["beta_zx"] = vector_json(rep.fits.beta.beta_zx);
    fits["sigma_z"] = rep.fits.beta.sigma_z;
    fits["propensity_design"] = rep.fits.alpha.design.describe();
    fits["alpha"] = vector_json(rep.fits.alpha.alpha);
    json terms = json::array();
    for (const auto& t : rep.fits.gamma.basis) terms.push_back(t.name());
    fits["odds_ratio_terms"] = terms;
    fits["gamma"] = vector_json(rep.fits.gamma.gamma);
    fits["alpha_gamma_solver"] = fit_json(rep.alpha_gamma_fit);
    fits["phi_solver"] = fit_json(rep.phi_fit);
    fits["psi_solver"] = fit_json(rep.psi_fit);
  }
  j["fits"] = fits;
  json diag;
  diag["mean_extended_weight"] = number_or_null(rep.mean_extended_weight);
  diag["observed_min"] = rep.observed_min;
  diag["observed_max"] = rep.observed_max;
  diag["mu3_out_of_range"] = rep.mu3_out_of_range;
  diag["weights_degenerate"] = rep.weights_degenerate;
  j["diagnostics"] = diag;
  j["warnings"] = rep.warnings;
  return j;
}

inline std::string verdict(const char* model, const GofTestResult& g) {
  std::ostringstream os;
  if (g.rejects()) {
    os << "the baseline " << model << " model is suspect (p = " << std::setprecision(3) << g.p_value << " < 0.05)";
  } else {
    os << "no evidence against the baseline " << model << " model (p = " << std::setprecision(3) << g.p_value
       << ")";
  }
  return os.str();
}

inline void print_report(std::ostream& out, const EstimateReport& rep) {
  auto line = [&](const char* name, double est, std::optional<double> se) {
    out << "  " << std::left << std::setw(8) << name << std::right << std::setw(14) << std::setprecision(6)
        << std::fixed << est;
    if (se) out << std::setw(14) << *se;
    out << '\n';
  };
  out << "  " << std::left << std::setw(8) << "stat" << std::right << std::setw(14) << "estimate";
  if (rep.se) out << std::setw(14) << "boot_se";
  out << '\n';
  auto se = [&](double StandardErrors::*m) -> std::optional<double> {
    if (!rep.se) return std::nullopt;
    return (*rep.se).*m;
  };
  line("mu_reg", rep.mu_reg, se(&StandardErrors::mu_reg));
  line("mu1", rep.mu1, se(&StandardErrors::mu1));
  line("mu2", rep.mu2, se(&StandardErrors::mu2));
  line("mu3", rep.mu3, se(&StandardErrors::mu3));
  line("phi", rep.phi_hat, se(&StandardErrors::phi));
  line("psi", rep.psi_hat, se(&StandardErrors::psi));
  out.unsetf(std::ios::fixed);
  if (rep.gof_phi) out << "  phi test: " << verdict("propensity", *rep.gof_phi) << '\n';
  if (rep.gof_psi) out << "  psi test: " << verdict("outcome", *rep.gof_psi) << '\n';
  for (const auto& w : rep.warnings) out << "  warning: " << w << '\n';
}

inline json error_json(const Error& e) {
  json j;
  j["kind"] = e.kind();
  j["message"] = e.what();
  j["exit_code"] = static_cast<int>(e.exit_code());
  if (const auto* s = dynamic_cast<const SolverError*>(&e)) {
    j["final_moment_norm"] = number_or_null(s->final_norm());
    j["path"] = s->path();
  }
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["line"] = p->line();
  return json{{"error", j}};
}

// ---------------------------------------------------------------------------
// Study results

inline json scenario_json(const sim::ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["n"] = c.n;
  j["p"] = c.p;
  j["a0"] = c.a0;
  j["a"] = c.a;
  j["a_q"] = c.a_q;
  j["sigma"] = c.sigma;
  j["b_y"] = c.b_y;
  j["b"] = c.b;
  j["b_q"] = c.b_q;
  j["tau"] = c.tau;
  j["c0"] = c.c0;
  j["c"] = c.c;
  j["c_q"] = c.c_q;
  j["c_y"] = c.c_y;
  j["misspecify_outcome"] = c.misspecify_outcome;
  j["misspecify_propensity"] = c.misspecify_propensity;
  return j;
}

inline json study_json(const sim::StudyResult& res, const sim::StudyConfig& study, const Provenance& prov) {
  json j;
  j["provenance"] = prov.to_json();
  j["replications"] = study.replications;
  j["bootstrap_replicates"] = study.bootstrap_replicates;
  j["truth_draws"] = study.truth_draws;
  json arr = json::array();
  for (const auto& s : res.scenarios) {
    json sj;
    sj["scenario"] = scenario_json(s.config);
    sj["true_mean"] = s.truth.analytic;
    sj["true_mean_monte_carlo"] = s.truth.monte_carlo.mean;
    sj["true_mean_monte_carlo_se"] = s.truth.monte_carlo.se;
    sj["replications"] = s.replications;
    sj["failures"] = s.failures;
    sj["failure_kinds"] = s.failure_kinds;
    json est = json::array();
    for (const auto& e : s.estimators) {
      json ej;
      ej["estimator"] = e.name;
      ej["target"] = e.truth;
      ej["count"] = e.count;
      ej["mean"] = number_or_null(e.mean);
      ej["bias"] = number_or_null(e.bias);
      ej["mc_sd"] = number_or_null(e.mc_sd);
      ej["mc_se"] = number_or_null(e.mc_se);
      ej["boot_se_mean"] = number_or_null(e.boot_se_mean);
      ej["coverage"] = number_or_null(e.coverage);
      est.push_back(ej);
    }
    sj["estimators"] = est;
    sj["gof_tests"] = s.gof_count;
    sj["reject_phi"] = number_or_null(s.reject_phi);
    sj["reject_psi"] = number_or_null(s.reject_psi);
    arr.push_back(sj);
  }
  j["scenarios"] = arr;
  return j;
}

/// One row per scenario x estimator.
inline void write_summary_csv(std::ostream& out, const sim::StudyResult& res) {
  out << "scenario,estimator,target,count,mean,bias,mc_sd,mc_se,boot_se_mean,coverage,reject_phi,reject_psi,"
         "failures\n";
  for (const auto& s : res.scenarios) {
    for (const auto& e : s.estimators) {
      out << s.config.name << ',' << e.name << ',' << format_double(e.truth) << ',' << e.count << ','
          << format_double(e.mean) << ',' << format_double(e.bias) << ',' << format_double(e.mc_sd) << ','
          << format_double(e.mc_se) << ',' << format_double(e.boot_se_mean) << ',' << format_double(e.coverage)
          << ',' << format_double(s.reject_phi) << ',' << format_double(s.reject_psi) << ',' << s.failures << '\n';
    }
  }
}

/// Long format for plotting: scenario, estimator, replication, estimate, se.
inline void write_replications_csv(std::ostream& out, const sim::StudyResult& res) {
  out << "scenario,estimator,replication,estimate,se,failure\n";
  for (const auto& s : res.scenarios) {
    for (std::size_t r = 0; r < s.records.size(); ++r) {
      const auto& rec = s.records[r];
      for (std::size_t k = 0; k < sim::kStatisticNames.size(); ++k) {
        out << s.config.name << ',' << sim::kStatisticNames[k] << ',' << r << ',' << format_double(rec.estimate[k])
            << ',' << format_double(rec.se[k]) << ',' << rec.failure_kind << '\n';
      }
    }
  }
}

inline void print_study(std::ostream& out, const sim::StudyResult& res) {
  for (const auto& s : res.scenarios) {
    out << s.config.name << ": truth " << std::setprecision(6) << s.truth.analytic << ", " << s.replications
        << " replications, " << s.failures << " failures\n";
    out << "  " << std::left << std::setw(8) << "stat" << std::right << std::setw(12) << "mean" << std::setw(12)
        << "bias" << std::setw(12) << "mc_sd" << std::setw(10) << "bias/se" << std::setw(12) << "boot_se"
        << std::setw(10) << "cover" << '\n';
    for (const auto& e : s.estimators) {
      out << "  " << std::left << std::setw(8) << e.name << std::right << std::fixed << std::setprecision(5)
          << std::setw(12) << e.mean << std::setw(12) << e.bias << std::setw(12) << e.mc_sd << std::setprecision(2)
          << std::setw(10) << (e.mc_se > 0 ? e.bias / e.mc_se : 0.0) << std::setprecision(5) << std::setw(12)
          << e.boot_se_mean << std::setprecision(3) << std::setw(10) << e.coverage << '\n';
      out.unsetf(std::ios::fixed);
    }
    if (s.gof_count > 0) {
      out << "  rejection rate at 0.05: phi " << std::setprecision(3) << s.reject_phi << ", psi " << s.reject_psi
          << '\n';
    }
  }
}

}  // namespace shadowdr::io
