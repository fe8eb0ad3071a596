#pragma once

/// \file
/// File formats: incidence CSV (day,date,count), per-chain draw CSVs, summary
/// tables, and the JSON run configuration.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epihmc/diagnostics.hpp"
#include "epihmc/fit.hpp"
#include "epihmc/posterior.hpp"
#include "epihmc/sampler.hpp"
#include "epihmc/synthdata.hpp"

namespace epihmc {

// ---------------------------------------------------------------- dates

inline std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::optional<std::chrono::sys_days> parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days(ymd);
}

// ---------------------------------------------------------------- numbers

/// Shortest text that round-trips through parsing, at most 17 significant digits.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for doubles is available but strtod accepts inf/nan spellings we also write.
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
  } else {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
  }
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw DataError("error while writing " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------- incidence

inline void write_incidence_csv(const std::filesystem::path& path, const IncidenceSeries& series) {
  auto out = detail::open_for_write(path);
  out << "day,date,count\n";
  for (std::size_t j = 0; j < series.counts.size(); ++j) {
    const auto day = static_cast<int>(j + 1);
    out << day << ',' << format_date(series.start_date + std::chrono::days{day}) << ',' << series.counts[j] << '\n';
  }
  detail::finish_write(out, path);
}

/// Reads day,date,count rows. Days must run 1, 2, ..., n and dates must
/// advance with them. Errors name the offending line.
inline IncidenceSeries read_incidence_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  IncidenceSeries series;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  ++line_no;
  if (detail::strip_cr(line) != "day,date,count") {
    throw DataError(path.string() + ":1: expected header 'day,date,count'");
  }
  std::optional<std::chrono::sys_days> start;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw DataError(where + "expected 3 fields, found " + std::to_string(fields.size()));
    int day = 0;
    std::int64_t count = 0;
    if (!detail::parse_number(fields[0], day)) throw DataError(where + "day '" + fields[0] + "' is not an integer");
    const auto date = parse_date(fields[1]);
    if (!date) throw DataError(where + "date '" + fields[1] + "' is not YYYY-MM-DD");
    if (!detail::parse_number(fields[2], count)) {
      throw DataError(where + "count '" + fields[2] + "' is not an integer");
    }
    if (count < 0) throw DataError(where + "count must be non-negative");
    const int expected = static_cast<int>(series.counts.size()) + 1;
    if (day != expected) {
      throw DataError(where + "day " + std::to_string(day) + " out of sequence, expected " + std::to_string(expected));
    }
    if (!start) start = *date - std::chrono::days{day};
    if (*date != *start + std::chrono::days{day}) throw DataError(where + "date does not match day offset");
    series.counts.push_back(count);
  }
  if (series.counts.empty()) throw DataError(path.string() + ": no data rows");
  series.start_date = *start;
  return series;
}

// ---------------------------------------------------------------- chains

inline void write_chain_csv(const std::filesystem::path& path, const ModelSpec& spec, const ChainDraws& chain) {
  auto out = detail::open_for_write(path);
  out << "iteration,accepted,log_posterior";
  for (const auto& name : param_names(spec)) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < chain.draws.size(); ++i) {
    out << (i + 1) << ',' << (chain.accepted[i] ? 1 : 0) << ',' << format_double(chain.log_posterior[i]);
    for (double v : flatten(spec, chain.draws[i])) out << ',' << format_double(v);
    out << '\n';
  }
  detail::finish_write(out, path);
}

inline ChainDraws read_chain_csv(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open chain file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::string expected = "iteration,accepted,log_posterior";
  for (const auto& name : param_names(spec)) expected += "," + name;
  if (detail::strip_cr(line) != expected) {
    throw DataError(path.string() + ":1: header does not match the configured model");
  }
  ChainDraws chain;
  const std::size_t width = param_names(spec).size() + 3;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != width) throw DataError(where + "expected " + std::to_string(width) + " fields");
    int accepted = 0;
    double lp = 0.0;
    if (!detail::parse_number(fields[1], accepted) || (accepted != 0 && accepted != 1)) {
      throw DataError(where + "accepted must be 0 or 1");
    }
    if (!detail::parse_number(fields[2], lp)) throw DataError(where + "bad log_posterior");
    std::vector<double> flat(width - 3);
    for (std::size_t k = 0; k < flat.size(); ++k) {
      if (!detail::parse_number(fields[k + 3], flat[k])) throw DataError(where + "bad value '" + fields[k + 3] + "'");
    }
    chain.accepted.push_back(accepted == 1);
    chain.log_posterior.push_back(lp);
    chain.draws.push_back(unflatten(spec, flat));
  }
  return chain;
}

// ---------------------------------------------------------------- summaries

inline void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table) {
  auto out = detail::open_for_write(path);
  out << "day,lower,median,upper\n";
  for (std::size_t j = 0; j < table.size(); ++j) {
    out << format_double(table.times[j]);
    if (j < table.median.size()) {
      out << ',' << format_double(table.lower[j]) << ',' << format_double(table.median[j]) << ','
          << format_double(table.upper[j]);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  detail::finish_write(out, path);
}

inline std::string format_rhat(const RhatResult& r) {
  if (r.degenerate) return "degenerate";
  if (std::isnan(r.value)) return "NA";
  return format_double(r.value);
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<ParameterDiagnostics>& diag) {
  auto out = detail::open_for_write(path);
  out << "parameter,mean,sd,q2.5,median,q97.5,rhat,rhat_whole_chains,ess,converged\n";
  for (const auto& d : diag) {
    const bool converged = !d.rhat.degenerate && d.rhat.value < 1.1;
    out << d.name << ',' << format_double(d.mean) << ',' << format_double(d.sd) << ',' << format_double(d.q025)
        << ',' << format_double(d.median) << ',' << format_double(d.q975) << ',' << format_rhat(d.rhat) << ','
        << format_rhat(d.rhat_plain) << ',' << format_double(d.ess) << ',' << (converged ? "yes" : "no") << '\n';
  }
  detail::finish_write(out, path);
}

inline void write_chains_table_csv(const std::filesystem::path& path, const ChainSet& set) {
  auto out = detail::open_for_write(path);
  out << "chain,seed,draws,acceptance,step_size,leaps,integration_failures,error\n";
  for (const auto& c : set.chains) {
    std::string err = c.error.value_or("");
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out << c.chain << ',' << c.seed << ',' << c.draws.size() << ',' << format_double(c.acceptance_rate()) << ','
        << format_double(c.settings.step_size) << ',' << c.settings.leaps << ',' << c.integration_failures << ','
        << err << '\n';
  }
  detail::finish_write(out, path);
}

/// Diagnostics and summary tables for a finished run.
struct RunOutputs {
  std::vector<ParameterDiagnostics> diagnostics;
  std::optional<BetaR0Summary> beta_r0;
  std::optional<PredictiveSummary> predictive;
  std::vector<std::filesystem::path> files;
};

/// Writes chain_<k>.csv (optional), chains.csv, diagnostics.csv,
/// beta_summary.csv, r0_summary.csv and, given data, predictive.csv.
inline RunOutputs write_run_outputs(const std::filesystem::path& dir, const ChainSet& set,
                                    const IncidenceSeries* data, std::uint64_t seed, const Tolerances& tol,
                                    bool write_chains = true) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  RunOutputs out;
  auto add = [&](const std::string& name) { return out.files.emplace_back(dir / name); };
  if (write_chains) {
    for (const auto& c : set.chains) write_chain_csv(add("chain_" + std::to_string(c.chain) + ".csv"), set.spec, c);
  }
  write_chains_table_csv(add("chains.csv"), set);
  out.diagnostics = diagnose(set);
  write_diagnostics_csv(add("diagnostics.csv"), out.diagnostics);

  const auto pooled = set.pooled();
  if (!pooled.empty()) {
    out.beta_r0 = summarize_beta_r0(set.spec, pooled);
    write_summary_csv(add("beta_summary.csv"), out.beta_r0->beta);
    write_summary_csv(add("r0_summary.csv"), out.beta_r0->r0);
  } else {
    write_summary_csv(add("beta_summary.csv"), SummaryTable{});
    write_summary_csv(add("r0_summary.csv"), SummaryTable{});
  }
  if (data != nullptr) {
    out.predictive = posterior_predictive(set.spec, pooled, *data, seed, tol);
    write_summary_csv(add("predictive.csv"), out.predictive->counts);
  }
  return out;
}

// ---------------------------------------------------------------- config

/// Everything a run needs. Only the data path and the population N lack
/// defaults; they are checked by the commands that need them.
struct RunConfig {
  ModelSpec model{};
  std::optional<double> population;
  PriorConfig priors{};
  UnderReporting eta{};
  HMCSettings sampler{};
  bool adapt = true;
  WarmStart warm_start{};
  double rtol = 1e-8;
  double atol_scale = 1e-8;
  std::string data_path;
  std::string output_dir = "out";
  // synthetic generation
  double wave_a = 50.0;
  double wave_b = 4.0;
  DispersionConvention convention = DispersionConvention::kInverse;

  ModelSpec resolved_model() const {
    if (!population) throw InvalidArgument("population N is not set (model.N or --N)");
    ModelSpec spec = model;
    spec.N = *population;
    spec.validate();
    return spec;
  }

  void validate() const {
    model.validate();
    if (population && !(*population > 0.0)) throw InvalidArgument("population N must be positive");
    priors.validate();
    eta.validate();
    sampler.validate();
    if (!(warm_start.learning_rate >= 0.0)) throw InvalidArgument("warm-start learning rate must be >= 0");
    if (warm_start.steps < 0) throw InvalidArgument("warm-start steps must be >= 0");
    if (!(rtol > 0.0 && atol_scale > 0.0)) throw InvalidArgument("solver tolerances must be positive");
    if (!(wave_a > 0.0 && wave_b > 0.0)) throw InvalidArgument("wave parameters must be positive");
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw InvalidArgument("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read_if(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("bad value for " + where + "." + key);
  }
}

inline json prior_to_json(const Prior& prior) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return {{"dist", "normal"}, {"mean", p.mean}, {"sd", p.sd}};
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior>) {
          return {{"dist", "truncated_normal"}, {"mean", p.mean}, {"sd", p.sd}, {"lower", p.lower}, {"upper", p.upper}};
        } else if constexpr (std::is_same_v<T, UniformPrior>) {
          return {{"dist", "uniform"}, {"lower", p.lower}, {"upper", p.upper}};
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          return {{"dist", "exponential"}, {"rate", p.rate}};
        } else {
          return {{"dist", "inverse_gamma"}, {"shape", p.shape}, {"scale", p.scale}};
        }
      },
      prior);
}

inline Prior prior_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("dist")) throw InvalidArgument(where + " needs a 'dist' field");
  const auto dist = j.at("dist").get<std::string>();
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) throw InvalidArgument(where + " needs numeric '" + key + "'");
    return j.at(key).get<double>();
  };
  Prior p;
  if (dist == "normal") {
    reject_unknown(j, {"dist", "mean", "sd"}, where);
    p = NormalPrior{num("mean"), num("sd")};
  } else if (dist == "truncated_normal") {
    reject_unknown(j, {"dist", "mean", "sd", "lower", "upper"}, where);
    p = TruncatedNormalPrior{num("mean"), num("sd"), num("lower"), num("upper")};
  } else if (dist == "uniform") {
    reject_unknown(j, {"dist", "lower", "upper"}, where);
    p = UniformPrior{num("lower"), num("upper")};
  } else if (dist == "exponential") {
    reject_unknown(j, {"dist", "rate"}, where);
    p = ExponentialPrior{num("rate")};
  } else if (dist == "inverse_gamma") {
    reject_unknown(j, {"dist", "shape", "scale"}, where);
    p = InverseGammaPrior{num("shape"), num("scale")};
  } else {
    throw InvalidArgument(where + ": unknown distribution '" + dist + "'");
  }
  validate_prior(p);
  return p;
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  using nlohmann::json;
  json j;
  j["model"] = {{"family", to_string(c.model.family)}, {"M", c.model.M}, {"K", c.model.K}, {"horizon", c.model.horizon}};
  if (c.population) j["model"]["N"] = *c.population;
  j["spline"] = {{"t0", c.model.spline.t0},
                 {"t1", c.model.spline.t1},
                 {"Q", c.model.spline.internal_knots},
                 {"degree", c.model.spline.degree}};
  j["priors"] = {{"alpha", detail::prior_to_json(c.priors.alpha)},
                 {"gamma", detail::prior_to_json(c.priors.gamma)},
                 {"seed0", detail::prior_to_json(c.priors.seed0)},
                 {"phi_inv", detail::prior_to_json(c.priors.phi_inv)},
                 {"tau", detail::prior_to_json(c.priors.tau)},
                 {"tau_prior_on", c.priors.tau_target == TauPriorTarget::kTau ? "tau" : "tau_squared"},
                 {"pspline_order", c.priors.pspline_order}};
  j["under_reporting"] = json::array();
  for (const auto& [day, frac] : c.eta.breakpoints) j["under_reporting"].push_back({day, frac});
  j["sampler"] = {{"step_size", c.sampler.step_size},
                  {"leaps", c.sampler.leaps},
                  {"jitter", c.sampler.jitter},
                  {"psi", c.sampler.psi},
                  {"n_burnin", c.sampler.n_burnin},
                  {"n_production", c.sampler.n_production},
                  {"n_chains", c.sampler.n_chains},
                  {"adapt", c.adapt},
                  {"target_accept", c.sampler.target_accept},
                  {"max_leaps", c.sampler.max_leaps},
                  {"momentum_on_accept", c.sampler.momentum_on_accept == MomentumOnAccept::kPreTrajectory
                                             ? "pre_trajectory"
                                             : "post_trajectory"}};
  if (!c.sampler.mass.empty()) j["sampler"]["mass"] = c.sampler.mass;
  j["warm_start"] = {{"learning_rate", c.warm_start.learning_rate}, {"steps", c.warm_start.steps}};
  j["solver"] = {{"rtol", c.rtol}, {"atol_scale", c.atol_scale}};
  j["synth"] = {{"a", c.wave_a},
                {"b", c.wave_b},
                {"dispersion", c.convention == DispersionConvention::kDirect ? "direct" : "inverse"}};
  if (!c.data_path.empty()) j["data"] = c.data_path;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.sampler.seed;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_if;
  using detail::reject_unknown;
  RunConfig c;
  reject_unknown(j, {"model", "spline", "priors", "under_reporting", "sampler", "warm_start", "solver", "synth", "data",
                     "output_dir", "seed"},
                 "config");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"family", "M", "K", "N", "horizon"}, "model");
    if (m.contains("family")) c.model.family = parse_family(m.at("family").get<std::string>());
    read_if(m, "M", c.model.M, "model");
    read_if(m, "K", c.model.K, "model");
    read_if(m, "horizon", c.model.horizon, "model");
    if (m.contains("N")) {
      double n = 0.0;
      read_if(m, "N", n, "model");
      c.population = n;
    }
  }
  if (j.contains("spline")) {
    const auto& s = j.at("spline");
    reject_unknown(s, {"t0", "t1", "Q", "degree"}, "spline");
    read_if(s, "t0", c.model.spline.t0, "spline");
    read_if(s, "t1", c.model.spline.t1, "spline");
    read_if(s, "Q", c.model.spline.internal_knots, "spline");
    read_if(s, "degree", c.model.spline.degree, "spline");
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    reject_unknown(p, {"preset", "alpha", "gamma", "seed0", "phi_inv", "tau", "tau_prior_on", "pspline_order"},
                   "priors");
    if (p.contains("preset")) {
      const auto preset = p.at("preset").get<std::string>();
      if (preset == "benchmark") {
        c.priors = PriorConfig::synthetic_benchmark();
      } else if (preset == "regional") {
        c.priors = PriorConfig::regional_study();
      } else {
        throw InvalidArgument("unknown prior preset '" + preset + "' (benchmark or regional)");
      }
    }
    if (p.contains("alpha")) c.priors.alpha = detail::prior_from_json(p.at("alpha"), "priors.alpha");
    if (p.contains("gamma")) c.priors.gamma = detail::prior_from_json(p.at("gamma"), "priors.gamma");
    if (p.contains("seed0")) c.priors.seed0 = detail::prior_from_json(p.at("seed0"), "priors.seed0");
    if (p.contains("phi_inv")) c.priors.phi_inv = detail::prior_from_json(p.at("phi_inv"), "priors.phi_inv");
    if (p.contains("tau")) c.priors.tau = detail::prior_from_json(p.at("tau"), "priors.tau");
    if (p.contains("tau_prior_on")) {
      const auto on = p.at("tau_prior_on").get<std::string>();
      if (on == "tau") {
        c.priors.tau_target = TauPriorTarget::kTau;
      } else if (on == "tau_squared") {
        c.priors.tau_target = TauPriorTarget::kTauSquared;
      } else {
        throw InvalidArgument("priors.tau_prior_on must be 'tau' or 'tau_squared'");
      }
    }
    read_if(p, "pspline_order", c.priors.pspline_order, "priors");
  }
  if (j.contains("under_reporting")) {
    const auto& u = j.at("under_reporting");
    if (!u.is_array()) throw InvalidArgument("under_reporting must be a list of [day, fraction] pairs");
    for (const auto& pair : u) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
        throw InvalidArgument("under_reporting entries must be [day, fraction]");
      }
      c.eta.breakpoints.emplace_back(pair[0].get<double>(), pair[1].get<double>());
    }
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    reject_unknown(s, {"step_size", "leaps", "jitter", "psi", "n_burnin", "n_production", "n_chains", "adapt",
                       "target_accept", "max_leaps", "momentum_on_accept", "mass"},
                   "sampler");
    read_if(s, "step_size", c.sampler.step_size, "sampler");
    read_if(s, "leaps", c.sampler.leaps, "sampler");
    read_if(s, "jitter", c.sampler.jitter, "sampler");
    read_if(s, "psi", c.sampler.psi, "sampler");
    read_if(s, "n_burnin", c.sampler.n_burnin, "sampler");
    read_if(s, "n_production", c.sampler.n_production, "sampler");
    read_if(s, "n_chains", c.sampler.n_chains, "sampler");
    read_if(s, "adapt", c.adapt, "sampler");
    read_if(s, "target_accept", c.sampler.target_accept, "sampler");
    read_if(s, "max_leaps", c.sampler.max_leaps, "sampler");
    read_if(s, "mass", c.sampler.mass, "sampler");
    if (s.contains("momentum_on_accept")) {
      const auto m = s.at("momentum_on_accept").get<std::string>();
      if (m == "pre_trajectory") {
        c.sampler.momentum_on_accept = MomentumOnAccept::kPreTrajectory;
      } else if (m == "post_trajectory") {
        c.sampler.momentum_on_accept = MomentumOnAccept::kPostTrajectory;
      } else {
        throw InvalidArgument("sampler.momentum_on_accept must be 'pre_trajectory' or 'post_trajectory'");
      }
    }
  }
  if (j.contains("warm_start")) {
    const auto& w = j.at("warm_start");
    reject_unknown(w, {"learning_rate", "steps"}, "warm_start");
    read_if(w, "learning_rate", c.warm_start.learning_rate, "warm_start");
    read_if(w, "steps", c.warm_start.steps, "warm_start");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    reject_unknown(s, {"rtol", "atol_scale"}, "solver");
    read_if(s, "rtol", c.rtol, "solver");
    read_if(s, "atol_scale", c.atol_scale, "solver");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s, {"a", "b", "dispersion"}, "synth");
    read_if(s, "a", c.wave_a, "synth");
    read_if(s, "b", c.wave_b, "synth");
    if (s.contains("dispersion")) {
      const auto d = s.at("dispersion").get<std::string>();
      if (d == "inverse") {
        c.convention = DispersionConvention::kInverse;
      } else if (d == "direct") {
        c.convention = DispersionConvention::kDirect;
      } else {
        throw InvalidArgument("synth.dispersion must be 'inverse' or 'direct'");
      }
    }
  }
  read_if(j, "data", c.data_path, "config");
  read_if(j, "output_dir", c.output_dir, "config");
  read_if(j, "seed", c.sampler.seed, "config");
  c.validate();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------- truth sidecar

inline void write_truth_json(const std::filesystem::path& path, const ModelSpec& spec, const SyntheticDataset& ds,
                             const SyntheticRecipe& recipe) {
  nlohmann::json j;
  const auto names = param_names(spec);
  const auto flat = flatten(spec, ds.parameters);
  for (std::size_t k = 0; k < names.size(); ++k) j["parameters"][names[k]] = flat[k];
  j["true_means"] = ds.true_means;
  j["dispersion"] = ds.dispersion;
  j["a"] = recipe.a;
  j["b"] = recipe.b;
  j["seed"] = recipe.seed;
  j["model"] = spec.name();
  j["N"] = spec.N;
  auto out = detail::open_for_write(path);
  out << j.dump(2) << '\n';
  detail::finish_write(out, path);
}

}  // namespace epihmc
