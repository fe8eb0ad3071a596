// Command-line front end: synth, fit, gradcheck, diagnose.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "epihmc/epihmc.hpp"

namespace fs = std::filesystem;
using namespace epihmc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int thread_count() {
  if (const char* env = std::getenv("EPIHMC_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("EPIHMC_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Flags shared by every subcommand; unset optionals leave the config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::string> data, out, family, prior_preset, dispersion;
  std::optional<double> population, t1, psi, learning_rate, step_size, a, b;
  std::optional<int> M, K, Q, degree, horizon, chains, burnin, production, leaps, warm_steps;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> eta;
  bool no_adapt = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--data", data, "incidence CSV (day,date,count)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "master RNG seed");
    cmd->add_option("--family", family, "SIKR or SEMIKR");
    cmd->add_option("--M", M, "exposed stages");
    cmd->add_option("--K", K, "infectious stages");
    cmd->add_option("--N,--n", population, "population size");
    cmd->add_option("--Q", Q, "spline knots including both ends");
    cmd->add_option("--degree", degree, "spline degree");
    cmd->add_option("--t1", t1, "right end of the spline window (days)");
    cmd->add_option("--horizon", horizon, "days to simulate");
    cmd->add_option("--priors", prior_preset, "prior preset: benchmark or regional");
    cmd->add_option("--eta", eta, "under-reporting breakpoint DAY:FRACTION (repeatable)");
    cmd->add_option("--chains", chains, "number of chains");
    cmd->add_option("--burnin", burnin, "burn-in steps per chain");
    cmd->add_option("--production", production, "production steps per chain");
    cmd->add_option("--psi", psi, "momentum mixing parameter in (0, 1]");
    cmd->add_option("--step-size", step_size, "initial leapfrog step size");
    cmd->add_option("--leaps", leaps, "leapfrog steps per proposal");
    cmd->add_flag("--no-adapt", no_adapt, "keep step size, leaps and mass fixed");
    cmd->add_option("--learning-rate", learning_rate, "warm-start learning rate");
    cmd->add_option("--warm-steps", warm_steps, "warm-start gradient steps");
    cmd->add_option("--a", a, "wave period scale for synth");
    cmd->add_option("--b", b, "wave amplitude divisor for synth");
    cmd->add_option("--dispersion", dispersion, "synth draw convention: inverse (phi = 1/phi_inv) or direct");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (data) c.data_path = *data;
    if (out) c.output_dir = *out;
    if (seed) c.sampler.seed = *seed;
    if (family) c.model.family = parse_family(*family);
    if (M) c.model.M = *M;
    if (K) c.model.K = *K;
    if (population) c.population = *population;
    if (Q) c.model.spline.internal_knots = *Q;
    if (degree) c.model.spline.degree = *degree;
    if (t1) c.model.spline.t1 = *t1;
    if (horizon) c.model.horizon = *horizon;
    if (prior_preset) {
      if (*prior_preset == "benchmark") {
        c.priors = PriorConfig::synthetic_benchmark();
      } else if (*prior_preset == "regional") {
        c.priors = PriorConfig::regional_study();
      } else {
        throw InvalidArgument("--priors must be benchmark or regional");
      }
    }
    if (!eta.empty()) {
      c.eta.breakpoints.clear();
      for (const auto& e : eta) {
        const auto colon = e.find(':');
        if (colon == std::string::npos) throw InvalidArgument("--eta expects DAY:FRACTION, got '" + e + "'");
        try {
          c.eta.breakpoints.emplace_back(std::stod(e.substr(0, colon)), std::stod(e.substr(colon + 1)));
        } catch (const std::exception&) {
          throw InvalidArgument("--eta expects DAY:FRACTION, got '" + e + "'");
        }
      }
    }
    if (chains) c.sampler.n_chains = *chains;
    if (burnin) c.sampler.n_burnin = *burnin;
    if (production) c.sampler.n_production = *production;
    if (psi) c.sampler.psi = *psi;
    if (step_size) c.sampler.step_size = *step_size;
    if (leaps) c.sampler.leaps = *leaps;
    if (no_adapt) c.adapt = false;
    if (learning_rate) c.warm_start.learning_rate = *learning_rate;
    if (warm_steps) c.warm_start.steps = *warm_steps;
    if (a) c.wave_a = *a;
    if (b) c.wave_b = *b;
    if (dispersion) {
      if (*dispersion == "inverse") {
        c.convention = DispersionConvention::kInverse;
      } else if (*dispersion == "direct") {
        c.convention = DispersionConvention::kDirect;
      } else {
        throw InvalidArgument("--dispersion must be inverse or direct");
      }
    }
    c.validate();
    return c;
  }
};

Tolerances tolerances(const RunConfig& c, double n) { return Tolerances::for_population(n, c.rtol, c.atol_scale); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

int cmd_synth(const RunConfig& c, const std::string& scenario) {
  SyntheticRecipe recipe;
  if (scenario == "regional") {
    recipe = regional_standin(c.sampler.seed);
    if (c.population) recipe.model.N = *c.population;
    if (!c.eta.breakpoints.empty()) recipe.eta = c.eta;
  } else if (scenario == "benchmark") {
    recipe.a = c.wave_a;
    recipe.b = c.wave_b;
    recipe.model = c.model;
    recipe.model.N = c.population.value_or(recipe.model.N);
    recipe.model.validate();
    recipe.parameters = wave_parameters(recipe.model, recipe.a, recipe.b);
    recipe.eta = c.eta;
  } else {
    throw InvalidArgument("--scenario must be benchmark or regional");
  }
  recipe.seed = c.sampler.seed;
  recipe.convention = c.convention;
  const auto ds = generate_dataset(recipe, tolerances(c, recipe.model.N));
  const fs::path dir = c.output_dir;
  ensure_dir(dir);
  write_incidence_csv(dir / "data.csv", ds.series);
  write_truth_json(dir / "truth.json", recipe.model, ds, recipe);
  std::cout << "wrote " << (dir / "data.csv").string() << " and " << (dir / "truth.json").string() << '\n';
  return kExitOk;
}

IncidenceSeries load_data(const RunConfig& c, ModelSpec& spec) {
  if (c.data_path.empty()) throw InvalidArgument("no data file given (config 'data' or --data)");
  IncidenceSeries data = read_incidence_csv(c.data_path);
  data.eta = c.eta;
  spec.horizon = static_cast<int>(data.size());
  spec.validate();
  return data;
}

int cmd_fit(const RunConfig& c) {
  ModelSpec spec = c.resolved_model();
  const IncidenceSeries data = load_data(c, spec);
  PosteriorOptions opts;
  opts.rtol = c.rtol;
  opts.atol_scale = c.atol_scale;
  const Posterior posterior(spec, data, c.priors, opts);

  const fs::path dir = c.output_dir;
  ensure_dir(dir);
  {
    std::ofstream cfg(dir / "config.json");
    RunConfig used = c;
    used.model = spec;
    cfg << serialize_config(used);
  }

  std::mutex log_mutex;
  std::vector<std::ofstream> logs;
  for (int k = 0; k < c.sampler.n_chains; ++k) {
    logs.emplace_back(dir / ("progress_chain_" + std::to_string(k) + ".jsonl"));
  }
  RunOptions run;
  run.adapt = c.adapt;
  run.progress = [&](const ProgressRecord& r) {
    const std::lock_guard<std::mutex> lock(log_mutex);
    nlohmann::json j = {{"chain", r.chain},
                        {"step", r.iteration},
                        {"log_density", r.log_density},
                        {"acceptance", r.acceptance},
                        {"step_size", r.step_size}};
    logs[static_cast<std::size_t>(r.chain)] << j.dump() << std::endl;
  };

  const ChainSet set = fit_posterior(posterior, c.sampler, c.warm_start, thread_count(), run);
  const auto outputs = write_run_outputs(dir, set, &data, c.sampler.seed, posterior.tolerances());

  int failed = 0;
  for (const auto& ch : set.chains) {
    if (ch.error) {
      ++failed;
      std::cerr << "error: " << *ch.error << '\n';
    }
  }
  for (const auto& d : outputs.diagnostics) {
    if (d.rhat.degenerate || !(d.rhat.value < 1.1)) {
      std::cerr << "warning: " << d.name << " not converged (R-hat " << format_rhat(d.rhat) << ")\n";
    }
  }
  std::cout << "wrote " << outputs.files.size() << " files to " << dir.string() << '\n';
  return failed == static_cast<int>(set.chains.size()) ? kExitNumerical : kExitOk;
}

int cmd_gradcheck(const RunConfig& c, int points, bool all_models, double corrupt) {
  std::vector<ModelSpec> specs;
  ModelSpec base = c.model;
  base.N = c.population.value_or(base.N);
  if (all_models) {
    for (const auto& [family, m, k] :
         {std::tuple{ModelFamily::SIKR, 1, 1}, std::tuple{ModelFamily::SIKR, 1, 3},
          std::tuple{ModelFamily::SEMIKR, 1, 1}, std::tuple{ModelFamily::SEMIKR, 1, 3}}) {
      ModelSpec s = base;
      s.family = family;
      s.M = m;
      s.K = k;
      specs.push_back(s);
    }
  } else {
    specs.push_back(base);
  }

  IncidenceSeries data;
  if (!c.data_path.empty()) {
    data = load_data(c, specs.front());
    for (auto& s : specs) s.horizon = specs.front().horizon;
  } else {
    SyntheticRecipe recipe;
    recipe.model.N = base.N;
    recipe.model.horizon = base.horizon;
    recipe.seed = c.sampler.seed;
    data = generate_dataset(recipe).series;
  }
  data.eta = c.eta;

  PosteriorOptions opts;
  opts.rtol = 1e-12;
  opts.atol_scale = 1e-12;
  opts.sensitivity.jacobian_perturbation = corrupt;
  std::mt19937_64 rng(c.sampler.seed);
  double worst = 0.0;
  int evaluated = 0;
  for (const auto& spec : specs) {
    const Posterior posterior(spec, data, c.priors, opts);
    const auto names = param_names(spec);
    double model_worst = 0.0;
    std::string worst_name;
    int ok = 0;
    for (int i = 0; i < points; ++i) {
      const auto cmp = compare_gradient(posterior, random_feasible_point(spec, c.priors, rng));
      if (!cmp.evaluated) continue;
      ++ok;
      if (cmp.max_error >= model_worst) {
        model_worst = cmp.max_error;
        worst_name = names[static_cast<std::size_t>(cmp.worst)];
      }
    }
    evaluated += ok;
    worst = std::max(worst, model_worst);
    std::cout << spec.name() << ": " << ok << "/" << points << " points, max relative error " << model_worst
              << (worst_name.empty() ? "" : " (" + worst_name + ")") << '\n';
    if (ok == 0) {
      std::cerr << "error: integration failed at every sampled point for " << spec.name() << '\n';
      return kExitNumerical;
    }
  }
  const bool pass = worst <= 1e-4;
  std::cout << (pass ? "PASS" : "FAIL") << " max relative gradient error " << worst << " over " << evaluated
            << " points (threshold 1e-4)\n";
  return pass ? kExitOk : kExitNumerical;
}

int cmd_diagnose(const RunConfig& c) {
  ModelSpec spec = c.resolved_model();
  std::optional<IncidenceSeries> data;
  if (!c.data_path.empty()) data = load_data(c, spec);
  const fs::path dir = c.output_dir;
  ChainSet set;
  set.spec = spec;
  for (int k = 0;; ++k) {
    const fs::path file = dir / ("chain_" + std::to_string(k) + ".csv");
    if (!fs::exists(file)) break;
    ChainDraws chain = read_chain_csv(file, spec);
    chain.chain = k;
    chain.seed = c.sampler.seed;
    set.chains.push_back(std::move(chain));
  }
  if (set.chains.empty()) throw DataError("no chain_<k>.csv files in " + dir.string());
  const auto outputs = write_run_outputs(dir, set, data ? &*data : nullptr, c.sampler.seed,
                                         tolerances(c, spec.N), false);
  for (const auto& d : outputs.diagnostics) {
    std::cout << d.name << " rhat=" << format_rhat(d.rhat) << " ess=" << d.ess << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian fitting of compartmental epidemic models with GHMC"};
  app.require_subcommand(1);

  Overrides synth_o, fit_o, grad_o, diag_o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic incidence dataset");
  synth_o.attach(synth);
  std::string scenario = "benchmark";
  synth->add_option("--scenario", scenario, "benchmark (100-day two-wave SEI3R) or regional (300-day SI3R stand-in)")
      ->check(CLI::IsMember({"benchmark", "regional"}));
  auto* fit = app.add_subcommand("fit", "sample the posterior and write draws and summaries");
  fit_o.attach(fit);
  auto* grad = app.add_subcommand("gradcheck", "compare the analytic gradient with finite differences");
  grad_o.attach(grad);
  int points = 20;
  bool all_models = false;
  double corrupt = 0.0;
  grad->add_option("--points", points, "random parameter vectors per model")->check(CLI::PositiveNumber);
  grad->add_flag("--all-models", all_models, "check SIR, SI3R, SEIR and SEI3R");
  grad->add_option("--corrupt-jacobian", corrupt, "scale error injected into df/dy (negative control)");
  auto* diag = app.add_subcommand("diagnose", "recompute diagnostics from saved chain files in --out");
  diag_o.attach(diag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_o.resolve(), scenario);
    if (*fit) return cmd_fit(fit_o.resolve());
    if (*grad) return cmd_gradcheck(grad_o.resolve(), points, all_models, corrupt);
    if (*diag) return cmd_diagnose(diag_o.resolve());
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const IntegrationFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
