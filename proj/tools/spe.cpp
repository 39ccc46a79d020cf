#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spe/errors.hpp"
#include "spe/estimator.hpp"
#include "spe/io.hpp"
#include "spe/replacement.hpp"
#include "spe/sensitivity.hpp"
#include "spe/util.hpp"

using nlohmann::json;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

struct Common {
  int threads = 0;
};

struct SimulateArgs {
  std::string params, out, latent;
  int n = 0, t = 0, z0 = 0, grid = 101;
  std::uint64_t seed = 0;
  double discount = 0.95;
  std::string prior = "uniform";
  double good = 1.0;
};

struct EstimateArgs {
  std::string data, out, config, model = "pomdp";
  int z_max = 0;
  std::optional<double> discount, eps, step_size;
  std::optional<int> grid, max_outer;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> step_rule;
  std::vector<double> x0;
};

struct EvaluateArgs {
  std::string data, params, out;
  double discount = 0.95;
  int grid = 101;
};

struct SolveArgs {
  std::string params, model, out;
  double discount = 0.95, tol = 1e-9;
  int grid = 101;
};

struct SensitivityArgs {
  std::string data, out, config, init_params;
  int z_max = 0;
  std::vector<int> burn_ins{1, 2, 4, 8, 16};
  double slack = 0.02;
};

struct ProbeArgs {
  std::string model_a, model_b, params_a, params_b;
  std::vector<double> x0;
  double tol = 1e-12;
};

json input_entry(const std::string& path) { return {{"path", path}, {"fnv1a", spe::hash_file(path)}}; }

// Fails before any work when the output directory is missing.
void check_output(const std::string& path) {
  if (path.empty()) return;
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir))
    throw spe::IoError("output directory does not exist: " + dir.string());
}

int zmax_for(const spe::Dataset& data, int requested) {
  const int seen = spe::observed_obs_count(data);
  const int z_max = requested > 0 ? requested : std::max(spe::EngineParams{}.z_max, seen);
  if (seen > z_max)
    throw spe::InvalidArgument("data has mileage bin " + std::to_string(seen - 1) +
                               " beyond z_max " + std::to_string(z_max));
  return z_max;
}

int run_simulate(const SimulateArgs& a) {
  check_output(a.out);
  check_output(a.latent);
  const auto params = spe::load_engine_params(a.params);
  spe::SimConfig cfg;
  cfg.n_histories = a.n;
  cfg.horizon = a.t;
  cfg.seed = a.seed;
  cfg.z0 = a.z0;
  cfg.keep_latent = !a.latent.empty();
  if (a.prior == "uniform") {
    cfg.prior = spe::PriorLaw::Uniform;
  } else {
    cfg.prior = spe::PriorLaw::Fixed;
    cfg.fixed_good = a.good;
  }
  const auto sim = spe::simulate(params, a.discount, cfg, a.grid);
  std::size_t replacements = 0, decisions = 0;
  for (const auto& h : sim.data) {
    for (int act : h.acts) replacements += act == 1;
    decisions += h.horizon();
  }
  std::string latent;
  if (cfg.keep_latent) {
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      json beliefs = json::array();
      for (const auto& b : sim.beliefs[i]) beliefs.push_back(std::vector<double>(b.probs().begin(), b.probs().end()));
      latent += json{{"s", sim.states[i]}, {"x", beliefs}}.dump() + "\n";
    }
  }
  spe::write_file(a.out, spe::dataset_to_string(sim.data));
  if (cfg.keep_latent) spe::write_file(a.latent, latent);
  std::printf("histories %d  horizon %d  decisions %zu  replacements %zu  replacement rate %.6f\n",
              a.n, a.t, decisions, replacements,
              decisions ? double(replacements) / double(decisions) : 0.0);
  return 0;
}

spe::EstimatorConfig resolve_config(const EstimateArgs& a) {
  spe::EstimatorConfig c;
  if (!a.config.empty()) c = spe::config_from_json(spe::read_file(a.config));
  if (a.discount) c.discount = *a.discount;
  if (a.eps) c.grad_eps = *a.eps;
  if (a.step_size) c.step_size = *a.step_size;
  if (a.grid) c.grid_resolution = *a.grid;
  if (a.max_outer) c.max_outer = *a.max_outer;
  if (a.seed) c.seed = *a.seed;
  if (a.step_rule) c.step_rule = *a.step_rule == "fixed" ? spe::StepRule::Fixed : spe::StepRule::Backtracking;
  if (!a.x0.empty()) c.x0_override = a.x0;
  spe::validate(c);
  return c;
}

int run_estimate(const EstimateArgs& a) {
  check_output(a.out);
  const auto cfg = resolve_config(a);
  const auto data = spe::load_dataset(a.data);
  const int z_max = zmax_for(data, a.z_max);
  const auto rep = a.model == "mdp" ? spe::fit_mdp_baseline(data, z_max, cfg)
                                    : spe::estimate_engine(data, z_max, cfg);
  json j = json::parse(spe::report_to_json(rep));
  j["z_max"] = z_max;
  j["inputs"] = {{"data", input_entry(a.data)}};
  if (!a.config.empty()) j["inputs"]["config"] = input_entry(a.config);
  if (!a.out.empty()) spe::write_file(a.out, j.dump(2) + "\n");

  std::printf("%-14s %12s\n", "parameter", "estimate");
  for (std::size_t i = 0; i < rep.stage1.names.size(); ++i)
    std::printf("%-14s %12.6f\n", rep.stage1.names[i].c_str(), rep.stage1.natural[i]);
  const std::vector<std::string> reward_names =
      a.model == "mdp" ? std::vector<std::string>{"theta1", "rc"}
                       : std::vector<std::string>{"theta1_0", "theta1_1", "rc"};
  for (std::size_t i = 0; i < rep.stage2.theta1.size(); ++i)
    std::printf("%-14s %12.6f\n", reward_names[i].c_str(), rep.stage2.theta1[i]);
  std::printf("log-likelihood %.4f (obs %.4f, choice %.4f)\n", rep.likelihood.total(),
              rep.likelihood.obs, rep.likelihood.choice);
  if (!rep.converged()) {
    std::fprintf(stderr, "estimate did not converge: stage 1 %s, stage 2 %s\n",
                 rep.stage1.converged ? "converged" : "did not converge",
                 rep.stage2.stop_reason.c_str());
    return kExitInvalid;
  }
  return 0;
}

int run_evaluate(const EvaluateArgs& a) {
  check_output(a.out);
  const auto params = spe::load_engine_params(a.params);
  const auto data = spe::load_dataset(a.data);
  zmax_for(data, params.z_max);
  const auto model = spe::build_engine_model(params, a.discount);
  const auto terms = spe::log_likelihood(model, a.grid, data);
  json j = {{"obs", terms.obs},         {"choice", terms.choice},
            {"prior", terms.prior},     {"total", terms.total()},
            {"discount", a.discount},   {"grid_resolution", a.grid},
            {"inputs", {{"data", input_entry(a.data)}, {"params", input_entry(a.params)}}}};
  if (!a.out.empty()) spe::write_file(a.out, j.dump(2) + "\n");
  std::printf("log-likelihood %.6f (obs %.6f, choice %.6f, prior %.1f)\n", terms.total(),
              terms.obs, terms.choice, terms.prior);
  return 0;
}

int run_solve(const SolveArgs& a) {
  check_output(a.out);
  if (a.params.empty() == a.model.empty())
    throw spe::InvalidArgument("give exactly one of --params and --model");
  const auto model = a.model.empty() ? spe::build_engine_model(spe::load_engine_params(a.params), a.discount)
                                     : spe::load_model(a.model);
  auto grid = std::make_shared<const spe::BeliefGrid>(model.n_states(), a.grid);
  spe::SolveOptions opts;
  opts.tol = a.tol;
  const auto res = spe::solve(model, grid, opts);
  spe::write_file(a.out, spe::qtable_to_json(res.q) + "\n");
  std::printf("iterations %d  residual bound %.3e  model %s\n", res.iterations, res.residual,
              res.q.model_hash.c_str());
  return 0;
}

int run_sensitivity(const SensitivityArgs& a) {
  check_output(a.out);
  spe::SweepConfig cfg;
  if (!a.config.empty()) cfg.estimator = spe::config_from_json(spe::read_file(a.config));
  cfg.burn_ins = a.burn_ins;
  cfg.slack = a.slack;
  const auto data = spe::load_dataset(a.data);
  const int z_max = zmax_for(data, a.z_max);
  const spe::EngineDynamics family(z_max);
  if (!a.init_params.empty()) cfg.estimator.theta2_init = family.raw_from(spe::load_engine_params(a.init_params));
  const auto res = spe::x0_sweep_estimate(data, family, cfg);
  spe::write_file(a.out, spe::sweep_to_csv(res));
  std::fputs(spe::sweep_to_csv(res).c_str(), stdout);
  std::printf("non_increasing %s\n", res.non_increasing ? "true" : "false");
  return 0;
}

int run_probe(const ProbeArgs& a) {
  auto load = [](const std::string& model, const std::string& params) {
    if (model.empty() == params.empty())
      throw spe::InvalidArgument("give exactly one model file or engine parameter file per side");
    return model.empty() ? spe::build_engine_model(spe::load_engine_params(params), 0.95)
                         : spe::load_model(model);
  };
  const auto ma = load(a.model_a, a.params_a);
  const auto mb = load(a.model_b, a.params_b);
  const spe::Belief x0 = a.x0.empty() ? spe::Belief::uniform(ma.n_states()) : spe::Belief(a.x0);
  const auto r = spe::two_period_identification_probe(ma, mb, x0, a.tol);
  json j = {{"distinguishable", r.distinguishable},
            {"rank_one", r.rank_one},
            {"identified", r.distinguishable && !r.rank_one},
            {"period", r.period},
            {"witness", {{"z0", r.z0}, {"a0", r.a0}, {"z1", r.z1}, {"a1", r.a1}, {"z2", r.z2}}},
            {"difference", r.difference}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural estimation of partially observed replacement models"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "worker threads (0: all cores)")
      ->envname("SPE_THREADS")
      ->check(CLI::NonNegativeNumber);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate engine histories");
  c_sim->add_option("--params", sim.params, "engine parameter JSON")->required();
  c_sim->add_option("--n", sim.n, "histories")->required()->check(CLI::PositiveNumber);
  c_sim->add_option("--t", sim.t, "decisions per history")->required()->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "master seed");
  c_sim->add_option("--out", sim.out, "dataset path (JSON lines)")->required();
  c_sim->add_option("--discount", sim.discount, "discount factor");
  c_sim->add_option("--grid", sim.grid, "belief grid resolution")->check(CLI::Range(2, 100000));
  c_sim->add_option("--prior", sim.prior, "prior law")->check(CLI::IsMember({"uniform", "fixed"}));
  c_sim->add_option("--good", sim.good, "good-state probability for --prior fixed")
      ->check(CLI::Range(0.0, 1.0));
  c_sim->add_option("--z0", sim.z0, "initial mileage bin")->check(CLI::NonNegativeNumber);
  c_sim->add_option("--latent", sim.latent, "sidecar with hidden states and beliefs");

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "two-stage estimate from a dataset");
  c_est->add_option("--data", est.data, "dataset path")->required();
  c_est->add_option("--out", est.out, "report path (JSON)");
  c_est->add_option("--model", est.model, "model family")->check(CLI::IsMember({"pomdp", "mdp"}));
  c_est->add_option("--config", est.config, "estimator config JSON");
  c_est->add_option("--z-max", est.z_max, "mileage bins (0: default)")->check(CLI::NonNegativeNumber);
  c_est->add_option("--discount", est.discount, "discount factor");
  c_est->add_option("--eps", est.eps, "gradient stop per decision");
  c_est->add_option("--step-rule", est.step_rule, "step rule")
      ->check(CLI::IsMember({"backtracking", "fixed"}));
  c_est->add_option("--step-size", est.step_size, "step size (0: automatic)");
  c_est->add_option("--grid", est.grid, "belief grid resolution");
  c_est->add_option("--max-outer", est.max_outer, "policy-gradient iteration limit");
  c_est->add_option("--seed", est.seed, "seed for stage-1 restarts");
  c_est->add_option("--x0", est.x0, "prior used for every history")->delimiter(',');

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "log-likelihood at given parameters");
  c_ev->add_option("--data", ev.data, "dataset path")->required();
  c_ev->add_option("--params", ev.params, "engine parameter JSON")->required();
  c_ev->add_option("--out", ev.out, "result path (JSON)");
  c_ev->add_option("--discount", ev.discount, "discount factor");
  c_ev->add_option("--grid", ev.grid, "belief grid resolution")->check(CLI::Range(2, 100000));

  SolveArgs sv;
  auto* c_sv = app.add_subcommand("bellman-solve", "solve the soft Bellman equation");
  c_sv->add_option("--params", sv.params, "engine parameter JSON");
  c_sv->add_option("--model", sv.model, "model JSON");
  c_sv->add_option("--out", sv.out, "QTable path (JSON)")->required();
  c_sv->add_option("--discount", sv.discount, "discount factor (engine parameters only)");
  c_sv->add_option("--grid", sv.grid, "belief grid resolution")->check(CLI::Range(2, 100000));
  c_sv->add_option("--tol", sv.tol, "Bellman residual tolerance")->check(CLI::PositiveNumber);

  SensitivityArgs sn;
  auto* c_sn = app.add_subcommand("sensitivity", "prior-robustness sweep over burn-in lengths");
  c_sn->add_option("--data", sn.data, "dataset path")->required();
  c_sn->add_option("--out", sn.out, "CSV path")->required();
  c_sn->add_option("--config", sn.config, "estimator config JSON");
  c_sn->add_option("--z-max", sn.z_max, "mileage bins (0: default)")->check(CLI::NonNegativeNumber);
  c_sn->add_option("--burn-ins", sn.burn_ins, "burn-in lengths")->delimiter(',');
  c_sn->add_option("--slack", sn.slack, "allowed increase between burn-ins");
  c_sn->add_option("--init-params", sn.init_params, "engine parameters to start each fit from");

  ProbeArgs pr;
  auto* c_pr = app.add_subcommand("identify-probe", "compare two models on two-period statistics");
  c_pr->add_option("--model-a", pr.model_a, "model JSON");
  c_pr->add_option("--model-b", pr.model_b, "model JSON");
  c_pr->add_option("--params-a", pr.params_a, "engine parameter JSON");
  c_pr->add_option("--params-b", pr.params_b, "engine parameter JSON");
  c_pr->add_option("--x0", pr.x0, "prior")->delimiter(',');
  c_pr->add_option("--tol", pr.tol, "difference threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }
  if (common.threads > 0) omp_set_num_threads(common.threads);

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_est) return run_estimate(est);
    if (*c_ev) return run_evaluate(ev);
    if (*c_sv) return run_solve(sv);
    if (*c_sn) return run_sensitivity(sn);
    if (*c_pr) return run_probe(pr);
  } catch (const spe::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  }
  return kExitInvalid;
}
