#include "spe/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "spe/errors.hpp"
#include "spe/quasi_newton.hpp"
#include "spe/replacement.hpp"

namespace spe {

using nlohmann::json;

namespace {

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Dataset with_prior(const Dataset& data, const std::optional<std::vector<double>>& x0) {
  if (!x0) return data;
  Dataset out = data;
  const Belief prior(*x0);
  for (auto& h : out) h.x0 = prior;
  return out;
}

PomdpModel dynamics_model(const DynamicsFamily& family, std::span<const double> raw,
                          double discount) {
  std::vector<double> reward(std::size_t(family.n_actions()) * family.n_obs() *
                                 family.n_states(),
                             0.0);
  return PomdpModel(family.n_states(), family.n_obs(), family.n_actions(), discount,
                    family.kernel(raw), std::move(reward));
}

std::size_t count_terms(const Dataset& data, std::size_t burn_in) {
  std::size_t n = 0;
  for (const auto& h : data) n += h.horizon() > burn_in ? h.horizon() - burn_in : 0;
  return n;
}

double path_obs_term(const std::vector<FilteredPath>& paths, std::size_t burn_in) {
  double total = 0.0;
  for (const auto& p : paths)
    for (std::size_t t = burn_in; t < p.horizon(); ++t) total += std::log(p.sigmas[t]);
  return total;
}

}  // namespace

void validate(const EstimatorConfig& cfg) {
  if (cfg.grid_resolution < 2) throw InvalidArgument("grid resolution must be at least 2");
  if (!(cfg.discount >= 0.0 && cfg.discount < 1.0))
    throw InvalidArgument("discount must lie in [0, 1)");
  if (!(cfg.bellman_tol > 0.0) || !(cfg.grad_q_tol > 0.0))
    throw InvalidArgument("solver tolerances must be positive");
  if (!(cfg.grad_eps > 0.0)) throw InvalidArgument("gradient stop must be positive");
  if (!(cfg.armijo > 0.0 && cfg.armijo < 1.0))
    throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (cfg.max_outer < 0 || cfg.stage1_max_iter < 0)
    throw InvalidArgument("iteration limits must be nonnegative");
  if (!(cfg.stage1_tol > 0.0) || !(cfg.stage1_fd_step > 0.0))
    throw InvalidArgument("stage-1 tolerance and difference step must be positive");
  if (cfg.stage1_starts < 1) throw InvalidArgument("stage 1 needs at least one start");
  if (!(cfg.stage1_spread >= 0.0)) throw InvalidArgument("stage-1 spread must be nonnegative");
  if (cfg.x0_override) validate_belief(*cfg.x0_override);
}

Stage1Result stage1_fit_theta2(const Dataset& data, const DynamicsFamily& family,
                               const EstimatorConfig& cfg) {
  validate(cfg);
  const Dataset d = with_prior(data, cfg.x0_override);
  std::vector<double> x0 = cfg.theta2_init.empty() ? family.default_raw() : cfg.theta2_init;
  if (x0.size() != std::size_t(family.n_params()))
    throw InvalidArgument("initial dynamics parameters have the wrong size");
  const double scale = 1.0 / double(std::max<std::size_t>(1, count_terms(d, cfg.burn_in)));

  auto objective = [&](std::span<const double> raw) {
    for (double v : raw)
      if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
    const auto model = dynamics_model(family, raw, cfg.discount);
    return scale * observation_log_likelihood(model, d, cfg.burn_in, nullptr, cfg.exec);
  };

  QuasiNewtonOptions qn;
  qn.grad_tol = cfg.stage1_tol;
  qn.max_iter = cfg.stage1_max_iter;
  qn.fd_step = cfg.stage1_fd_step;

  Stage1Result res;
  std::mt19937_64 rng(cfg.seed);
  std::optional<QuasiNewtonResult> best;
  for (int k = 0; k < cfg.stage1_starts; ++k) {
    std::vector<double> start = x0;
    if (k > 0)
      for (double& v : start) v += cfg.stage1_spread * (2.0 * uniform01(rng) - 1.0);
    auto fit = maximize_bfgs(objective, start, qn);
    res.start_objectives.push_back(fit.value / scale);
    if (!best || fit.value > best->value) {
      best = std::move(fit);
      res.best_start = k;
    }
  }
  const auto& fit = *best;
  res.raw = fit.x;
  res.natural = family.natural(res.raw);
  res.names = family.natural_names();
  res.objective = fit.value / scale;
  for (double v : fit.trace) res.trace.push_back(v / scale);
  res.iterations = fit.iterations;
  res.converged = fit.converged;
  res.paths = filter_all(dynamics_model(family, res.raw, cfg.discount), d, cfg.exec);
  return res;
}

Stage2Result stage2_policy_gradient(const PomdpModel& dynamics, const LinearReward& reward,
                                    const ChoiceData& choices, const EstimatorConfig& cfg) {
  validate(cfg);
  if (reward.n_states() != dynamics.n_states() || reward.n_obs() != dynamics.n_obs() ||
      reward.n_actions() != dynamics.n_actions())
    throw InvalidArgument("reward family does not match the dynamics");
  const int P = reward.n_params();
  std::vector<double> theta = cfg.theta1_init.empty() ? std::vector<double>(P, 0.0)
                                                      : cfg.theta1_init;
  if (theta.size() != std::size_t(P))
    throw InvalidArgument("initial reward parameters have the wrong size");

  auto grid = std::make_shared<const BeliefGrid>(dynamics.n_states(), cfg.grid_resolution);
  auto transitions = std::make_shared<const BeliefTransitions>(dynamics, grid);
  const auto features = reward.node_features(*grid);
  const std::size_t rows = transitions->n_rows();

  auto node_reward = [&](const std::vector<double>& th) {
    std::vector<double> r(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (int k = 0; k < P; ++k) r[i] += features[i * P + k] * th[k];
    return r;
  };

  Stage2Result res;
  const double n_dec = double(choices.n_decisions());
  const double N = double(choices.n_histories());
  const double T = N > 0.0 ? n_dec / N : 0.0;
  const double beta = dynamics.discount();
  if (beta > 0.0) {
    res.smoothness = smoothness_constants(reward.gradient_bound(), 0.0, beta, N, T);
  } else {
    res.smoothness.L_r1 = reward.gradient_bound();
    res.smoothness.L_Q = 0.0;
    res.smoothness.L_Vbar = 2.0 * res.smoothness.L_r1 * res.smoothness.L_r1;
    res.smoothness.L = n_dec * res.smoothness.L_Vbar;
  }
  const double L = res.smoothness.L;
  res.step_limit = L > 0.0 ? 2.0 / L : std::numeric_limits<double>::infinity();

  SolveOptions sopt{cfg.bellman_tol, 0, cfg.exec};
  GradQOptions gopt{cfg.grad_q_tol, 0, cfg.exec};

  auto solve_at = [&](const std::vector<double>& th, const QTable* warm) {
    BellmanOperator op(transitions, node_reward(th));
    auto s = solve(op, sopt, warm);
    res.bellman_sweeps += s.iterations;
    return s.q;
  };

  QTable q = solve_at(theta, nullptr);
  double value = pseudo_log_likelihood(q, choices, cfg.exec);
  if (!std::isfinite(value))
    throw NonFiniteObjective("pseudo-likelihood is not finite at the initial reward parameters");
  std::optional<GradQTable> gq;
  auto gradient_at = [&](const QTable& qt) {
    auto g = grad_q(*transitions, qt, features, P, gopt, gq ? &*gq : nullptr);
    res.grad_sweeps += g.iterations;
    res.max_grad_contraction = std::max(res.max_grad_contraction, g.max_contraction_ratio);
    gq = std::move(g.grad);
    return pseudo_score(qt, *gq, choices, cfg.exec).gradient;
  };
  std::vector<double> grad = gradient_at(q);

  const bool fixed = cfg.step_rule == StepRule::Fixed;
  const double inv_L = L > 0.0 ? 1.0 / L : 1e-2;
  double rho = cfg.step_size > 0.0 ? cfg.step_size : (fixed ? inv_L : std::min(1e-2, inv_L));
  if (fixed) res.step_below_limit = rho < res.step_limit;

  double min_sq_grad = std::numeric_limits<double>::infinity();
  res.trace.push_back(value);
  for (;;) {
    const double gnorm = norm2(grad);
    res.grad_norms.push_back(gnorm);
    if (n_dec == 0.0 || gnorm / n_dec < cfg.grad_eps) {
      res.converged = true;
      res.stop_reason = "gradient norm below tolerance";
      break;
    }
    if (res.iterations >= cfg.max_outer) {
      res.stop_reason = "iteration limit reached";
      break;
    }
    min_sq_grad = std::min(min_sq_grad, gnorm * gnorm);
    std::vector<double> trial(P);
    auto step_to = [&](double r) {
      for (int k = 0; k < P; ++k) trial[k] = theta[k] + r * grad[k];
    };
    if (fixed) {
      step_to(rho);
      q = solve_at(trial, &q);
      value = pseudo_log_likelihood(q, choices, cfg.exec);
      if (!std::isfinite(value))
        throw NonFiniteObjective("pseudo-likelihood is not finite along the ascent path");
    } else {
      bool accepted = false;
      for (int b = 0; b < 60; ++b) {
        step_to(rho);
        QTable qt = solve_at(trial, &q);
        const double vt = pseudo_log_likelihood(qt, choices, cfg.exec);
        if (std::isfinite(vt) && vt >= value + cfg.armijo * rho * gnorm * gnorm) {
          q = std::move(qt);
          value = vt;
          accepted = true;
          break;
        }
        rho *= 0.5;
      }
      if (!accepted) {
        res.stop_reason = "line search found no ascent step";
        break;
      }
    }
    theta = trial;
    res.steps.push_back(rho);
    res.trace.push_back(value);
    ++res.iterations;
    grad = gradient_at(q);
    if (!fixed) rho *= 2.0;
  }

  if (fixed && res.iterations > 0) {
    const double best = *std::max_element(res.trace.begin(), res.trace.end());
    const double denom = res.iterations * rho * (1.0 - rho * L / 2.0);
    res.theorem4_lhs = min_sq_grad;
    res.theorem4_rhs = denom > 0.0 ? (best - res.trace.front()) / denom
                                   : std::numeric_limits<double>::infinity();
    res.theorem4_holds = res.theorem4_lhs <= res.theorem4_rhs;
  }
  res.theta1 = theta;
  res.value = value;
  res.grad_norm = res.grad_norms.back();
  res.q = std::move(q);
  return res;
}

EstimateReport estimate(const Dataset& data, const DynamicsFamily& family,
                        const LinearReward& reward, const EstimatorConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  validate(cfg);
  const Dataset d = with_prior(data, cfg.x0_override);
  EstimatorConfig inner = cfg;
  inner.x0_override.reset();

  EstimateReport rep;
  rep.model = "pomdp";
  rep.config = cfg;
  rep.n_histories = d.size();
  rep.stage1 = stage1_fit_theta2(d, family, inner);
  const auto dyn = dynamics_model(family, rep.stage1.raw, cfg.discount);
  const BeliefGrid grid(family.n_states(), cfg.grid_resolution);
  const ChoiceData choices(d, rep.stage1.paths, grid, cfg.burn_in);
  rep.n_decisions = choices.n_decisions();
  rep.stage2 = stage2_policy_gradient(dyn, reward, choices, inner);
  rep.likelihood.obs = path_obs_term(rep.stage1.paths, cfg.burn_in);
  rep.likelihood.choice = rep.stage2.value;
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

int observed_obs_count(const Dataset& data) {
  int m = 0;
  for (const auto& h : data)
    for (int z : h.obs) m = std::max(m, z + 1);
  return m;
}

EstimateReport estimate_engine(const Dataset& data, int z_max, const EstimatorConfig& cfg) {
  return estimate(data, EngineDynamics(z_max), engine_reward(z_max), cfg);
}

EstimateReport fit_mdp_baseline(const Dataset& data, int z_max, const EstimatorConfig& cfg) {
  EstimatorConfig c = cfg;
  c.x0_override = std::vector<double>{1.0};
  c.theta2_init.clear();
  auto rep = estimate(data, MileageDynamics(z_max), mileage_reward(z_max), c);
  rep.model = "mdp";
  rep.config = cfg;
  return rep;
}

namespace {

json config_json(const EstimatorConfig& c) {
  json j;
  j["grid_resolution"] = c.grid_resolution;
  j["discount"] = c.discount;
  j["bellman_tol"] = c.bellman_tol;
  j["grad_q_tol"] = c.grad_q_tol;
  j["grad_eps"] = c.grad_eps;
  j["step_rule"] = c.step_rule == StepRule::Fixed ? "fixed" : "backtracking";
  j["step_size"] = c.step_size;
  j["armijo"] = c.armijo;
  j["max_outer"] = c.max_outer;
  j["theta1_init"] = c.theta1_init;
  j["theta2_init"] = c.theta2_init;
  j["seed"] = c.seed;
  j["stage1_tol"] = c.stage1_tol;
  j["stage1_max_iter"] = c.stage1_max_iter;
  j["stage1_fd_step"] = c.stage1_fd_step;
  j["stage1_starts"] = c.stage1_starts;
  j["stage1_spread"] = c.stage1_spread;
  j["burn_in"] = c.burn_in;
  j["x0_override"] = c.x0_override ? json(*c.x0_override) : json(nullptr);
  return j;
}

// Non-finite numbers have no JSON literal.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string config_to_json(const EstimatorConfig& cfg, int indent) {
  return config_json(cfg).dump(indent);
}

std::string report_to_json(const EstimateReport& r, int indent) {
  json j;
  j["model"] = r.model;
  j["config"] = config_json(r.config);
  j["n_histories"] = r.n_histories;
  j["n_decisions"] = r.n_decisions;
  j["converged"] = r.converged();
  j["runtime_seconds"] = r.runtime_seconds;

  json dyn;
  for (std::size_t i = 0; i < r.stage1.names.size(); ++i)
    dyn[r.stage1.names[i]] = r.stage1.natural[i];
  j["stage1"] = {{"dynamics", dyn},
                 {"raw", r.stage1.raw},
                 {"objective", r.stage1.objective},
                 {"trace", r.stage1.trace},
                 {"iterations", r.stage1.iterations},
                 {"best_start", r.stage1.best_start},
                 {"start_objectives", r.stage1.start_objectives},
                 {"converged", r.stage1.converged}};

  const auto& s = r.stage2;
  json trace = json::array(), norms = json::array();
  for (double v : s.trace) trace.push_back(number(v));
  for (double v : s.grad_norms) norms.push_back(number(v));
  j["stage2"] = {{"theta1", s.theta1},
                 {"pseudo_log_likelihood", number(s.value)},
                 {"grad_norm", number(s.grad_norm)},
                 {"iterations", s.iterations},
                 {"converged", s.converged},
                 {"stop_reason", s.stop_reason},
                 {"trace", trace},
                 {"grad_norms", norms},
                 {"steps", s.steps},
                 {"bellman_sweeps", s.bellman_sweeps},
                 {"grad_sweeps", s.grad_sweeps},
                 {"max_grad_contraction", s.max_grad_contraction}};
  j["diagnostics"] = {{"L_r1", s.smoothness.L_r1},
                      {"L_r2", s.smoothness.L_r2},
                      {"L_Q", s.smoothness.L_Q},
                      {"L_Vbar", s.smoothness.L_Vbar},
                      {"L", s.smoothness.L},
                      {"step_limit", number(s.step_limit)},
                      {"step_below_limit", s.step_below_limit},
                      {"theorem4_lhs", number(s.theorem4_lhs)},
                      {"theorem4_rhs", number(s.theorem4_rhs)},
                      {"theorem4_holds", s.theorem4_holds}};
  j["log_likelihood"] = {{"obs", number(r.likelihood.obs)},
                         {"choice", number(r.likelihood.choice)},
                         {"prior", r.likelihood.prior},
                         {"total", number(r.likelihood.total())}};
  return j.dump(indent);
}

}  // namespace spe
