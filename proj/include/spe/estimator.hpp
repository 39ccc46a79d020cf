#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spe/dynamics.hpp"
#include "spe/likelihood.hpp"
#include "spe/reward.hpp"

namespace spe {

enum class StepRule { Backtracking, Fixed };

struct EstimatorConfig {
  int grid_resolution = 101;
  double discount = 0.95;
  double bellman_tol = 1e-9;
  double grad_q_tol = 1e-8;
  // Stage-2 stop: |grad l| / (number of decisions) < grad_eps.
  double grad_eps = 1e-3;
  StepRule step_rule = StepRule::Backtracking;
  // Fixed mode: the step size (<= 0 selects 1/L). Backtracking: the initial
  // trial step (<= 0 selects min(1e-2, 1/L)).
  double step_size = 0.0;
  double armijo = 1e-4;
  int max_outer = 2000;
  std::vector<double> theta1_init;  // empty: zeros
  std::vector<double> theta2_init;  // raw dynamics parameters; empty: family default
  std::uint64_t seed = 0;
  // Stage 1 works on the observation term divided by its number of terms.
  double stage1_tol = 1e-7;
  int stage1_max_iter = 300;
  double stage1_fd_step = 1e-5;
  // Quasi-Newton runs for stage 1: the initial point, then points drawn
  // uniformly within +-stage1_spread of it from `seed`. The best one is kept.
  int stage1_starts = 4;
  double stage1_spread = 2.0;
  // Leading transitions excluded from both likelihood terms.
  std::size_t burn_in = 0;
  // Replaces every history's prior when set.
  std::optional<std::vector<double>> x0_override;
  Exec exec = Exec::Parallel;
};

void validate(const EstimatorConfig& cfg);

struct Stage1Result {
  std::vector<double> raw;
  std::vector<double> natural;
  std::vector<std::string> names;
  double objective = 0.0;  // sum of log sigma at the estimate
  std::vector<double> trace;  // of the winning start
  int iterations = 0;
  bool converged = false;
  int best_start = 0;
  std::vector<double> start_objectives;
  std::vector<FilteredPath> paths;
};

// Maximizes the observation term over the unconstrained dynamics parameters.
Stage1Result stage1_fit_theta2(const Dataset& data, const DynamicsFamily& family,
                               const EstimatorConfig& cfg);

struct Stage2Result {
  std::vector<double> theta1;
  double value = 0.0;  // pseudo-likelihood at theta1
  double grad_norm = 0.0;
  int iterations = 0;  // accepted updates
  bool converged = false;
  std::vector<double> trace;       // pseudo-likelihood per iterate, start included
  std::vector<double> grad_norms;  // unscaled, per iterate
  std::vector<double> steps;       // step used for each accepted update
  SmoothnessConstants smoothness;
  double step_limit = 0.0;  // 2 / L
  bool step_below_limit = true;
  // min_k |grad|^2 and (l_best - l_0) / (K rho (1 - rho L / 2)); fixed steps only.
  double theorem4_lhs = 0.0;
  double theorem4_rhs = 0.0;
  bool theorem4_holds = true;
  int bellman_sweeps = 0;
  int grad_sweeps = 0;
  double max_grad_contraction = 0.0;
  std::string stop_reason;
  std::optional<QTable> q;  // solved at theta1
};

// Soft policy-gradient ascent on the pseudo-likelihood with beliefs frozen in
// `choices`. `dynamics` carries the kernel and discount; its rewards are ignored.
Stage2Result stage2_policy_gradient(const PomdpModel& dynamics, const LinearReward& reward,
                                    const ChoiceData& choices, const EstimatorConfig& cfg);

struct EstimateReport {
  std::string model;  // "pomdp" or "mdp"
  EstimatorConfig config;
  Stage1Result stage1;
  Stage2Result stage2;
  LikelihoodTerms likelihood;
  std::size_t n_histories = 0;
  std::size_t n_decisions = 0;
  double runtime_seconds = 0.0;

  bool converged() const { return stage1.converged && stage2.converged; }
};

// Stage 1, then stage 2, then both likelihood terms at the estimate.
EstimateReport estimate(const Dataset& data, const DynamicsFamily& family,
                        const LinearReward& reward, const EstimatorConfig& cfg);

// Engine model with hidden state.
EstimateReport estimate_engine(const Dataset& data, int z_max, const EstimatorConfig& cfg);

// Fully observed mileage model: a single hidden state, priors ignored.
EstimateReport fit_mdp_baseline(const Dataset& data, int z_max, const EstimatorConfig& cfg);

// Largest observation index in the data plus one.
int observed_obs_count(const Dataset& data);

std::string config_to_json(const EstimatorConfig& cfg, int indent = 2);
std::string report_to_json(const EstimateReport& r, int indent = 2);

}  // namespace spe
