#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spe/belief_grid.hpp"
#include "spe/pomdp.hpp"
#include "spe/soft_bellman.hpp"

namespace spe {

// Beliefs x_0..x_T filtered along one history, with sigma_t for every step.
struct FilteredPath {
  int n_states = 0;
  std::vector<double> beliefs;  // (T + 1) x n_states
  std::vector<double> sigmas;   // T

  std::size_t horizon() const { return sigmas.size(); }
  std::span<const double> belief(std::size_t t) const {
    return {beliefs.data() + t * n_states, std::size_t(n_states)};
  }
};

// Throws ZeroObservationProbability carrying the failing step.
FilteredPath filter(const PomdpModel& model, const History& history);

std::vector<FilteredPath> filter_all(const PomdpModel& model, const Dataset& data,
                                     Exec exec = Exec::Parallel);

// sum_t log sigma_t over t >= burn_in. The filter starts from `x0` when
// given, otherwise from the history's own prior. Returns -inf on impossible
// data instead of throwing.
double observation_log_likelihood(const PomdpModel& model, const History& history,
                                  std::size_t burn_in = 0, const Belief* x0 = nullptr);

double observation_log_likelihood(const PomdpModel& model, const Dataset& data,
                                  std::size_t burn_in = 0, const Belief* x0 = nullptr,
                                  Exec exec = Exec::Parallel);

struct LikelihoodTerms {
  double obs = 0.0;
  double choice = 0.0;
  // Probability of the recorded priors. Priors are treated as known inputs,
  // so this is the constant log 1 = 0 and never enters optimization.
  double prior = 0.0;

  double total() const { return obs + choice + prior; }
};

// Full log-likelihood with choice probabilities taken from `q`.
LikelihoodTerms log_likelihood(const PomdpModel& model, const QTable& q, const Dataset& data,
                               Exec exec = Exec::Parallel);

// Solves the soft Bellman equation for `model` on a fresh grid first.
LikelihoodTerms log_likelihood(const PomdpModel& model, int grid_resolution,
                               const Dataset& data, const SolveOptions& opts = {});

// Every decision (z_t, x_t, a_t) of a dataset with beliefs frozen at the
// dynamics they were filtered under, and their grid interpolation weights.
class ChoiceData {
 public:
  struct Decision {
    int z;
    int a;
    InterpWeights w;
  };

  ChoiceData(const Dataset& data, const std::vector<FilteredPath>& paths,
             const BeliefGrid& grid, std::size_t burn_in = 0);

  std::size_t n_histories() const { return offsets_.size() - 1; }
  std::size_t n_decisions() const { return decisions_.size(); }
  std::span<const Decision> history(std::size_t i) const {
    return {decisions_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Decision> decisions_;
};

// sum_i sum_t log pi(a_t | z_t, x_t); choice term only.
double pseudo_log_likelihood(const QTable& q, const ChoiceData& data, Exec exec = Exec::Parallel);
double pseudo_log_likelihood(const QTable& q, const Dataset& data,
                             const std::vector<FilteredPath>& paths);

// grad_theta1 Q(z, x, a) on grid nodes, stored [z][node][a][k].
class GradQTable {
 public:
  GradQTable(int n_obs, int n_nodes, int n_actions, int n_params);

  int n_obs() const { return n_obs_; }
  int n_nodes() const { return n_nodes_; }
  int n_actions() const { return n_actions_; }
  int n_params() const { return n_params_; }

  std::span<double> at(int z, int node, int a) {
    return {values_.data() + offset(z, node, a), std::size_t(n_params_)};
  }
  std::span<const double> at(int z, int node, int a) const {
    return {values_.data() + offset(z, node, a), std::size_t(n_params_)};
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // max over entries of the vector infinity norm.
  double sup_norm() const;

 private:
  std::size_t offset(int z, int node, int a) const {
    return ((std::size_t(z) * n_nodes_ + node) * n_actions_ + a) * n_params_;
  }

  int n_obs_;
  int n_nodes_;
  int n_actions_;
  int n_params_;
  std::vector<double> values_;
};

struct GradQOptions {
  double tol = 1e-8;
  int max_iter = 0;  // <= 0: contraction bound from the first sweep
  Exec exec = Exec::Parallel;
};

struct GradQResult {
  GradQTable grad;
  int iterations = 0;
  double residual = 0.0;
  // Largest observed ratio of successive iterate differences.
  double max_contraction_ratio = 0.0;
};

// Fixed point of g = grad r + beta * sum sigma * sum_a' pi(a'|z',x') g(z',x',a')
// on the grid, with pi taken from the solved table `q`. `node_features` is
// grad r at the nodes ([z][node][a][k], see LinearReward::node_features).
// Starts from zeros unless a warm start is given.
GradQResult grad_q(const BeliefTransitions& transitions, const QTable& q,
                   std::span<const double> node_features, int n_params,
                   const GradQOptions& opts = {}, const GradQTable* warm_start = nullptr);

// grad log pi(a | z, x) = grad Q(z,x,a) - sum_a' pi(a'|z,x) grad Q(z,x,a').
std::vector<double> grad_log_pi(const GradQTable& grad, const QTable& q, int z,
                                std::span<const double> x, int a);

struct PseudoScore {
  double value = 0.0;
  std::vector<double> gradient;
};

// Pseudo-likelihood and its gradient in one pass over the decisions.
PseudoScore pseudo_score(const QTable& q, const GradQTable& grad, const ChoiceData& data,
                         Exec exec = Exec::Parallel);

struct SmoothnessConstants {
  double L_r1 = 0.0;
  double L_r2 = 0.0;
  double L_Q = 0.0;
  double L_Vbar = 0.0;
  double L = 0.0;
};

// Hessian-norm bounds for Q and the soft value, and the Lipschitz constant of
// the pseudo-likelihood gradient over N histories of length T.
SmoothnessConstants smoothness_constants(double L_r1, double L_r2, double discount, double N,
                                         double T);

}  // namespace spe
