#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spe/belief_grid.hpp"
#include "spe/pomdp.hpp"

namespace spe {

enum class Exec { Serial, Parallel };

// Soft action values Q(z, x, a) tabulated on the nodes of a belief grid,
// stored [z][node][a].
class QTable {
 public:
  QTable(std::shared_ptr<const BeliefGrid> grid, int n_obs, int n_actions);

  const BeliefGrid& grid() const { return *grid_; }
  const std::shared_ptr<const BeliefGrid>& grid_ptr() const { return grid_; }
  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  int n_nodes() const { return grid_->size(); }

  double& operator()(int z, int node, int a) { return values_[index(z, node) + a]; }
  double operator()(int z, int node, int a) const { return values_[index(z, node) + a]; }
  std::span<const double> row(int z, int node) const {
    return {values_.data() + index(z, node), std::size_t(n_actions_)};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  std::string model_hash;

 private:
  std::size_t index(int z, int node) const {
    return (std::size_t(z) * grid_->size() + node) * n_actions_;
  }

  std::shared_ptr<const BeliefGrid> grid_;
  int n_obs_;
  int n_actions_;
  std::vector<double> values_;
};

double logsumexp(std::span<const double> v);

// Q(z, x, .) by barycentric interpolation of the node rows.
void interpolate_q(const QTable& q, int z, std::span<const double> x, std::span<double> out);

// gamma + logsumexp_a Q(z, x, a).
double soft_value(const QTable& q, int z, std::span<const double> x);
inline double soft_value(const QTable& q, int z, const Belief& x) {
  return soft_value(q, z, x.probs());
}

// Softmax conditional choice probabilities at (z, x).
std::vector<double> ccp(const QTable& q, int z, std::span<const double> x);
inline std::vector<double> ccp(const QTable& q, int z, const Belief& x) {
  return ccp(q, z, x.probs());
}
void softmax(std::span<const double> q, std::span<double> out);

// Successor structure of the soft Bellman operator on a belief grid. Row
// (z, node, a) lists every successor cell (z', grid node) with weight
// sigma(z' | z, x_node, a) times the interpolation weight of
// lambda(z', z, x_node, a) on that node. Terms with sigma = 0 are absent.
// Depends only on the kernel, never on rewards.
class BeliefTransitions {
 public:
  struct Entry {
    int cell;
    double weight;
  };

  BeliefTransitions(const PomdpModel& model, std::shared_ptr<const BeliefGrid> grid);

  const std::shared_ptr<const BeliefGrid>& grid_ptr() const { return grid_; }
  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  std::size_t n_rows() const { return offsets_.size() - 1; }
  std::size_t n_cells() const { return std::size_t(n_obs_) * grid_->size(); }

  std::span<const Entry> row(std::size_t r) const {
    return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

 private:
  std::shared_ptr<const BeliefGrid> grid_;
  int n_obs_;
  int n_actions_;
  double discount_;
  std::vector<std::size_t> offsets_;
  std::vector<Entry> entries_;
};

// Expected rewards r(z, x_node, a) at every grid node, laid out like QTable.
std::vector<double> node_rewards(const PomdpModel& model, const BeliefGrid& grid);

class BellmanOperator {
 public:
  BellmanOperator(const PomdpModel& model, std::shared_ptr<const BeliefGrid> grid);
  BellmanOperator(std::shared_ptr<const BeliefTransitions> transitions,
                  std::vector<double> rewards);

  const BeliefTransitions& transitions() const { return *transitions_; }
  const std::shared_ptr<const BeliefTransitions>& transitions_ptr() const {
    return transitions_;
  }
  const std::vector<double>& rewards() const { return rewards_; }

  QTable zeros() const;

  // out = H in. Row order and per-row summation order are fixed, so serial
  // and parallel execution give bit-identical results.
  void apply(const QTable& in, QTable& out, Exec exec = Exec::Parallel) const;

 private:
  std::shared_ptr<const BeliefTransitions> transitions_;
  std::vector<double> rewards_;
};

// Single sweep evaluated straight from the model: sigma and lambda are
// recomputed for every (z, node, a, z') and successors interpolated on the
// fly. Serial; kept as the reference the precomputed operator is tested against.
QTable bellman_apply_reference(const QTable& q, const PomdpModel& model);

QTable bellman_apply(const QTable& q, const PomdpModel& model, Exec exec = Exec::Parallel);

double sup_distance(const QTable& a, const QTable& b);

struct SolveOptions {
  double tol = 1e-9;
  // <= 0 selects the a-priori contraction bound computed from the first sweep.
  int max_iter = 0;
  Exec exec = Exec::Parallel;
};

struct SolveResult {
  QTable q;
  int iterations = 0;
  double residual = 0.0;      // sup |H q - q| of the returned table (bounded)
  double initial_residual = 0.0;
};

// Iterates Q <- H Q until beta * |Q_{k+1} - Q_k| <= tol, which bounds the
// Bellman residual of the returned table by tol. Starts from zeros unless a
// warm start is given. Throws MaxIterExceeded.
SolveResult solve(const BellmanOperator& op, const SolveOptions& opts = {},
                  const QTable* warm_start = nullptr);
SolveResult solve(const PomdpModel& model, std::shared_ptr<const BeliefGrid> grid,
                  const SolveOptions& opts = {});

// Iteration count that guarantees the tolerance from a zero start.
int contraction_iteration_bound(double discount, double initial_residual, double tol);

// Backward induction Q_t = H Q_{t+1}. Returns Q_0 .. Q_{horizon}, the last
// entry being the terminal table.
std::vector<QTable> finite_horizon_solve(const BellmanOperator& op, int horizon,
                                         const QTable& terminal, Exec exec = Exec::Parallel);
std::vector<QTable> finite_horizon_solve(const PomdpModel& model,
                                         std::shared_ptr<const BeliefGrid> grid, int horizon,
                                         const QTable& terminal);

std::string model_hash(const PomdpModel& model);

}  // namespace spe
