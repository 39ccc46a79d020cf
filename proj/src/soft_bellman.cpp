#include "spe/soft_bellman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spe/errors.hpp"
#include "spe/util.hpp"

namespace spe {

QTable::QTable(std::shared_ptr<const BeliefGrid> grid, int n_obs, int n_actions)
    : grid_(std::move(grid)), n_obs_(n_obs), n_actions_(n_actions) {
  if (!grid_) throw InvalidArgument("QTable needs a grid");
  if (n_obs < 1 || n_actions < 1) throw InvalidArgument("QTable dimensions must be positive");
  values_.assign(std::size_t(n_obs) * grid_->size() * n_actions, 0.0);
}

double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void softmax(std::span<const double> q, std::span<double> out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : q) m = std::max(m, x);
  double s = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    out[a] = std::exp(q[a] - m);
    s += out[a];
  }
  for (std::size_t a = 0; a < q.size(); ++a) out[a] /= s;
}

void interpolate_q(const QTable& q, int z, std::span<const double> x, std::span<double> out) {
  if (z < 0 || z >= q.n_obs()) throw InvalidArgument("observation index out of range");
  const auto w = q.grid().interpolate(x);
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < w.count; ++k) {
    const auto row = q.row(z, w.node[k]);
    for (int a = 0; a < q.n_actions(); ++a) out[a] += w.weight[k] * row[a];
  }
}

double soft_value(const QTable& q, int z, std::span<const double> x) {
  std::vector<double> row(q.n_actions());
  interpolate_q(q, z, x, row);
  return kEulerGamma + logsumexp(row);
}

std::vector<double> ccp(const QTable& q, int z, std::span<const double> x) {
  std::vector<double> row(q.n_actions());
  interpolate_q(q, z, x, row);
  std::vector<double> p(row.size());
  softmax(row, p);
  return p;
}

BeliefTransitions::BeliefTransitions(const PomdpModel& model,
                                     std::shared_ptr<const BeliefGrid> grid)
    : grid_(std::move(grid)),
      n_obs_(model.n_obs()),
      n_actions_(model.n_actions()),
      discount_(model.discount()) {
  if (!grid_ || grid_->n_states() != model.n_states())
    throw InvalidArgument("grid does not match the model's state count");
  const int nodes = grid_->size();
  const int ns = model.n_states();
  const std::size_t rows = std::size_t(n_obs_) * nodes * n_actions_;
  std::vector<std::vector<Entry>> per_row(rows);

#pragma omp parallel for schedule(dynamic, 1)
  for (int z = 0; z < n_obs_; ++z) {
    std::vector<double> post(ns);
    for (int n = 0; n < nodes; ++n) {
      const auto x = grid_->node(n);
      for (int a = 0; a < n_actions_; ++a) {
        auto& out = per_row[(std::size_t(z) * nodes + n) * n_actions_ + a];
        for (int z2 = 0; z2 < n_obs_; ++z2) {
          const double sig = bayes_step(model, z2, z, x, a, post);
          if (sig == 0.0) continue;
          const auto w = grid_->interpolate(post);
          for (int k = 0; k < w.count; ++k)
            out.push_back({z2 * nodes + w.node[k], sig * w.weight[k]});
        }
      }
    }
  }

  offsets_.resize(rows + 1);
  offsets_[0] = 0;
  for (std::size_t r = 0; r < rows; ++r) offsets_[r + 1] = offsets_[r] + per_row[r].size();
  entries_.reserve(offsets_.back());
  for (auto& v : per_row) entries_.insert(entries_.end(), v.begin(), v.end());
}

std::vector<double> node_rewards(const PomdpModel& model, const BeliefGrid& grid) {
  const int nodes = grid.size();
  std::vector<double> r(std::size_t(model.n_obs()) * nodes * model.n_actions());
  for (int z = 0; z < model.n_obs(); ++z)
    for (int n = 0; n < nodes; ++n)
      for (int a = 0; a < model.n_actions(); ++a)
        r[(std::size_t(z) * nodes + n) * model.n_actions() + a] =
            expected_reward(model, z, grid.node(n), a);
  return r;
}

BellmanOperator::BellmanOperator(const PomdpModel& model, std::shared_ptr<const BeliefGrid> grid)
    : transitions_(std::make_shared<BeliefTransitions>(model, grid)),
      rewards_(node_rewards(model, *grid)) {}

BellmanOperator::BellmanOperator(std::shared_ptr<const BeliefTransitions> transitions,
                                 std::vector<double> rewards)
    : transitions_(std::move(transitions)), rewards_(std::move(rewards)) {
  if (rewards_.size() != transitions_->n_rows())
    throw InvalidArgument("reward table does not match the transition rows");
}

QTable BellmanOperator::zeros() const {
  return QTable(transitions_->grid_ptr(), transitions_->n_obs(), transitions_->n_actions());
}

void BellmanOperator::apply(const QTable& in, QTable& out, Exec exec) const {
  const auto& tr = *transitions_;
  const int na = tr.n_actions();
  const long cells = static_cast<long>(tr.n_cells());
  const long rows = static_cast<long>(tr.n_rows());
  const double beta = tr.discount();
  const auto& qv = in.values();
  auto& ov = out.values();
  std::vector<double> vbar(cells);

#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long c = 0; c < cells; ++c)
    vbar[c] = kEulerGamma + logsumexp(std::span<const double>(qv.data() + c * na, na));

#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long r = 0; r < rows; ++r) {
    double cont = 0.0;
    for (const auto& e : tr.row(r)) cont += e.weight * vbar[e.cell];
    ov[r] = rewards_[r] + beta * cont;
  }
}

QTable bellman_apply_reference(const QTable& q, const PomdpModel& model) {
  const auto& grid = q.grid();
  QTable out(q.grid_ptr(), q.n_obs(), q.n_actions());
  std::vector<double> post(model.n_states());
  for (int z = 0; z < model.n_obs(); ++z) {
    for (int n = 0; n < grid.size(); ++n) {
      const auto x = grid.node(n);
      for (int a = 0; a < model.n_actions(); ++a) {
        double cont = 0.0;
        for (int z2 = 0; z2 < model.n_obs(); ++z2) {
          const double sig = sigma(model, z2, z, x, a);
          if (sig < kZeroProbability) continue;
          bayes_step(model, z2, z, x, a, post);
          // Successor value interpolated from node soft values.
          const auto w = grid.interpolate(post);
          double v = 0.0;
          for (int k = 0; k < w.count; ++k)
            v += w.weight[k] * (kEulerGamma + logsumexp(q.row(z2, w.node[k])));
          cont += sig * v;
        }
        out(z, n, a) = expected_reward(model, z, x, a) + model.discount() * cont;
      }
    }
  }
  return out;
}

QTable bellman_apply(const QTable& q, const PomdpModel& model, Exec exec) {
  const BellmanOperator op(model, q.grid_ptr());
  QTable out = op.zeros();
  op.apply(q, out, exec);
  return out;
}

double sup_distance(const QTable& a, const QTable& b) {
  if (a.values().size() != b.values().size()) throw InvalidArgument("QTable shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

int contraction_iteration_bound(double discount, double initial_residual, double tol) {
  if (discount <= 0.0 || initial_residual <= tol * (1.0 - discount)) return 1;
  const double k = std::log(tol * (1.0 - discount) / initial_residual) / std::log(discount);
  return static_cast<int>(std::ceil(k)) + 1;
}

SolveResult solve(const BellmanOperator& op, const SolveOptions& opts, const QTable* warm_start) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("solve tolerance must be positive");
  const double beta = op.transitions().discount();
  QTable cur = warm_start ? *warm_start : op.zeros();
  QTable next = op.zeros();
  int limit = opts.max_iter;
  double first = 0.0;
  for (int k = 1;; ++k) {
    op.apply(cur, next, opts.exec);
    const double step = sup_distance(next, cur);
    if (k == 1) {
      first = step;
      if (limit <= 0) limit = contraction_iteration_bound(beta, step, opts.tol) + 1;
    }
    std::swap(cur, next);
    // |H Q_{k+1} - Q_{k+1}| <= beta |Q_{k+1} - Q_k|.
    const double residual = beta * step;
    if (residual <= opts.tol) {
      return SolveResult{std::move(cur), k, residual, first};
    }
    if (k >= limit) throw MaxIterExceeded("soft Bellman solve", k, residual);
  }
}

SolveResult solve(const PomdpModel& model, std::shared_ptr<const BeliefGrid> grid,
                  const SolveOptions& opts) {
  const BellmanOperator op(model, std::move(grid));
  auto res = solve(op, opts);
  res.q.model_hash = model_hash(model);
  return res;
}

std::vector<QTable> finite_horizon_solve(const BellmanOperator& op, int horizon,
                                         const QTable& terminal, Exec exec) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  std::vector<QTable> seq(horizon + 1, terminal);
  for (int t = horizon - 1; t >= 0; --t) op.apply(seq[t + 1], seq[t], exec);
  return seq;
}

std::vector<QTable> finite_horizon_solve(const PomdpModel& model,
                                         std::shared_ptr<const BeliefGrid> grid, int horizon,
                                         const QTable& terminal) {
  const BellmanOperator op(model, std::move(grid));
  return finite_horizon_solve(op, horizon, terminal);
}

std::string model_hash(const PomdpModel& model) {
  Fnv1a h;
  const int dims[3] = {model.n_states(), model.n_obs(), model.n_actions()};
  h.update(std::span<const int>(dims));
  const double beta = model.discount();
  h.update(&beta, sizeof beta);
  h.update(std::span<const double>(model.kernel_data()));
  h.update(std::span<const double>(model.reward_data()));
  return h.hex();
}

}  // namespace spe
