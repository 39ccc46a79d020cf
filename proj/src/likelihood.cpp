#include "spe/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "spe/errors.hpp"

namespace spe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Fixed-order sum of per-history terms.
double ordered_sum(const std::vector<double>& terms) {
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

FilteredPath filter(const PomdpModel& model, const History& history) {
  model.check_history(history);
  const int ns = model.n_states();
  const std::size_t T = history.horizon();
  FilteredPath path;
  path.n_states = ns;
  path.beliefs.resize((T + 1) * ns);
  path.sigmas.resize(T);
  std::copy(history.x0.probs().begin(), history.x0.probs().end(), path.beliefs.begin());
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> x(path.beliefs.data() + t * ns, ns);
    const std::span<double> next(path.beliefs.data() + (t + 1) * ns, ns);
    const double sig =
        bayes_step(model, history.obs[t + 1], history.obs[t], x, history.acts[t], next);
    if (sig == 0.0) throw ZeroObservationProbability(t);
    path.sigmas[t] = sig;
  }
  return path;
}

std::vector<FilteredPath> filter_all(const PomdpModel& model, const Dataset& data, Exec exec) {
  std::vector<FilteredPath> paths(data.size());
  std::optional<std::size_t> failed;
  const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::Parallel)
  for (long i = 0; i < n; ++i) {
    try {
      paths[i] = filter(model, data[i]);
    } catch (const ZeroObservationProbability&) {
#pragma omp critical(spe_filter_fail)
      if (!failed || std::size_t(i) < *failed) failed = std::size_t(i);
    }
  }
  if (failed) {
    // Re-run serially to rethrow with the step of the first failing history.
    paths[*failed] = filter(model, data[*failed]);
  }
  return paths;
}

double observation_log_likelihood(const PomdpModel& model, const History& history,
                                  std::size_t burn_in, const Belief* x0) {
  model.check_history(history);
  const int ns = model.n_states();
  const Belief& start = x0 ? *x0 : history.x0;
  if (start.size() != std::size_t(ns)) throw InvalidArgument("prior has the wrong size");
  std::vector<double> x(start.probs().begin(), start.probs().end()), next(ns);
  double ll = 0.0;
  for (std::size_t t = 0; t < history.horizon(); ++t) {
    const double sig = bayes_step(model, history.obs[t + 1], history.obs[t], x,
                                  history.acts[t], next);
    if (sig == 0.0) return kNegInf;
    if (t >= burn_in) ll += std::log(sig);
    x.swap(next);
  }
  return ll;
}

double observation_log_likelihood(const PomdpModel& model, const Dataset& data,
                                  std::size_t burn_in, const Belief* x0, Exec exec) {
  if (x0 && x0->size() != std::size_t(model.n_states()))
    throw InvalidArgument("prior has the wrong size");
  for (const auto& h : data) model.check_history(h);
  std::vector<double> terms(data.size());
  const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::Parallel)
  for (long i = 0; i < n; ++i) terms[i] = observation_log_likelihood(model, data[i], burn_in, x0);
  return ordered_sum(terms);
}

LikelihoodTerms log_likelihood(const PomdpModel& model, const QTable& q, const Dataset& data,
                               Exec exec) {
  if (q.n_obs() != model.n_obs() || q.n_actions() != model.n_actions() ||
      q.grid().n_states() != model.n_states())
    throw InvalidArgument("QTable does not match the model");
  for (const auto& h : data) model.check_history(h);
  std::vector<double> obs(data.size()), choice(data.size());
  const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::Parallel)
  for (long i = 0; i < n; ++i) {
    const History& h = data[i];
    const int ns = model.n_states();
    std::vector<double> x(h.x0.probs().begin(), h.x0.probs().end()), next(ns);
    std::vector<double> row(model.n_actions());
    double lo = 0.0, lc = 0.0;
    for (std::size_t t = 0; t < h.horizon(); ++t) {
      interpolate_q(q, h.obs[t], x, row);
      lc += row[h.acts[t]] - logsumexp(row);
      const double sig = bayes_step(model, h.obs[t + 1], h.obs[t], x, h.acts[t], next);
      if (sig == 0.0) {
        lo = kNegInf;
        break;
      }
      lo += std::log(sig);
      x.swap(next);
    }
    obs[i] = lo;
    choice[i] = lc;
  }
  LikelihoodTerms terms;
  terms.obs = ordered_sum(obs);
  terms.choice = ordered_sum(choice);
  return terms;
}

LikelihoodTerms log_likelihood(const PomdpModel& model, int grid_resolution, const Dataset& data,
                               const SolveOptions& opts) {
  auto grid = std::make_shared<const BeliefGrid>(model.n_states(), grid_resolution);
  const auto solved = solve(model, grid, opts);
  return log_likelihood(model, solved.q, data, opts.exec);
}

ChoiceData::ChoiceData(const Dataset& data, const std::vector<FilteredPath>& paths,
                       const BeliefGrid& grid, std::size_t burn_in) {
  if (data.size() != paths.size()) throw InvalidArgument("one filtered path per history needed");
  offsets_.reserve(data.size() + 1);
  offsets_.push_back(0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& h = data[i];
    if (paths[i].horizon() != h.horizon())
      throw InvalidArgument("filtered path length does not match its history");
    for (std::size_t t = burn_in; t < h.horizon(); ++t)
      decisions_.push_back({h.obs[t], h.acts[t], grid.interpolate(paths[i].belief(t))});
    offsets_.push_back(decisions_.size());
  }
}

namespace {

void decision_q(const QTable& q, const ChoiceData::Decision& d, std::span<double> row) {
  std::fill(row.begin(), row.end(), 0.0);
  for (int k = 0; k < d.w.count; ++k) {
    const auto qn = q.row(d.z, d.w.node[k]);
    for (std::size_t a = 0; a < row.size(); ++a) row[a] += d.w.weight[k] * qn[a];
  }
}

}  // namespace

double pseudo_log_likelihood(const QTable& q, const ChoiceData& data, Exec exec) {
  std::vector<double> terms(data.n_histories());
  const long n = static_cast<long>(terms.size());
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::Parallel)
  for (long i = 0; i < n; ++i) {
    std::vector<double> row(q.n_actions());
    double s = 0.0;
    for (const auto& d : data.history(i)) {
      decision_q(q, d, row);
      s += row[d.a] - logsumexp(row);
    }
    terms[i] = s;
  }
  return ordered_sum(terms);
}

double pseudo_log_likelihood(const QTable& q, const Dataset& data,
                             const std::vector<FilteredPath>& paths) {
  return pseudo_log_likelihood(q, ChoiceData(data, paths, q.grid()));
}

GradQTable::GradQTable(int n_obs, int n_nodes, int n_actions, int n_params)
    : n_obs_(n_obs), n_nodes_(n_nodes), n_actions_(n_actions), n_params_(n_params) {
  values_.assign(std::size_t(n_obs) * n_nodes * n_actions * n_params, 0.0);
}

double GradQTable::sup_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

GradQResult grad_q(const BeliefTransitions& tr, const QTable& q,
                   std::span<const double> node_features, int n_params, const GradQOptions& opts,
                   const GradQTable* warm_start) {
  const int na = tr.n_actions();
  const long cells = static_cast<long>(tr.n_cells());
  const long rows = static_cast<long>(tr.n_rows());
  const int nodes = tr.grid_ptr()->size();
  const std::size_t P = n_params;
  if (node_features.size() != std::size_t(rows) * P)
    throw InvalidArgument("node features do not match the transition rows");
  if (q.values().size() != std::size_t(rows)) throw InvalidArgument("QTable shape mismatch");
  if (!(opts.tol > 0.0)) throw InvalidArgument("grad_q tolerance must be positive");
  const double beta = tr.discount();

  // Choice probabilities at every cell are fixed by q.
  std::vector<double> pi(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(static) if (opts.exec == Exec::Parallel)
  for (long c = 0; c < cells; ++c)
    softmax(std::span<const double>(q.values().data() + c * na, na),
            std::span<double>(pi.data() + c * na, na));

  GradQResult res{GradQTable(tr.n_obs(), nodes, na, n_params), 0, 0.0, 0.0};
  std::vector<double> cur(std::size_t(rows) * P, 0.0), next(cur.size());
  if (warm_start) {
    if (warm_start->values().size() != cur.size())
      throw InvalidArgument("warm start does not match the gradient table shape");
    cur = warm_start->values();
  }
  std::vector<double> gbar(std::size_t(cells) * P);
  int limit = opts.max_iter;
  double prev_step = 0.0;
  for (int k = 1;; ++k) {
#pragma omp parallel for schedule(static) if (opts.exec == Exec::Parallel)
    for (long c = 0; c < cells; ++c) {
      double* dst = gbar.data() + c * P;
      std::fill(dst, dst + P, 0.0);
      for (int a = 0; a < na; ++a) {
        const double w = pi[c * na + a];
        const double* src = cur.data() + (c * na + a) * P;
        for (std::size_t j = 0; j < P; ++j) dst[j] += w * src[j];
      }
    }
    double step = 0.0;
#pragma omp parallel for schedule(static) if (opts.exec == Exec::Parallel) reduction(max : step)
    for (long r = 0; r < rows; ++r) {
      double* dst = next.data() + r * P;
      const double* phi = node_features.data() + r * P;
      for (std::size_t j = 0; j < P; ++j) dst[j] = 0.0;
      for (const auto& e : tr.row(r)) {
        const double* src = gbar.data() + std::size_t(e.cell) * P;
        for (std::size_t j = 0; j < P; ++j) dst[j] += e.weight * src[j];
      }
      for (std::size_t j = 0; j < P; ++j) {
        dst[j] = phi[j] + beta * dst[j];
        step = std::max(step, std::abs(dst[j] - cur[r * P + j]));
      }
    }
    cur.swap(next);
    if (k == 1 && limit <= 0) limit = contraction_iteration_bound(beta, step, opts.tol) + 1;
    if (k > 1 && prev_step > 0.0)
      res.max_contraction_ratio = std::max(res.max_contraction_ratio, step / prev_step);
    prev_step = step;
    const double residual = beta * step;
    if (residual <= opts.tol) {
      res.iterations = k;
      res.residual = residual;
      break;
    }
    if (k >= limit) throw MaxIterExceeded("grad_q", k, residual);
  }
  res.grad.values() = std::move(cur);
  return res;
}

std::vector<double> grad_log_pi(const GradQTable& grad, const QTable& q, int z,
                                std::span<const double> x, int a) {
  const int na = q.n_actions();
  const int P = grad.n_params();
  if (a < 0 || a >= na) throw InvalidArgument("action index out of range");
  const auto w = q.grid().interpolate(x);
  std::vector<double> row(na, 0.0), pi(na);
  std::vector<double> g(std::size_t(na) * P, 0.0);
  for (int k = 0; k < w.count; ++k) {
    for (int b = 0; b < na; ++b) {
      row[b] += w.weight[k] * q(z, w.node[k], b);
      const auto gn = grad.at(z, w.node[k], b);
      for (int j = 0; j < P; ++j) g[std::size_t(b) * P + j] += w.weight[k] * gn[j];
    }
  }
  softmax(row, pi);
  std::vector<double> out(g.begin() + std::size_t(a) * P, g.begin() + std::size_t(a + 1) * P);
  for (int b = 0; b < na; ++b)
    for (int j = 0; j < P; ++j) out[j] -= pi[b] * g[std::size_t(b) * P + j];
  return out;
}

PseudoScore pseudo_score(const QTable& q, const GradQTable& grad, const ChoiceData& data,
                         Exec exec) {
  const int na = q.n_actions();
  const int P = grad.n_params();
  const long n = static_cast<long>(data.n_histories());
  std::vector<double> values(n), grads(std::size_t(n) * P);
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::Parallel)
  for (long i = 0; i < n; ++i) {
    std::vector<double> row(na), pi(na), g(std::size_t(na) * P);
    double v = 0.0;
    double* gi = grads.data() + i * P;
    std::fill(gi, gi + P, 0.0);
    for (const auto& d : data.history(i)) {
      std::fill(row.begin(), row.end(), 0.0);
      std::fill(g.begin(), g.end(), 0.0);
      for (int k = 0; k < d.w.count; ++k) {
        const double wk = d.w.weight[k];
        for (int b = 0; b < na; ++b) {
          row[b] += wk * q(d.z, d.w.node[k], b);
          const auto gn = grad.at(d.z, d.w.node[k], b);
          for (int j = 0; j < P; ++j) g[std::size_t(b) * P + j] += wk * gn[j];
        }
      }
      const double lse = logsumexp(row);
      v += row[d.a] - lse;
      for (int b = 0; b < na; ++b) pi[b] = std::exp(row[b] - lse);
      for (int j = 0; j < P; ++j) {
        double mean = 0.0;
        for (int b = 0; b < na; ++b) mean += pi[b] * g[std::size_t(b) * P + j];
        gi[j] += g[std::size_t(d.a) * P + j] - mean;
      }
    }
    values[i] = v;
  }
  PseudoScore out;
  out.value = ordered_sum(values);
  out.gradient.assign(P, 0.0);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < P; ++j) out.gradient[j] += grads[std::size_t(i) * P + j];
  return out;
}

SmoothnessConstants smoothness_constants(double L_r1, double L_r2, double discount, double N,
                                         double T) {
  if (!(discount > 0.0 && discount < 1.0)) throw InvalidArgument("discount must lie in (0, 1)");
  if (L_r1 < 0.0 || L_r2 < 0.0 || N < 0.0 || T < 0.0)
    throw InvalidArgument("smoothness inputs must be nonnegative");
  const double one_minus = 1.0 - discount;
  const double cubed = one_minus * one_minus * one_minus;
  SmoothnessConstants c;
  c.L_r1 = L_r1;
  c.L_r2 = L_r2;
  c.L_Q = L_r2 / one_minus + 2.0 * discount * L_r1 * L_r1 / cubed;
  c.L_Vbar = L_r2 / one_minus + 2.0 * L_r1 * L_r1 / cubed;
  c.L = N * T * (c.L_Q + c.L_Vbar);
  return c;
}

}  // namespace spe
