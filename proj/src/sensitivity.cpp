#include "spe/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <sstream>

#include "spe/errors.hpp"

namespace spe {

namespace {

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

void draw_flat_dirichlet(std::mt19937_64& rng, std::span<double> out) {
  double total = 0.0;
  for (double& v : out) {
    v = -std::log1p(-uniform01(rng));
    total += v;
  }
  for (double& v : out) v /= total;
}

struct Triple {
  int z_next, z, a;
  double eta;
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index),
                    std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

double directed_divergence(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("beliefs have different sizes");
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < x.size(); ++s)
    if (y[s] > 0.0) m = std::min(m, x[s] / y[s]);
  if (!std::isfinite(m)) throw InvalidArgument("belief has no support");
  return 1.0 - m;
}

double belief_metric(std::span<const double> x, std::span<const double> y) {
  return std::max(directed_divergence(x, y), directed_divergence(y, x));
}

double contraction_coefficient(const PomdpModel& model, int z_next, int z, int a) {
  model.check_indices(z, a);
  model.check_indices(z_next, a);
  const int ns = model.n_states();
  std::vector<std::vector<double>> post;
  std::vector<double> vertex(ns), out(ns);
  for (int i = 0; i < ns; ++i) {
    std::fill(vertex.begin(), vertex.end(), 0.0);
    vertex[i] = 1.0;
    if (bayes_step(model, z_next, z, vertex, a, out) > 0.0) post.push_back(out);
  }
  if (post.empty())
    throw Undefined("observation has zero probability from every hidden state");
  double eta = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i)
    for (std::size_t j = i + 1; j < post.size(); ++j)
      eta = std::max(eta, belief_metric(post[i], post[j]));
  return eta;
}

ContractionCheck contraction_check(const PomdpModel& model, std::size_t pairs_per_triple,
                                   std::uint64_t seed, double slack, Exec exec) {
  const int ns = model.n_states();
  std::vector<Triple> triples;
  std::vector<double> vertex(ns);
  for (int a = 0; a < model.n_actions(); ++a)
    for (int z = 0; z < model.n_obs(); ++z)
      for (int zn = 0; zn < model.n_obs(); ++zn) {
        bool any = false;
        for (int i = 0; i < ns && !any; ++i) {
          std::fill(vertex.begin(), vertex.end(), 0.0);
          vertex[i] = 1.0;
          any = sigma(model, zn, z, vertex, a) > kZeroProbability;
        }
        if (any) triples.push_back({zn, z, a, contraction_coefficient(model, zn, z, a)});
      }

  ContractionCheck res;
  res.triples = triples.size();
  std::vector<std::size_t> violations(triples.size(), 0), pairs(triples.size(), 0);
  std::vector<double> excess(triples.size(), -std::numeric_limits<double>::infinity());
  const long n = static_cast<long>(triples.size());
#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::Parallel)
  for (long t = 0; t < n; ++t) {
    const Triple& tr = triples[t];
    auto rng = stream(seed, std::uint64_t(t));
    std::vector<double> x1(ns), x2(ns), p1(ns), p2(ns);
    for (std::size_t k = 0; k < pairs_per_triple; ++k) {
      draw_flat_dirichlet(rng, x1);
      draw_flat_dirichlet(rng, x2);
      if (bayes_step(model, tr.z_next, tr.z, x1, tr.a, p1) == 0.0) continue;
      if (bayes_step(model, tr.z_next, tr.z, x2, tr.a, p2) == 0.0) continue;
      const double gap = belief_metric(p1, p2) - tr.eta;
      excess[t] = std::max(excess[t], gap);
      if (gap > slack) ++violations[t];
      ++pairs[t];
    }
  }
  res.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < triples.size(); ++t) {
    res.violations += violations[t];
    res.pairs += pairs[t];
    res.max_excess = std::max(res.max_excess, excess[t]);
    res.max_coefficient = std::max(res.max_coefficient, triples[t].eta);
  }
  return res;
}

SweepResult x0_sweep_estimate(const Dataset& data, const DynamicsFamily& family,
                              const SweepConfig& cfg) {
  SweepResult res;
  res.candidates = cfg.candidates;
  if (res.candidates.empty()) {
    if (family.n_states() != 2)
      throw InvalidArgument("default prior candidates need a two-state model");
    for (int i = 0; i <= 10; ++i) res.candidates.push_back({1.0 - i / 10.0, i / 10.0});
  }
  for (const auto& c : res.candidates) {
    if (c.size() != std::size_t(family.n_states()))
      throw InvalidArgument("prior candidate has the wrong size");
    validate_belief(c);
  }
  if (cfg.burn_ins.empty()) throw InvalidArgument("no burn-in lengths given");
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& h : data) shortest = std::min(shortest, h.horizon());
  for (int m : cfg.burn_ins) {
    if (m < 0) throw InvalidArgument("burn-in lengths must be nonnegative");
    if (!data.empty() && std::size_t(m) >= shortest)
      throw InvalidArgument("burn-in of " + std::to_string(m) +
                            " leaves no observations in a history of length " +
                            std::to_string(shortest));
  }
  validate(cfg.estimator);

  const std::size_t nc = res.candidates.size();
  const std::size_t jobs = cfg.burn_ins.size() * nc;
  std::vector<std::vector<double>> est(jobs);
  // Candidates run concurrently; each estimate is then serial inside.
  const Exec outer = cfg.estimator.exec;
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) if (outer == Exec::Parallel)
  for (long j = 0; j < long(jobs); ++j) {
    try {
      EstimatorConfig c = cfg.estimator;
      c.exec = Exec::Serial;
      c.burn_in = std::size_t(cfg.burn_ins[j / nc]);
      c.x0_override = res.candidates[j % nc];
      est[j] = stage1_fit_theta2(data, family, c).natural;
    } catch (...) {
#pragma omp critical(spe_sweep_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t m = 0; m < cfg.burn_ins.size(); ++m) {
    SweepPoint p;
    p.burn_in = cfg.burn_ins[m];
    for (std::size_t c = 0; c < nc; ++c) p.estimates.push_back(est[m * nc + c]);
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t k = i + 1; k < nc; ++k) {
        double d2 = 0.0;
        for (std::size_t e = 0; e < p.estimates[i].size(); ++e) {
          const double d = p.estimates[i][e] - p.estimates[k][e];
          d2 += d * d;
        }
        p.spread = std::max(p.spread, std::sqrt(d2));
      }
    if (!res.points.empty() && p.spread > res.points.back().spread + cfg.slack)
      res.non_increasing = false;
    res.points.push_back(std::move(p));
  }
  return res;
}

std::string sweep_to_csv(const SweepResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "M,spread\n";
  for (const auto& p : r.points) out << p.burn_in << ',' << p.spread << '\n';
  return out.str();
}

bool is_rank_one(const PomdpModel& model, double tol) {
  for (int a = 0; a < model.n_actions(); ++a)
    for (int z = 0; z < model.n_obs(); ++z) {
      const auto first = model.kernel_row(a, z, 0);
      for (int s = 1; s < model.n_states(); ++s) {
        const auto row = model.kernel_row(a, z, s);
        for (std::size_t k = 0; k < row.size(); ++k)
          if (std::abs(row[k] - first[k]) > tol) return false;
      }
    }
  return true;
}

ProbeResult two_period_identification_probe(const PomdpModel& ma, const PomdpModel& mb,
                                            const Belief& x0, double tol) {
  if (ma.n_states() != mb.n_states() || ma.n_obs() != mb.n_obs() ||
      ma.n_actions() != mb.n_actions())
    throw InvalidArgument("models must share their state, observation and action spaces");
  if (x0.size() != std::size_t(ma.n_states())) throw InvalidArgument("prior has the wrong size");
  ProbeResult res;
  res.rank_one = is_rank_one(ma) || is_rank_one(mb);
  const int Z = ma.n_obs(), A = ma.n_actions(), S = ma.n_states();

  for (int z0 = 0; z0 < Z; ++z0)
    for (int a0 = 0; a0 < A; ++a0)
      for (int z1 = 0; z1 < Z; ++z1) {
        const double d = std::abs(sigma(ma, z1, z0, x0, a0) - sigma(mb, z1, z0, x0, a0));
        if (d > tol) {
          res.distinguishable = true;
          res.period = 0;
          res.z0 = z0, res.a0 = a0, res.z1 = z1;
          res.difference = d;
          return res;
        }
      }

  std::vector<double> xa(S), xb(S);
  for (int z0 = 0; z0 < Z; ++z0)
    for (int a0 = 0; a0 < A; ++a0)
      for (int z1 = 0; z1 < Z; ++z1) {
        const double sa = bayes_step(ma, z1, z0, x0.probs(), a0, xa);
        const double sb = bayes_step(mb, z1, z0, x0.probs(), a0, xb);
        if (sa == 0.0 || sb == 0.0) continue;
        for (int a1 = 0; a1 < A; ++a1)
          for (int z2 = 0; z2 < Z; ++z2) {
            const double d = std::abs(sigma(ma, z2, z1, xa, a1) - sigma(mb, z2, z1, xb, a1));
            if (d > tol) {
              res.distinguishable = true;
              res.period = 1;
              res.z0 = z0, res.a0 = a0, res.z1 = z1, res.a1 = a1, res.z2 = z2;
              res.difference = d;
              return res;
            }
          }
      }
  return res;
}

}  // namespace spe
