#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spe/dynamics.hpp"
#include "spe/estimator.hpp"
#include "spe/pomdp.hpp"

namespace spe {

// d(x, y) = 1 - min { x(s) / y(s) : y(s) > 0 }.
double directed_divergence(std::span<const double> x, std::span<const double> y);

// max(d(x, y), d(y, x)).
double belief_metric(std::span<const double> x, std::span<const double> y);
inline double belief_metric(const Belief& x, const Belief& y) {
  return belief_metric(x.probs(), y.probs());
}

// Largest belief_metric between the posteriors of two vertex priors after
// observing z' from (z, a). Vertices with sigma = 0 are skipped; throws
// Undefined when sigma vanishes at every vertex.
double contraction_coefficient(const PomdpModel& model, int z_next, int z, int a);

struct ContractionCheck {
  std::size_t triples = 0;  // (z', z, a) with a defined coefficient
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double max_excess = 0.0;  // largest metric - coefficient observed
  double max_coefficient = 0.0;
  bool passed() const { return violations == 0; }
};

// Draws `pairs_per_triple` random belief pairs (flat Dirichlet) for every
// (z', z, a) with a defined coefficient and checks
// belief_metric(lambda x1, lambda x2) <= coefficient + slack.
ContractionCheck contraction_check(const PomdpModel& model, std::size_t pairs_per_triple,
                                   std::uint64_t seed, double slack = 1e-10,
                                   Exec exec = Exec::Parallel);

struct SweepConfig {
  // Candidate priors; empty selects 11 evenly spaced points on the edge
  // between the two vertices (two-state models only).
  std::vector<std::vector<double>> candidates;
  std::vector<int> burn_ins{1, 2, 4, 8, 16};
  double slack = 0.02;
  EstimatorConfig estimator;
};

struct SweepPoint {
  int burn_in = 0;
  std::vector<std::vector<double>> estimates;  // natural dynamics per candidate
  double spread = 0.0;  // largest pairwise 2-norm distance
};

struct SweepResult {
  std::vector<std::vector<double>> candidates;
  std::vector<SweepPoint> points;
  // spread(M_{k+1}) <= spread(M_k) + slack for consecutive burn-ins.
  bool non_increasing = true;
};

// Re-estimates the dynamics from every candidate prior, discarding the
// first M transitions of each history from the observation term.
SweepResult x0_sweep_estimate(const Dataset& data, const DynamicsFamily& family,
                              const SweepConfig& cfg);

std::string sweep_to_csv(const SweepResult& r);

struct ProbeResult {
  bool distinguishable = false;
  // Either kernel is rank one (rows independent of the hidden state), so the
  // hidden dynamics are not identified whatever the statistics say.
  bool rank_one = false;
  int period = -1;  // 0: first-period statistic differs, 1: second-period
  int z0 = -1, a0 = -1, z1 = -1, a1 = -1, z2 = -1;
  double difference = 0.0;
};

// Compares sigma(z1 | z0, x0, a0) over all (z0, a0, z1), then the
// second-period sigma(z2 | z1, x1, a1) after one belief update.
ProbeResult two_period_identification_probe(const PomdpModel& a, const PomdpModel& b,
                                            const Belief& x0, double tol = 1e-12);

bool is_rank_one(const PomdpModel& model, double tol = 1e-12);

}  // namespace spe
