// Acceptance run: one line per criterion, nonzero exit if any fails.
// SPE_LONG_TESTS=1 adds the N = 3000 recovery run. SPE_REAL_DATA=<path>
// fits both models to a real replacement dataset in the JSON-lines format.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spe/estimator.hpp"
#include "spe/likelihood.hpp"
#include "spe/replacement.hpp"
#include "spe/sensitivity.hpp"

using namespace spe;

namespace {

constexpr double kDiscount = 0.95;
constexpr int kHistories = 500;
constexpr int kHorizon = 100;
constexpr std::uint64_t kSeed = 42;

constexpr double kDynamicsTol = 0.02;
constexpr double kRewardTol = 0.08;
constexpr double kGapMin = 0.08;
constexpr double kSpreadTolAt8 = 0.1;
constexpr double kSweepSlack = 0.02;
constexpr double kGradEps = 1e-8;

constexpr double kLongDynamicsTol = 0.006;
constexpr double kLongRewardTol = 0.012;
constexpr double kLongLogLik = -262973.0;
constexpr double kLongLogLikRel = 0.01;

constexpr double kRealPomdp = -3819.0;
constexpr double kRealMdp = -4495.0;
constexpr double kRealGain = 0.177;

constexpr double kContractionSlack = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kScoreTol = 1e-10;
constexpr double kOracleTol = 1e-10;
constexpr std::size_t kCertificatePairs = 10000;

int failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void note(const std::string& id, const std::string& detail) {
  std::cout << "N/A  " << id << ": " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool env_flag(const char* name) {
  const char* v = std::getenv(name);
  return v && *v && std::string(v) != "0";
}

bool strictly_increasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (!(trace[k] > trace[k - 1])) return false;
  return true;
}

struct Deviations {
  double dynamics = 0.0;
  double reward = 0.0;
  std::string detail;
};

Deviations deviations(const EngineParams& truth, const EstimateReport& r) {
  const EngineDynamics family(truth.z_max);
  const auto want = family.natural(family.raw_from(truth));
  Deviations d;
  for (std::size_t k = 0; k < want.size(); ++k)
    d.dynamics = std::max(d.dynamics, std::abs(r.stage1.natural[k] - want[k]));
  const auto& th = r.stage2.theta1;
  const double dev[3] = {std::abs(th[0] - truth.theta1[0]), std::abs(th[1] - truth.theta1[1]),
                         std::abs(th[2] - truth.rc) / 10.0};
  d.reward = std::max({dev[0], dev[1], dev[2]});
  d.detail = "max dynamics deviation " + fmt(d.dynamics) + ", theta1 = (" + fmt(th[0]) + ", " +
             fmt(th[1]) + "), RC = " + fmt(th[2]) + ", reward deviations (" + fmt(dev[0]) +
             ", " + fmt(dev[1]) + ", " + fmt(dev[2]) + ")";
  return d;
}

int max_mileage(const Dataset& data) {
  int m = 0;
  for (const auto& h : data)
    for (int z : h.obs) m = std::max(m, z);
  return m;
}

EstimatorConfig acceptance_config() {
  EstimatorConfig cfg;
  cfg.discount = kDiscount;
  cfg.grad_eps = kGradEps;
  return cfg;
}

// Data, fits and monotonicity evidence shared by the criteria.
struct SyntheticRun {
  EngineParams truth;
  Dataset data;
  EstimateReport pomdp;
  EstimateReport mdp;
};

SyntheticRun run_synthetic(int n_histories, std::vector<std::vector<double>>& traces) {
  SyntheticRun run;
  SimConfig sc;
  sc.n_histories = n_histories;
  sc.horizon = kHorizon;
  sc.seed = kSeed;
  const auto t0 = std::chrono::steady_clock::now();
  run.data = simulate(run.truth, kDiscount, sc).data;
  std::cout << "simulated " << n_histories << " x " << kHorizon << " in " << fmt(seconds_since(t0), 3)
            << " s, max mileage bin " << max_mileage(run.data) << " of " << run.truth.z_max
            << std::endl;
  const auto cfg = acceptance_config();
  run.pomdp = estimate_engine(run.data, run.truth.z_max, cfg);
  std::cout << "pomdp fit in " << fmt(run.pomdp.runtime_seconds, 3) << " s ("
            << run.pomdp.stage2.iterations << " ascent steps, " << run.pomdp.stage2.stop_reason
            << "), log-likelihood " << fmt(run.pomdp.likelihood.total(), 8) << std::endl;
  run.mdp = fit_mdp_baseline(run.data, run.truth.z_max, cfg);
  std::cout << "mdp fit in " << fmt(run.mdp.runtime_seconds, 3) << " s ("
            << run.mdp.stage2.iterations << " ascent steps, " << run.mdp.stage2.stop_reason
            << "), log-likelihood " << fmt(run.mdp.likelihood.total(), 8) << std::endl;
  traces.push_back(run.pomdp.stage2.trace);
  traces.push_back(run.mdp.stage2.trace);
  return run;
}

void criterion_recovery(const SyntheticRun& run) {
  const auto d = deviations(run.truth, run.pomdp);
  const bool unsaturated = max_mileage(run.data) < run.truth.z_max - 1;
  const bool ok = run.pomdp.converged() && unsaturated && d.dynamics <= kDynamicsTol &&
                  d.reward <= kRewardTol;
  report("1 synthetic recovery (N=500, T=100)", ok,
         d.detail + "; tolerances " + fmt(kDynamicsTol) + " / " + fmt(kRewardTol) +
             (run.pomdp.converged() ? "" : "; estimator did not converge") +
             (unsaturated ? "" : "; mileage reached the top bin"));
}

void criterion_gap(const SyntheticRun& run) {
  const double lp = run.pomdp.likelihood.total(), lm = run.mdp.likelihood.total();
  const double gap = (lp - lm) / std::abs(lp);
  report("2 misspecification gap", run.pomdp.converged() && run.mdp.converged() && gap >= kGapMin,
         "pomdp " + fmt(lp, 8) + ", mdp " + fmt(lm, 8) + ", mdp worse by " + fmt(100 * gap, 3) +
             "% (need >= " + fmt(100 * kGapMin) + "%)");
}

void criterion_sweep(const SyntheticRun& run) {
  SweepConfig cfg;
  cfg.slack = kSweepSlack;
  cfg.estimator = acceptance_config();
  cfg.estimator.theta2_init = run.pomdp.stage1.raw;
  cfg.estimator.stage1_starts = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = x0_sweep_estimate(run.data, EngineDynamics(run.truth.z_max), cfg);
  std::string detail;
  double at8 = INFINITY;
  for (const auto& p : r.points) {
    detail += "M=" + std::to_string(p.burn_in) + ": " + fmt(p.spread, 3) + "  ";
    if (p.burn_in == 8) at8 = p.spread;
  }
  detail += "(" + fmt(seconds_since(t0), 3) + " s)";
  report("3 prior-robustness decay", at8 <= kSpreadTolAt8 && r.non_increasing,
         detail + (r.non_increasing ? "" : "; spread increases beyond the slack"));
}

void criterion_real_data() {
  const char* path = std::getenv("SPE_REAL_DATA");
  const std::string target = "targets pomdp " + fmt(kRealPomdp) + " vs mdp " + fmt(kRealMdp) +
                             " (" + fmt(100 * kRealGain, 3) + "% better)";
  if (!path || !*path) {
    note("4 real-data targets", target + "; dataset unavailable, set SPE_REAL_DATA to run");
    return;
  }
  const auto data = load_dataset(path);
  const int z_max = std::max(200, observed_obs_count(data));
  const auto cfg = acceptance_config();
  const auto p = estimate_engine(data, z_max, cfg);
  const auto m = fit_mdp_baseline(data, z_max, cfg);
  const double gain = (p.likelihood.total() - m.likelihood.total()) / std::abs(m.likelihood.total());
  note("4 real-data targets", target + "; measured pomdp " + fmt(p.likelihood.total(), 8) +
                                  " vs mdp " + fmt(m.likelihood.total(), 8) + " (" +
                                  fmt(100 * gain, 3) + "% better)");
}

void criterion_long(std::vector<std::vector<double>>& traces) {
  if (!env_flag("SPE_LONG_TESTS")) {
    note("1b full-scale recovery (N=3000)", "opt-in, set SPE_LONG_TESTS=1");
    return;
  }
  auto run = run_synthetic(3000, traces);
  const auto d = deviations(run.truth, run.pomdp);
  const double ll = run.pomdp.likelihood.total();
  const double rel = std::abs(ll - kLongLogLik) / std::abs(kLongLogLik);
  report("1b full-scale recovery (N=3000)",
         run.pomdp.converged() && d.dynamics <= kLongDynamicsTol && d.reward <= kLongRewardTol &&
             rel <= kLongLogLikRel,
         d.detail + "; log-likelihood " + fmt(ll, 8) + " vs " + fmt(kLongLogLik, 8) + " (" +
             fmt(100 * rel, 3) + "% off)");
}

void property_suite(const SyntheticRun& run, const std::vector<std::vector<double>>& traces) {
  const auto t0 = std::chrono::steady_clock::now();

  {
    const auto m = testing::random_model(2, 4, 2, kDiscount, 101);
    const double ratio = testing::max_contraction_ratio(m, 21, 100, 7);
    report("5a Bellman contraction", ratio <= kDiscount + kContractionSlack,
           "max ratio " + fmt(ratio, 12) + " over 100 pairs, beta " + fmt(kDiscount));
  }
  {
    const auto m = testing::random_model(2, 4, 2, kDiscount, 102);
    const auto gap = testing::finite_horizon_gap(m, 21, 200);
    report("5b finite-horizon oracle", gap.gap <= gap.bound,
           "H=200 sup gap " + fmt(gap.gap, 3) + " <= bound " + fmt(gap.bound, 3));
  }
  {
    const auto probe = testing::probe_score_gradient(testing::small_engine(), kDiscount, 11, 20, 11);
    report("5c score vs finite differences", probe.max_relative_error <= kGradRelTol,
           "max relative error " + fmt(probe.max_relative_error, 3) + " on 20 probes");
    report("5d score identity", probe.max_score_identity <= kScoreTol,
           "max |sum_a pi grad log pi| " + fmt(probe.max_score_identity, 3));
  }
  {
    bool ok = !traces.empty();
    for (const auto& t : traces) ok = ok && strictly_increasing(t);
    report("5e monotone ascent", ok,
           std::to_string(traces.size()) + " backtracking runs with strictly increasing objective");
  }
  {
    // Fixed step 1/L on the acceptance data, beliefs from the stage-1 fit.
    const EngineDynamics family(run.truth.z_max);
    auto cfg = acceptance_config();
    cfg.step_rule = StepRule::Fixed;
    cfg.max_outer = 20;
    const PomdpModel dyn(2, run.truth.z_max, 2, kDiscount, family.kernel(run.pomdp.stage1.raw),
                         std::vector<double>(std::size_t(2) * run.truth.z_max * 2, 0.0));
    const BeliefGrid grid(2, cfg.grid_resolution);
    const ChoiceData choices(run.data, run.pomdp.stage1.paths, grid);
    const auto r = stage2_policy_gradient(dyn, engine_reward(run.truth.z_max), choices, cfg);
    report("5f fixed-step gradient bound", r.theorem4_holds && r.step_below_limit,
           "min |grad|^2 " + fmt(r.theorem4_lhs, 4) + " <= " + fmt(r.theorem4_rhs, 4) + " after " +
               std::to_string(r.iterations) + " steps, L " + fmt(r.smoothness.L, 4));
  }
  {
    const auto m = build_engine_model(run.truth, kDiscount);
    const auto c = contraction_check(m, kCertificatePairs, 5);
    report("5g contraction certificate", c.passed(),
           std::to_string(c.pairs) + " pairs over " + std::to_string(c.triples) +
               " (z', z, a), violations " + std::to_string(c.violations) + ", max eta " +
               fmt(c.max_coefficient, 6));
  }
  {
    const auto m = testing::random_model(2, 4, 2, kDiscount, 103);
    const Belief x0{0.4, 0.6};
    const auto witness =
        two_period_identification_probe(m, testing::marginal_preserving_perturbation(m, 0.02), x0);
    const auto flat = testing::rank_one_copy(m);
    const auto degenerate = two_period_identification_probe(flat, flat, x0);
    report("5h identification probe",
           witness.distinguishable && witness.period == 1 && !witness.rank_one &&
               degenerate.rank_one,
           "perturbation witnessed in period " + std::to_string(witness.period) +
               " (difference " + fmt(witness.difference, 3) + "), rank-one pair flagged " +
               (degenerate.rank_one ? "yes" : "no"));
  }
  {
    std::mt19937_64 rng(104);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const auto m = testing::random_model(2, 3, 2, kDiscount, 200 + k, 2.0);
      const auto q = solve(m, std::make_shared<const BeliefGrid>(2, 11)).q;
      const auto h = testing::random_history(m, 3, rng);
      const auto got = log_likelihood(m, q, Dataset{h}, Exec::Serial);
      const auto want = testing::enumerate_log_likelihood(m, q, h);
      worst = std::max(worst, std::abs(got.total() - want.total()));
    }
    report("5i brute-force likelihood oracle", worst <= kOracleTol,
           "max absolute difference " + fmt(worst, 3) + " on 5 histories of length 3");
  }
  std::cout << "property suite in " << fmt(seconds_since(t0), 3) << " s" << std::endl;
}

}  // namespace

int main() {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> traces;
    const auto run = run_synthetic(kHistories, traces);
    criterion_recovery(run);
    criterion_gap(run);
    criterion_sweep(run);
    criterion_real_data();
    criterion_long(traces);
    property_suite(run, traces);
    std::cout << "total " << fmt(seconds_since(t0), 4) << " s, " << failures << " failing"
              << std::endl;
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
