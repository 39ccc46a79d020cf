#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spe/errors.hpp"
#include "spe/estimator.hpp"
#include "spe/io.hpp"
#include "spe/replacement.hpp"
#include "spe/sensitivity.hpp"

using namespace spe;

namespace {

EstimatorConfig fast_config() {
  EstimatorConfig c;
  c.grid_resolution = 11;
  c.discount = 0.9;
  c.stage1_starts = 1;
  c.grad_eps = 1e-6;
  return c;
}

struct Setup {
  PomdpModel model;
  LinearReward reward;
  Dataset data;
  std::shared_ptr<const BeliefGrid> grid;
  std::vector<FilteredPath> paths;
};

Setup small_setup(double discount, int n_actions, std::uint64_t seed) {
  auto m = testing::random_model(2, 3, n_actions, discount, seed);
  std::mt19937_64 rng(seed);
  std::vector<double> f(std::size_t(n_actions) * 3 * 2 * 2);
  for (double& v : f) v = 2.0 * testing::uniform01(rng) - 1.0;
  LinearReward reward(2, 3, n_actions, 2, f);
  m = m.with_reward(reward.reward(std::vector<double>{0.8, -0.5}));
  auto grid = std::make_shared<const BeliefGrid>(2, 11);
  const auto q = solve(m, grid).q;
  SimConfig sc;
  sc.n_histories = 60;
  sc.horizon = 12;
  sc.seed = seed;
  auto data = simulate(m, q, sc).data;
  auto paths = filter_all(m, data);
  return {m, reward, std::move(data), grid, std::move(paths)};
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("fully observed increments match empirical frequencies") {
  EngineParams p;
  p.z_max = 60;
  SimConfig sc;
  sc.n_histories = 80;
  sc.horizon = 15;
  sc.seed = 8;
  const auto data = simulate(p, 0.9, sc, 11).data;
  std::array<double, 4> counts{};
  double total = 0.0;
  for (const auto& h : data)
    for (std::size_t t = 0; t < h.horizon(); ++t)
      if (h.acts[t] == 0) {
        const int inc = h.obs[t + 1] - h.obs[t];
        REQUIRE(inc >= 0);
        REQUIRE(h.obs[t + 1] < p.z_max - 1);
        counts[inc] += 1.0;
        total += 1.0;
      }
  auto cfg = fast_config();
  cfg.stage1_tol = 1e-10;
  const auto fit = stage1_fit_theta2(data, MileageDynamics(p.z_max), [&] {
    auto c = cfg;
    c.x0_override = std::vector<double>{1.0};
    return c;
  }());
  REQUIRE(fit.natural.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(fit.natural[k] == doctest::Approx(counts[k] / total).epsilon(1e-4));
}

TEST_CASE("single action stops at the starting point") {
  auto s = small_setup(0.9, 1, 3);
  const ChoiceData choices(s.data, s.paths, *s.grid);
  auto cfg = fast_config();
  cfg.theta1_init = {0.3, -0.2};
  const auto r = stage2_policy_gradient(s.model, s.reward, choices, cfg);
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.theta1 == cfg.theta1_init);
  CHECK(r.value == 0.0);
}

TEST_CASE("myopic logit matches a grid search") {
  auto s = small_setup(0.0, 2, 5);
  const ChoiceData choices(s.data, s.paths, *s.grid);
  auto cfg = fast_config();
  cfg.discount = 0.0;
  cfg.grad_eps = 1e-8;
  const auto r = stage2_policy_gradient(s.model, s.reward, choices, cfg);
  REQUIRE(r.converged);

  auto value_at = [&](double a, double b) {
    const auto m = s.model.with_reward(s.reward.reward(std::vector<double>{a, b}));
    QTable q(s.grid, 3, 2);
    q.values() = node_rewards(m, *s.grid);
    return pseudo_log_likelihood(q, choices);
  };
  double best = -INFINITY, ba = 0.0, bb = 0.0;
  double step = 0.5, ca = 0.0, cb = 0.0;
  for (int level = 0; level < 6; ++level) {
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        const double v = value_at(ca + i * step, cb + j * step);
        if (v > best) best = v, ba = ca + i * step, bb = cb + j * step;
      }
    ca = ba, cb = bb;
    step /= 5.0;
  }
  CHECK(r.value >= best - 1e-8);
  CHECK(r.theta1[0] == doctest::Approx(ba).epsilon(1e-3));
  CHECK(r.theta1[1] == doctest::Approx(bb).epsilon(1e-3));
}

TEST_CASE("backtracking ascent increases the objective") {
  auto s = small_setup(0.9, 2, 6);
  const ChoiceData choices(s.data, s.paths, *s.grid);
  const auto r = stage2_policy_gradient(s.model, s.reward, choices, fast_config());
  CHECK(r.converged);
  REQUIRE(r.trace.size() == std::size_t(r.iterations) + 1);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] > r.trace[k - 1]);
}

TEST_CASE("fixed step ascent within the smoothness bound") {
  auto s = small_setup(0.9, 2, 7);
  const ChoiceData choices(s.data, s.paths, *s.grid);
  auto cfg = fast_config();
  cfg.step_rule = StepRule::Fixed;
  cfg.max_outer = 200;
  const auto r = stage2_policy_gradient(s.model, s.reward, choices, cfg);
  CHECK(r.step_below_limit);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] >= r.trace[k - 1] - 1e-6);
  CHECK(r.theorem4_holds);
  MESSAGE("min |grad|^2 " << r.theorem4_lhs << " bound " << r.theorem4_rhs);
}

TEST_CASE("estimates are deterministic") {
  EngineParams p = testing::small_engine(30);
  SimConfig sc;
  sc.n_histories = 30;
  sc.horizon = 10;
  sc.seed = 2;
  const auto data = simulate(p, 0.9, sc, 11).data;
  auto cfg = fast_config();
  cfg.stage1_starts = 2;
  const auto a = estimate_engine(data, p.z_max, cfg);
  const auto b = estimate_engine(data, p.z_max, cfg);
  CHECK(a.stage1.raw == b.stage1.raw);
  CHECK(a.stage2.theta1 == b.stage2.theta1);
  CHECK(a.likelihood.total() == b.likelihood.total());
  cfg.exec = Exec::Serial;
  const auto c = estimate_engine(data, p.z_max, cfg);
  CHECK(a.stage2.theta1 == c.stage2.theta1);
}

TEST_CASE("reported likelihood matches a fresh evaluation") {
  EngineParams p = testing::small_engine(30);
  SimConfig sc;
  sc.n_histories = 30;
  sc.horizon = 10;
  sc.seed = 12;
  const auto data = simulate(p, 0.9, sc, 11).data;
  const auto cfg = fast_config();
  const auto r = estimate_engine(data, p.z_max, cfg);
  const EngineDynamics family(p.z_max);
  const PomdpModel m(2, p.z_max, 2, cfg.discount, family.kernel(r.stage1.raw),
                     engine_reward(p.z_max).reward(r.stage2.theta1));
  SolveOptions opt;
  opt.tol = 1e-12;
  const auto fresh = log_likelihood(m, cfg.grid_resolution, data, opt);
  CHECK(r.likelihood.obs == doctest::Approx(fresh.obs).epsilon(1e-12));
  CHECK(r.likelihood.choice == doctest::Approx(fresh.choice).epsilon(1e-7));
  CHECK(r.n_decisions == 300);
}

TEST_CASE("hidden-state model reduces to the mileage model on rank-one data") {
  EngineParams p;
  p.z_max = 80;
  p.theta2 = {0.5, 0.5};
  p.theta3[1] = p.theta3[0];
  p.theta1 = {0.6, 0.6};
  REQUIRE(is_rank_one(build_engine_model(p, 0.9)));
  SimConfig sc;
  sc.n_histories = 400;
  sc.horizon = 30;
  sc.seed = 31;
  const auto data = simulate(p, 0.9, sc, 11).data;
  auto cfg = fast_config();
  cfg.grad_eps = 1e-5;
  const auto pomdp = estimate_engine(data, p.z_max, cfg);
  const auto mdp = fit_mdp_baseline(data, p.z_max, cfg);
  const double rel = std::abs(pomdp.likelihood.total() - mdp.likelihood.total()) /
                     std::abs(mdp.likelihood.total());
  MESSAGE("pomdp " << pomdp.likelihood.total() << " mdp " << mdp.likelihood.total());
  CHECK(rel <= 1e-3);
}

TEST_CASE("configuration round-trips through JSON") {
  EstimatorConfig c;
  c.grid_resolution = 31;
  c.step_rule = StepRule::Fixed;
  c.step_size = 0.25;
  c.theta1_init = {1.0, 2.0, 3.0};
  c.x0_override = std::vector<double>{0.25, 0.75};
  c.seed = 99;
  c.burn_in = 3;
  const auto back = config_from_json(config_to_json(c));
  CHECK(back.grid_resolution == 31);
  CHECK(back.step_rule == StepRule::Fixed);
  CHECK(back.step_size == 0.25);
  CHECK(back.theta1_init == c.theta1_init);
  CHECK(back.x0_override == c.x0_override);
  CHECK(back.seed == 99);
  CHECK(back.burn_in == 3);
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK_THROWS_AS(config_from_json(R"({"grid_resolution": 11, "stepsize": 1})"), SchemaError);
  CHECK_THROWS_AS(config_from_json(R"({"step_rule": "newton"})"), SchemaError);
}

TEST_CASE("invalid configurations are rejected") {
  EstimatorConfig c;
  c.grad_eps = 0.0;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  c = {};
  c.discount = 1.0;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
  c = {};
  c.grid_resolution = 1;
  CHECK_THROWS_AS(validate(c), InvalidArgument);
}

}
