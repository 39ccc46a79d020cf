#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <omp.h>

#include "oracles.hpp"
#include "spe/errors.hpp"
#include "spe/replacement.hpp"

using namespace spe;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "spe_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("replacement") {

TEST_CASE("engine kernel") {
  const EngineParams p = testing::small_engine();
  const auto m = build_engine_model(p, 0.9);
  for (int z = 0; z < p.z_max; ++z)
    for (int s = 0; s < 2; ++s) {
      CHECK(m.kernel(1, z, s, 0, 0) == 1.0);
      for (int a = 0; a < 2; ++a) {
        double total = 0.0;
        for (double v : m.kernel_row(a, z, s)) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  // From the good vertex, the mileage increment law is the good-state row.
  for (int inc = 0; inc <= kMaxIncrement; ++inc)
    CHECK(sigma(m, 3 + inc, 3, Belief{1.0, 0.0}, 0) == doctest::Approx(p.theta3[0][inc]).epsilon(1e-14));
  // The top bin absorbs increments past it.
  const int top = p.z_max - 1;
  CHECK(sigma(m, top, top, Belief{0.0, 1.0}, 0) == doctest::Approx(1.0));
  CHECK(m.reward(4, 1, 1) == doctest::Approx(-p.rc));
}

TEST_CASE("higher replacement cost lowers replacement probabilities") {
  EngineParams lo = testing::small_engine(), hi = lo;
  hi.rc = lo.rc + 2.0;
  auto grid = std::make_shared<const BeliefGrid>(2, 11);
  const auto ql = solve(build_engine_model(lo, 0.9), grid).q;
  const auto qh = solve(build_engine_model(hi, 0.9), grid).q;
  for (int z = 0; z < lo.z_max; ++z)
    for (double g : {0.0, 0.3, 1.0}) {
      const Belief x{g, 1.0 - g};
      CHECK(ccp(qh, z, x)[1] < ccp(ql, z, x)[1]);
    }
}

TEST_CASE("dataset files") {
  const auto p = testing::small_engine();
  SimConfig sc;
  sc.n_histories = 7;
  sc.horizon = 9;
  sc.seed = 1;
  const auto data = simulate(p, 0.9, sc, 11).data;
  const auto path = scratch("data.jsonl").string();
  emit_dataset(data, path);
  CHECK(load_dataset(path) == data);
  CHECK(dataset_from_string("") == Dataset{});
  CHECK(dataset_from_string("\n  \n").empty());

  const std::string good = R"({"x0": [0.5, 0.5], "z": [0, 1], "a": [0]})";
  try {
    dataset_from_string(good + "\n" + good + "\n{\"x0\": [1, 0], \"z\": [0,\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(dataset_from_string(R"({"x0": [0.5, 0.5], "z": [0, 1, 2], "a": [0]})"), SchemaError);
  CHECK_THROWS_AS(dataset_from_string(R"({"x0": [0.9, 0.5], "z": [0, 1], "a": [0]})"), SchemaError);
  CHECK_THROWS_AS(load_dataset(scratch("missing.jsonl").string()), IoError);
}

TEST_CASE("engine parameter files") {
  EngineParams p = testing::small_engine();
  p.rc = 7.5;
  p.theta2 = {0.9, 0.8};
  const auto path = scratch("params.json").string();
  save_engine_params(p, path);
  const auto back = load_engine_params(path);
  CHECK(back.rc == 7.5);
  CHECK(back.theta2 == p.theta2);
  CHECK(back.theta3 == p.theta3);
  CHECK(back.theta1 == p.theta1);
  CHECK(back.z_max == p.z_max);
  {
    std::ofstream out(path);
    out << R"({"rc": 3, "discount": 0.9})";
  }
  CHECK_THROWS_AS(load_engine_params(path), SchemaError);
}

TEST_CASE("simulation is reproducible and well formed") {
  const auto p = testing::small_engine(40);
  SimConfig sc;
  sc.n_histories = 25;
  sc.horizon = 30;
  sc.seed = 77;
  const auto a = simulate(p, 0.9, sc, 11);
  const auto b = simulate(p, 0.9, sc, 11);
  CHECK(a.data == b.data);
  sc.seed = 78;
  CHECK_FALSE(simulate(p, 0.9, sc, 11).data == a.data);
  for (const auto& h : a.data) {
    CHECK(h.obs.size() == 31);
    for (std::size_t t = 0; t < h.horizon(); ++t) {
      CHECK(h.obs[t + 1] < p.z_max);
      if (h.acts[t] == 1) {
        CHECK(h.obs[t + 1] == 0);
      } else {
        CHECK(h.obs[t + 1] - h.obs[t] >= 0);
        CHECK(h.obs[t + 1] - h.obs[t] <= kMaxIncrement);
      }
    }
  }
}

TEST_CASE("simulated frequencies match the model") {
  EngineParams p = testing::small_engine(30);
  p.rc = 2.0;
  SimConfig sc;
  sc.n_histories = 400;
  sc.horizon = 40;
  sc.seed = 5;
  sc.keep_latent = true;
  const auto m = build_engine_model(p, 0.9);
  auto grid = std::make_shared<const BeliefGrid>(2, 11);
  const auto q = solve(m, grid).q;
  const auto sim = simulate(m, q, sc);
  REQUIRE(sim.states.size() == sim.data.size());

  // Hidden persistence under maintenance.
  for (int s = 0; s < 2; ++s) {
    double stay = 0.0, n = 0.0;
    for (std::size_t i = 0; i < sim.data.size(); ++i)
      for (std::size_t t = 0; t < sim.data[i].horizon(); ++t)
        if (sim.data[i].acts[t] == 0 && sim.states[i][t] == s) {
          n += 1.0;
          stay += sim.states[i][t + 1] == s;
        }
    REQUIRE(n > 100.0);
    const double prob = p.theta2[s];
    CHECK(std::abs(stay / n - prob) <= 3.0 * std::sqrt(prob * (1 - prob) / n));
  }

  // Replacements against the policy at the recorded beliefs.
  double expected = 0.0, variance = 0.0, observed = 0.0;
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const auto& h = sim.data[i];
    for (std::size_t t = 0; t < h.horizon(); ++t) {
      const double pr = ccp(q, h.obs[t], sim.beliefs[i][t])[1];
      expected += pr;
      variance += pr * (1 - pr);
      observed += h.acts[t];
    }
  }
  CHECK(std::abs(observed - expected) <= 3.0 * std::sqrt(variance));
  MESSAGE("replacements " << observed << " expected " << expected);
}

TEST_CASE("thread count does not change simulated data") {
  const auto p = testing::small_engine(40);
  const auto m = build_engine_model(p, 0.9);
  auto grid = std::make_shared<const BeliefGrid>(2, 11);
  const auto q = solve(m, grid).q;
  SimConfig sc;
  sc.n_histories = 50;
  sc.horizon = 20;
  sc.seed = 3;
  const auto a = simulate(m, q, sc);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(3);
  const auto b = simulate(m, q, sc);
  omp_set_num_threads(saved);
  CHECK(a.data == b.data);
}

}
