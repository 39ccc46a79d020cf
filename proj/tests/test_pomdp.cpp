#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "spe/errors.hpp"
#include "spe/pomdp.hpp"
#include "spe/replacement.hpp"

using namespace spe;
using spe::testing::random_model;
using spe::testing::random_simplex;

namespace {

// |S| = 2, |Z| = 2, |A| = 1 with the four (z'=0, s') and (z'=1, s') masses
// out of (z=0, s) chosen by hand.
PomdpModel hand_model() {
  // [a][z][s][z'][s']
  std::vector<double> k = {
      // z = 0, s = 0: z'=0 -> (0.6, 0.1); z'=1 -> (0.2, 0.1)
      0.6, 0.1, 0.2, 0.1,
      // z = 0, s = 1
      0.2, 0.2, 0.3, 0.3,
      // z = 1 rows are arbitrary
      0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25};
  return PomdpModel(2, 2, 1, 0.9, k, std::vector<double>(4, 0.0));
}

}  // namespace

TEST_SUITE("pomdp") {

TEST_CASE("observation probability of a two-state example") {
  // P(z'=1 | z=0, s, a=0) = 0.7 for s = 0 and 0.4 for s = 1.
  std::vector<double> k = {0.1, 0.2, 0.3, 0.4,  0.3, 0.3, 0.2, 0.2,
                           0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25};
  const PomdpModel m(2, 2, 1, 0.9, k, std::vector<double>(4, 0.0));
  CHECK(sigma(m, 1, 0, Belief{0.5, 0.5}, 0) == doctest::Approx(0.55).epsilon(1e-14));
  CHECK(sigma(m, 1, 0, Belief::vertex(2, 0), 0) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(sigma(m, 1, 0, Belief::vertex(2, 1), 0) == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("belief update of the hand example") {
  const auto m = hand_model();
  const Belief x{0.5, 0.5};
  CHECK(sigma(m, 0, 0, x, 0) == doctest::Approx(0.55).epsilon(1e-14));
  const auto post = lambda_update(m, 0, 0, x, 0);
  CHECK(post[0] == doctest::Approx(0.4 / 0.55).epsilon(1e-14));
  CHECK(post[1] == doctest::Approx(0.15 / 0.55).epsilon(1e-14));
  CHECK(post[0] == doctest::Approx(0.7272727272727273));
}

TEST_CASE("degenerate belief picks one kernel row") {
  const auto m = random_model(3, 4, 2, 0.9, 11);
  for (int s = 0; s < 3; ++s)
    for (int zn = 0; zn < 4; ++zn) {
      double direct = 0.0;
      for (int s2 = 0; s2 < 3; ++s2) direct += m.kernel(1, 2, s, zn, s2);
      CHECK(sigma(m, zn, 2, Belief::vertex(3, s), 1) == doctest::Approx(direct).epsilon(1e-14));
    }
}

TEST_CASE("zero observation probability is an error") {
  std::vector<double> k(2 * 2 * 2 * 2, 0.0);
  // Every row moves to z' = 0.
  for (int r = 0; r < 4; ++r) k[r * 4 + 0] = 1.0;
  const PomdpModel m(2, 2, 1, 0.5, k, std::vector<double>(4, 0.0));
  CHECK(sigma(m, 1, 0, Belief{0.3, 0.7}, 0) == 0.0);
  CHECK_THROWS_AS(lambda_update(m, 1, 0, Belief{0.3, 0.7}, 0), ZeroObservationProbability);
}

TEST_CASE("engine replacement resets mileage and hidden state") {
  const auto m = build_engine_model(EngineParams{}, 0.95);
  std::mt19937_64 rng(3);
  for (int z : {0, 17, 150, 199}) {
    const Belief x(random_simplex(rng, 2));
    CHECK(sigma(m, 0, z, x, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lambda_update(m, 0, z, x, 1) == Belief::vertex(2, 0));
  }
}

TEST_CASE("rank-one kernel forgets the prior") {
  std::mt19937_64 rng(5);
  const auto row = random_simplex(rng, 6);
  std::vector<double> k;
  for (int r = 0; r < 2 * 3 * 2; ++r) k.insert(k.end(), row.begin(), row.end());
  const PomdpModel m(2, 3, 2, 0.9, k, std::vector<double>(12, 0.0));
  const auto a = lambda_update(m, 1, 2, Belief{0.9, 0.1}, 1);
  const auto b = lambda_update(m, 1, 2, Belief{0.2, 0.8}, 1);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
}

TEST_CASE("expected reward") {
  EngineParams p;
  const auto m = build_engine_model(p, 0.95);
  CHECK(expected_reward(m, 10, Belief{0.5, 0.5}, 0) == doctest::Approx(-0.007).epsilon(1e-13));
  CHECK(expected_reward(m, 10, Belief::vertex(2, 0), 0) == doctest::Approx(m.reward(10, 0, 0)));
  for (int z : {0, 10, 99})
    CHECK(expected_reward(m, z, Belief{0.3, 0.7}, 1) == doctest::Approx(-p.rc).epsilon(1e-15));
}

TEST_CASE("window of belief updates") {
  const auto m = random_model(3, 4, 2, 0.9, 21);
  std::mt19937_64 rng(8);
  const Belief x(random_simplex(rng, 3));
  const std::vector<int> obs{1, 3, 0, 2, 2, 1};
  const std::vector<int> acts{0, 1, 1, 0, 1};
  CHECK(apply_lambda_m(m, std::span(obs).first(1), {}, x) == x);
  const auto one = apply_lambda_m(m, std::span(obs).first(2), std::span(acts).first(1), x);
  const auto direct = lambda_update(m, obs[1], obs[0], x, acts[0]);
  for (int s = 0; s < 3; ++s) CHECK(one[s] == doctest::Approx(direct[s]).epsilon(1e-15));

  SUBCASE("prefix then suffix equals the whole window") {
    for (std::size_t cut = 0; cut <= acts.size(); ++cut) {
      const auto mid = apply_lambda_m(m, std::span(obs).first(cut + 1), std::span(acts).first(cut), x);
      const auto two = apply_lambda_m(m, std::span(obs).subspan(cut), std::span(acts).subspan(cut), mid);
      const auto all = apply_lambda_m(m, obs, acts, x);
      for (int s = 0; s < 3; ++s) CHECK(two[s] == doctest::Approx(all[s]).epsilon(1e-13));
    }
  }
}

TEST_CASE("window ending in a replacement") {
  const auto m = build_engine_model(EngineParams{}, 0.95);
  const std::vector<int> obs{0, 2, 4, 5, 0};
  const std::vector<int> acts{0, 0, 0, 1};
  for (double g : {0.0, 0.4, 1.0})
    CHECK(apply_lambda_m(m, obs, acts, Belief{g, 1.0 - g}) == Belief::vertex(2, 0));
}

TEST_CASE("window failure names the step") {
  std::vector<double> k(2 * 2 * 2 * 2, 0.0);
  for (int r = 0; r < 4; ++r) k[r * 4 + 0] = 1.0;
  const PomdpModel m(2, 2, 1, 0.5, k, std::vector<double>(4, 0.0));
  const std::vector<int> obs{0, 0, 0, 1};
  const std::vector<int> acts{0, 0, 0};
  try {
    apply_lambda_m(m, obs, acts, Belief{0.5, 0.5});
    FAIL("expected an exception");
  } catch (const ZeroObservationProbability& e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("properties on random models") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int S = 1 + int(rng() % 4), Z = 1 + int(rng() % 5), A = 1 + int(rng() % 3);
    const auto m = random_model(S, Z, A, 0.9, rng());
    const int z = int(rng() % Z), a = int(rng() % A);
    const Belief x(random_simplex(rng, S)), y(random_simplex(rng, S));
    double total = 0.0;
    for (int zn = 0; zn < Z; ++zn) {
      total += sigma(m, zn, z, x, a);
      const auto post = lambda_update(m, zn, z, x, a);
      double sum = 0.0;
      for (std::size_t s = 0; s < post.size(); ++s) {
        CHECK(post[s] >= 0.0);
        sum += post[s];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));

    const double alpha = testing::uniform01(rng);
    std::vector<double> mix(S);
    for (int s = 0; s < S; ++s) mix[s] = alpha * x[s] + (1.0 - alpha) * y[s];
    CHECK(expected_reward(m, z, mix, a) ==
          doctest::Approx(alpha * expected_reward(m, z, x, a) +
                          (1.0 - alpha) * expected_reward(m, z, y, a))
              .epsilon(1e-12));
  }
}

TEST_CASE("model validation") {
  std::vector<double> k(8, 0.25);
  CHECK_NOTHROW(PomdpModel(2, 2, 1, 0.5, std::vector<double>(16, 0.25), std::vector<double>(4)));
  CHECK_THROWS_AS(PomdpModel(2, 2, 1, 1.0, std::vector<double>(16, 0.25), std::vector<double>(4)),
                  InvalidArgument);
  auto bad = std::vector<double>(16, 0.25);
  bad[0] = 0.3;
  CHECK_THROWS_AS(PomdpModel(2, 2, 1, 0.5, bad, std::vector<double>(4)), InvalidArgument);
  CHECK_THROWS_AS(Belief({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(Belief({1.1, -0.1}), InvalidArgument);
}

}
