#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace spe {

inline constexpr double kEulerGamma = 0.5772156649015329;

// Observation probabilities below this are treated as exact zeros.
inline constexpr double kZeroProbability = 1e-300;

inline constexpr double kSimplexTolerance = 1e-12;

// A point on the probability simplex over hidden states.
class Belief {
 public:
  Belief() = default;
  explicit Belief(std::vector<double> probs);
  Belief(std::initializer_list<double> probs) : Belief(std::vector<double>(probs)) {}

  static Belief vertex(int n_states, int state);
  static Belief uniform(int n_states);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t s) const { return probs_[s]; }
  std::span<const double> probs() const { return probs_; }

  friend bool operator==(const Belief&, const Belief&) = default;

 private:
  std::vector<double> probs_;
};

// Throws InvalidArgument unless `x` is nonnegative and sums to one.
void validate_belief(std::span<const double> x);

// One observed trajectory: prior x0, observations z_0..z_T, actions a_0..a_{T-1}.
struct History {
  Belief x0;
  std::vector<int> obs;
  std::vector<int> acts;

  std::size_t horizon() const { return acts.size(); }
  friend bool operator==(const History&, const History&) = default;
};

using Dataset = std::vector<History>;

// Finite POMDP with Gumbel choice shocks. The kernel is dense and indexed
// [a][z][s][z'][s']; rewards are indexed [a][z][s]. Immutable once built.
class PomdpModel {
 public:
  PomdpModel(int n_states, int n_obs, int n_actions, double discount,
             std::vector<double> kernel, std::vector<double> reward);

  int n_states() const { return n_states_; }
  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }

  double kernel(int a, int z, int s, int z_next, int s_next) const {
    return kernel_[block_offset(a, z, s) + std::size_t(z_next) * n_states_ + s_next];
  }
  // Row P(., . | z, s, a) laid out [z'][s'].
  std::span<const double> kernel_row(int a, int z, int s) const {
    return {kernel_.data() + block_offset(a, z, s), std::size_t(n_obs_) * n_states_};
  }
  double reward(int z, int s, int a) const {
    return reward_[(std::size_t(a) * n_obs_ + z) * n_states_ + s];
  }

  const std::vector<double>& kernel_data() const { return kernel_; }
  const std::vector<double>& reward_data() const { return reward_; }

  PomdpModel with_reward(std::vector<double> reward) const;
  PomdpModel with_discount(double discount) const;

  void check_indices(int z, int a) const;
  void check_history(const History& h) const;

 private:
  std::size_t block_offset(int a, int z, int s) const {
    return ((std::size_t(a) * n_obs_ + z) * n_states_ + s) * std::size_t(n_obs_) *
           n_states_;
  }

  int n_states_;
  int n_obs_;
  int n_actions_;
  double discount_;
  std::vector<double> kernel_;
  std::vector<double> reward_;
};

// sigma(z' | z, x, a) = sum_{s,s'} x(s) P(z', s' | z, s, a).
double sigma(const PomdpModel& model, int z_next, int z, std::span<const double> x, int a);
inline double sigma(const PomdpModel& model, int z_next, int z, const Belief& x, int a) {
  return sigma(model, z_next, z, x.probs(), a);
}

// Bayes update of the belief after observing z'. Writes the posterior into `out`
// (size n_states, must not alias x) and returns sigma. When sigma is
// numerically zero, 0 is returned and `out` holds no meaningful belief.
double bayes_step(const PomdpModel& model, int z_next, int z, std::span<const double> x,
                  int a, std::span<double> out);

// Throws ZeroObservationProbability(0) when sigma vanishes.
Belief lambda_update(const PomdpModel& model, int z_next, int z, const Belief& x, int a);

double expected_reward(const PomdpModel& model, int z, std::span<const double> x, int a);
inline double expected_reward(const PomdpModel& model, int z, const Belief& x, int a) {
  return expected_reward(model, z, x.probs(), a);
}

// Folds lambda_update over a window: obs holds z_start..z_end (M+1 entries),
// acts the M actions in between.
Belief apply_lambda_m(const PomdpModel& model, std::span<const int> obs,
                      std::span<const int> acts, const Belief& x_start);

}  // namespace spe
