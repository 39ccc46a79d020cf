#pragma once

#include <span>
#include <vector>

#include "spe/belief_grid.hpp"

namespace spe {

// Rewards linear in the parameter vector theta1:
// r(z, s, a) = sum_k theta1[k] * phi_k(z, s, a), features stored [a][z][s][k].
class LinearReward {
 public:
  LinearReward(int n_states, int n_obs, int n_actions, int n_params,
               std::vector<double> features);

  int n_states() const { return n_states_; }
  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  int n_params() const { return n_params_; }

  std::span<const double> features(int z, int s, int a) const {
    return {features_.data() + offset(z, s, a), std::size_t(n_params_)};
  }

  // Reward table [a][z][s] for PomdpModel.
  std::vector<double> reward(std::span<const double> theta1) const;

  // Belief-averaged features at every grid node, laid out [z][node][a][k].
  std::vector<double> node_features(const BeliefGrid& grid) const;

  // sup over (z, x, a) of |grad_theta1 r(z, x, a)|_2; attained at a vertex.
  double gradient_bound() const;

 private:
  std::size_t offset(int z, int s, int a) const {
    return ((std::size_t(a) * n_obs_ + z) * n_states_ + s) * n_params_;
  }

  int n_states_;
  int n_obs_;
  int n_actions_;
  int n_params_;
  std::vector<double> features_;
};

}  // namespace spe
