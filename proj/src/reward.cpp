#include "spe/reward.hpp"

#include <algorithm>
#include <cmath>

#include "spe/errors.hpp"

namespace spe {

LinearReward::LinearReward(int n_states, int n_obs, int n_actions, int n_params,
                           std::vector<double> features)
    : n_states_(n_states),
      n_obs_(n_obs),
      n_actions_(n_actions),
      n_params_(n_params),
      features_(std::move(features)) {
  if (n_states < 1 || n_obs < 1 || n_actions < 1 || n_params < 0)
    throw InvalidArgument("reward dimensions must be positive");
  if (features_.size() != std::size_t(n_actions) * n_obs * n_states * n_params)
    throw InvalidArgument("reward feature tensor has the wrong size");
}

std::vector<double> LinearReward::reward(std::span<const double> theta1) const {
  if (theta1.size() != std::size_t(n_params_))
    throw InvalidArgument("theta1 has the wrong dimension");
  std::vector<double> r(std::size_t(n_actions_) * n_obs_ * n_states_, 0.0);
  for (int a = 0; a < n_actions_; ++a)
    for (int z = 0; z < n_obs_; ++z)
      for (int s = 0; s < n_states_; ++s) {
        const auto phi = features(z, s, a);
        double v = 0.0;
        for (int k = 0; k < n_params_; ++k) v += theta1[k] * phi[k];
        r[(std::size_t(a) * n_obs_ + z) * n_states_ + s] = v;
      }
  return r;
}

std::vector<double> LinearReward::node_features(const BeliefGrid& grid) const {
  if (grid.n_states() != n_states_) throw InvalidArgument("grid does not match reward states");
  const int nodes = grid.size();
  std::vector<double> out(std::size_t(n_obs_) * nodes * n_actions_ * n_params_, 0.0);
  for (int z = 0; z < n_obs_; ++z)
    for (int n = 0; n < nodes; ++n) {
      const auto x = grid.node(n);
      for (int a = 0; a < n_actions_; ++a) {
        double* dst = out.data() + ((std::size_t(z) * nodes + n) * n_actions_ + a) * n_params_;
        for (int s = 0; s < n_states_; ++s) {
          if (x[s] == 0.0) continue;
          const auto phi = features(z, s, a);
          for (int k = 0; k < n_params_; ++k) dst[k] += x[s] * phi[k];
        }
      }
    }
  return out;
}

double LinearReward::gradient_bound() const {
  double best = 0.0;
  for (int a = 0; a < n_actions_; ++a)
    for (int z = 0; z < n_obs_; ++z)
      for (int s = 0; s < n_states_; ++s) {
        double sq = 0.0;
        for (double f : features(z, s, a)) sq += f * f;
        best = std::max(best, std::sqrt(sq));
      }
  return best;
}

}  // namespace spe
