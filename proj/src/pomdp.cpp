#include "spe/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "spe/errors.hpp"

namespace spe {

void validate_belief(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("belief must have at least one state");
  double total = 0.0;
  for (double p : x) {
    if (!(p >= 0.0)) throw InvalidArgument("belief has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance)
    throw InvalidArgument("belief sums to " + std::to_string(total) + ", expected 1");
}

Belief::Belief(std::vector<double> probs) : probs_(std::move(probs)) {
  validate_belief(probs_);
}

Belief Belief::vertex(int n_states, int state) {
  if (state < 0 || state >= n_states) throw InvalidArgument("vertex index out of range");
  std::vector<double> p(n_states, 0.0);
  p[state] = 1.0;
  return Belief(std::move(p));
}

Belief Belief::uniform(int n_states) {
  if (n_states < 1) throw InvalidArgument("uniform belief needs at least one state");
  return Belief(std::vector<double>(n_states, 1.0 / n_states));
}

PomdpModel::PomdpModel(int n_states, int n_obs, int n_actions, double discount,
                       std::vector<double> kernel, std::vector<double> reward)
    : n_states_(n_states),
      n_obs_(n_obs),
      n_actions_(n_actions),
      discount_(discount),
      kernel_(std::move(kernel)),
      reward_(std::move(reward)) {
  if (n_states < 1 || n_obs < 1 || n_actions < 1)
    throw InvalidArgument("model dimensions must be positive");
  if (!(discount >= 0.0 && discount < 1.0))
    throw InvalidArgument("discount must lie in [0, 1)");
  const std::size_t row = std::size_t(n_obs) * n_states;
  const std::size_t rows = std::size_t(n_actions) * n_obs * n_states;
  if (kernel_.size() != rows * row)
    throw InvalidArgument("kernel has " + std::to_string(kernel_.size()) +
                          " entries, expected " + std::to_string(rows * row));
  if (reward_.size() != rows)
    throw InvalidArgument("reward has " + std::to_string(reward_.size()) +
                          " entries, expected " + std::to_string(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < row; ++k) {
      const double p = kernel_[r * row + k];
      if (!(p >= 0.0)) throw InvalidArgument("kernel has a negative or NaN entry");
      total += p;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
      throw InvalidArgument("kernel row " + std::to_string(r) + " sums to " +
                            std::to_string(total));
  }
  for (double r : reward_)
    if (!std::isfinite(r)) throw InvalidArgument("reward has a non-finite entry");
}

PomdpModel PomdpModel::with_reward(std::vector<double> reward) const {
  return PomdpModel(n_states_, n_obs_, n_actions_, discount_, kernel_, std::move(reward));
}

PomdpModel PomdpModel::with_discount(double discount) const {
  return PomdpModel(n_states_, n_obs_, n_actions_, discount, kernel_, reward_);
}

void PomdpModel::check_indices(int z, int a) const {
  if (z < 0 || z >= n_obs_) throw InvalidArgument("observation index out of range");
  if (a < 0 || a >= n_actions_) throw InvalidArgument("action index out of range");
}

void PomdpModel::check_history(const History& h) const {
  if (h.obs.size() != h.acts.size() + 1)
    throw InvalidArgument("history needs exactly one more observation than actions");
  if (h.x0.size() != std::size_t(n_states_))
    throw InvalidArgument("history prior has the wrong number of states");
  for (int z : h.obs)
    if (z < 0 || z >= n_obs_) throw InvalidArgument("history observation out of range");
  for (int a : h.acts)
    if (a < 0 || a >= n_actions_) throw InvalidArgument("history action out of range");
}

double sigma(const PomdpModel& model, int z_next, int z, std::span<const double> x, int a) {
  const int ns = model.n_states();
  double total = 0.0;
  for (int s = 0; s < ns; ++s) {
    if (x[s] == 0.0) continue;
    const auto row = model.kernel_row(a, z, s).subspan(std::size_t(z_next) * ns, ns);
    double mass = 0.0;
    for (double p : row) mass += p;
    total += x[s] * mass;
  }
  return total;
}

double bayes_step(const PomdpModel& model, int z_next, int z, std::span<const double> x,
                  int a, std::span<double> out) {
  const int ns = model.n_states();
  std::fill(out.begin(), out.end(), 0.0);
  for (int s = 0; s < ns; ++s) {
    if (x[s] == 0.0) continue;
    const auto row = model.kernel_row(a, z, s).subspan(std::size_t(z_next) * ns, ns);
    for (int s2 = 0; s2 < ns; ++s2) out[s2] += x[s] * row[s2];
  }
  double total = 0.0;
  for (int s2 = 0; s2 < ns; ++s2) total += out[s2];
  if (total < kZeroProbability) return 0.0;
  // Renormalize with the computed mass so the posterior stays on the simplex.
  for (int s2 = 0; s2 < ns; ++s2) out[s2] /= total;
  return total;
}

Belief lambda_update(const PomdpModel& model, int z_next, int z, const Belief& x, int a) {
  model.check_indices(z, a);
  model.check_indices(z_next, a);
  std::vector<double> out(model.n_states());
  if (bayes_step(model, z_next, z, x.probs(), a, out) == 0.0)
    throw ZeroObservationProbability(0);
  return Belief(std::move(out));
}

double expected_reward(const PomdpModel& model, int z, std::span<const double> x, int a) {
  double r = 0.0;
  for (int s = 0; s < model.n_states(); ++s) r += x[s] * model.reward(z, s, a);
  return r;
}

Belief apply_lambda_m(const PomdpModel& model, std::span<const int> obs,
                      std::span<const int> acts, const Belief& x_start) {
  if (obs.size() != acts.size() + 1)
    throw InvalidArgument("window needs exactly one more observation than actions");
  std::vector<double> x(x_start.probs().begin(), x_start.probs().end());
  std::vector<double> next(x.size());
  for (std::size_t t = 0; t < acts.size(); ++t) {
    model.check_indices(obs[t], acts[t]);
    model.check_indices(obs[t + 1], acts[t]);
    if (bayes_step(model, obs[t + 1], obs[t], x, acts[t], next) == 0.0)
      throw ZeroObservationProbability(t);
    x.swap(next);
  }
  return Belief(std::move(x));
}

}  // namespace spe
