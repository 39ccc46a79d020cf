#pragma once

#include <span>
#include <string>
#include <vector>

namespace spe {

// Maps an unconstrained parameter vector onto a transition kernel
// [a][z][s][z'][s']. Probability rows are reparameterized through softmax
// or logistic links so every parameter vector gives a valid kernel.
class DynamicsFamily {
 public:
  virtual ~DynamicsFamily() = default;

  virtual int n_states() const = 0;
  virtual int n_obs() const = 0;
  virtual int n_actions() const = 0;
  virtual int n_params() const = 0;

  virtual std::vector<double> kernel(std::span<const double> raw) const = 0;

  // Interpretable dynamics parameters (probabilities) and their names.
  virtual std::vector<double> natural(std::span<const double> raw) const = 0;
  virtual std::vector<std::string> natural_names() const = 0;

  // Starting point with uniform probability rows.
  virtual std::vector<double> default_raw() const {
    return std::vector<double>(n_params(), 0.0);
  }
};

// Every (a, z, s) row is a free distribution over (z', s'), softmax with the
// last cell as reference. Natural parameters are the kernel entries.
class TabularDynamics : public DynamicsFamily {
 public:
  TabularDynamics(int n_states, int n_obs, int n_actions);

  int n_states() const override { return n_states_; }
  int n_obs() const override { return n_obs_; }
  int n_actions() const override { return n_actions_; }
  int n_params() const override;

  std::vector<double> kernel(std::span<const double> raw) const override;
  std::vector<double> natural(std::span<const double> raw) const override { return kernel(raw); }
  std::vector<std::string> natural_names() const override;

  // Raw parameters reproducing a strictly positive kernel.
  std::vector<double> raw_from_kernel(std::span<const double> kernel) const;

 private:
  int n_states_;
  int n_obs_;
  int n_actions_;
};

double logistic(double v);
double logit(double p);

// Softmax over `logits` extended with a trailing reference logit of zero.
void softmax_with_reference(std::span<const double> logits, std::span<double> out);

}  // namespace spe
