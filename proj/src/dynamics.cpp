#include "spe/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "spe/errors.hpp"

namespace spe {

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("logit needs a probability in (0, 1)");
  return std::log(p / (1.0 - p));
}

void softmax_with_reference(std::span<const double> logits, std::span<double> out) {
  double m = 0.0;
  for (double v : logits) m = std::max(m, v);
  double total = std::exp(-m);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - m);
    total += out[k];
  }
  out[logits.size()] = std::exp(-m);
  for (std::size_t k = 0; k <= logits.size(); ++k) out[k] /= total;
}

TabularDynamics::TabularDynamics(int n_states, int n_obs, int n_actions)
    : n_states_(n_states), n_obs_(n_obs), n_actions_(n_actions) {
  if (n_states < 1 || n_obs < 1 || n_actions < 1)
    throw InvalidArgument("tabular dynamics dimensions must be positive");
}

int TabularDynamics::n_params() const {
  return n_actions_ * n_obs_ * n_states_ * (n_obs_ * n_states_ - 1);
}

std::vector<double> TabularDynamics::kernel(std::span<const double> raw) const {
  if (raw.size() != std::size_t(n_params())) throw InvalidArgument("raw dynamics size mismatch");
  const std::size_t row = std::size_t(n_obs_) * n_states_;
  const std::size_t rows = std::size_t(n_actions_) * n_obs_ * n_states_;
  std::vector<double> k(rows * row);
  for (std::size_t r = 0; r < rows; ++r)
    softmax_with_reference(raw.subspan(r * (row - 1), row - 1),
                           std::span<double>(k.data() + r * row, row));
  return k;
}

std::vector<std::string> TabularDynamics::natural_names() const {
  std::vector<std::string> names;
  for (int a = 0; a < n_actions_; ++a)
    for (int z = 0; z < n_obs_; ++z)
      for (int s = 0; s < n_states_; ++s)
        for (int z2 = 0; z2 < n_obs_; ++z2)
          for (int s2 = 0; s2 < n_states_; ++s2)
            names.push_back("P[" + std::to_string(a) + "][" + std::to_string(z) + "][" +
                            std::to_string(s) + "][" + std::to_string(z2) + "][" +
                            std::to_string(s2) + "]");
  return names;
}

std::vector<double> TabularDynamics::raw_from_kernel(std::span<const double> kernel) const {
  const std::size_t row = std::size_t(n_obs_) * n_states_;
  const std::size_t rows = std::size_t(n_actions_) * n_obs_ * n_states_;
  if (kernel.size() != rows * row) throw InvalidArgument("kernel size mismatch");
  std::vector<double> raw(n_params());
  for (std::size_t r = 0; r < rows; ++r) {
    const double ref = kernel[r * row + row - 1];
    for (std::size_t k = 0; k + 1 < row; ++k) {
      const double p = kernel[r * row + k];
      if (!(p > 0.0 && ref > 0.0))
        throw InvalidArgument("tabular parameterization needs a strictly positive kernel");
      raw[r * (row - 1) + k] = std::log(p / ref);
    }
  }
  return raw;
}

}  // namespace spe
