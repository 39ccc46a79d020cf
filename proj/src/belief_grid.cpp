#include "spe/belief_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spe/errors.hpp"

namespace spe {

namespace {

// Lattice coordinates are the tail sums c_k = R * sum_{j >= k} x_j for
// k = 1..S-1, which are nonincreasing integers in [0, R] at the nodes.
void enumerate(int depth, int upper, std::vector<int>& c, std::vector<std::vector<int>>& out) {
  if (depth == static_cast<int>(c.size())) {
    out.push_back(c);
    return;
  }
  for (int v = 0; v <= upper; ++v) {
    c[depth] = v;
    enumerate(depth + 1, v, c, out);
  }
}

}  // namespace

std::vector<double> clamp_to_simplex(std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  double total = 0.0;
  for (double& p : y) {
    if (!(p >= -kSimplexTolerance)) throw InvalidArgument("belief entry is negative");
    p = std::max(p, 0.0);
    total += p;
  }
  if (!(total > 0.0)) throw InvalidArgument("belief has no mass");
  for (double& p : y) p /= total;
  return y;
}

BeliefGrid::BeliefGrid(int n_states, int resolution)
    : n_states_(n_states), resolution_(resolution) {
  if (n_states < 1 || n_states > kMaxGridStates)
    throw InvalidArgument("belief grid supports 1.." + std::to_string(kMaxGridStates) +
                          " states");
  if (n_states > 1 && resolution < 2)
    throw InvalidArgument("belief grid resolution must be at least 2");
  if (n_states == 1) resolution_ = 1;
  const int R = resolution_ - 1;

  std::vector<std::vector<int>> coords;
  std::vector<int> c(n_states - 1);
  enumerate(0, R, c, coords);
  // For two states this orders nodes by x(1), so node 0 is e_0.
  nodes_.reserve(coords.size() * n_states);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& cc = coords[i];
    for (int s = 0; s < n_states; ++s) {
      const int hi = s == 0 ? R : cc[s - 1];
      const int lo = s == n_states - 1 ? 0 : cc[s];
      nodes_.push_back(R == 0 ? 1.0 : double(hi - lo) / R);
    }
    long long key = 0;
    for (int k = n_states - 2; k >= 0; --k) key = key * (R + 1) + cc[k];
    index_.emplace(key, static_cast<int>(i));
  }
}

int BeliefGrid::rank(std::span<const int> c) const {
  long long key = 0;
  for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) key = key * resolution_ + c[k];
  return index_.at(key);
}

int BeliefGrid::vertex_node(int s) const {
  if (s < 0 || s >= n_states_) throw InvalidArgument("vertex index out of range");
  const int R = resolution_ - 1;
  std::vector<int> c(n_states_ - 1);
  for (int k = 1; k < n_states_; ++k) c[k - 1] = k <= s ? R : 0;
  return rank(c);
}

InterpWeights BeliefGrid::interpolate(std::span<const double> x) const {
  if (x.size() != std::size_t(n_states_)) throw InvalidArgument("belief size mismatch");
  InterpWeights w;
  if (n_states_ == 1) {
    w.count = 1;
    w.node[0] = 0;
    w.weight[0] = 1.0;
    return w;
  }
  const auto y = clamp_to_simplex(x);
  const int R = resolution_ - 1;
  const int m = n_states_ - 1;

  std::array<int, kMaxGridStates> base{};
  std::array<double, kMaxGridStates> frac{};
  double tail = 0.0;
  for (int k = m; k >= 1; --k) {
    tail += y[k];
    double c = std::clamp(tail * R, 0.0, double(R));
    const double nearest = std::round(c);
    if (std::abs(c - nearest) < 1e-9) c = nearest;
    const double fl = std::floor(c);
    base[k - 1] = static_cast<int>(fl);
    frac[k - 1] = c - fl;
  }
  // Rounding can break the ordering c_1 >= c_2 >= ...; restore it.
  for (int k = 1; k < m; ++k) {
    const double prev = base[k - 1] + frac[k - 1];
    const double cur = base[k] + frac[k];
    if (cur > prev) {
      base[k] = base[k - 1];
      frac[k] = frac[k - 1];
    }
  }

  std::array<int, kMaxGridStates> order{};
  std::iota(order.begin(), order.begin() + m, 0);
  std::stable_sort(order.begin(), order.begin() + m,
                   [&](int i, int j) { return frac[i] > frac[j]; });

  std::array<int, kMaxGridStates> vert = base;
  auto push = [&](double weight) {
    if (weight <= 0.0) return;
    w.node[w.count] = rank(std::span<const int>(vert.data(), m));
    w.weight[w.count] = weight;
    ++w.count;
  };
  push(1.0 - frac[order[0]]);
  for (int k = 0; k < m; ++k) {
    vert[order[k]] += 1;
    const double next = k + 1 < m ? frac[order[k + 1]] : 0.0;
    push(frac[order[k]] - next);
  }
  return w;
}

}  // namespace spe
