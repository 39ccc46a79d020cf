#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "spe/pomdp.hpp"

namespace spe {

inline constexpr int kMaxGridStates = 8;

// Convex combination of at most n_states grid nodes.
struct InterpWeights {
  int count = 0;
  std::array<int, kMaxGridStates> node{};
  std::array<double, kMaxGridStates> weight{};
};

// Regular lattice on the belief simplex with `resolution` points per edge
// (resolution - 1 subdivisions). For two states this is the uniform grid
// x(1) = i / (resolution - 1). Interpolation uses the Freudenthal (Kuhn)
// triangulation of the lattice, which is linear interpolation when |S| = 2
// and is exact at every node.
class BeliefGrid {
 public:
  BeliefGrid(int n_states, int resolution);

  int n_states() const { return n_states_; }
  int resolution() const { return resolution_; }
  int size() const { return static_cast<int>(nodes_.size() / n_states_); }

  std::span<const double> node(int i) const {
    return {nodes_.data() + std::size_t(i) * n_states_, std::size_t(n_states_)};
  }
  // Index of the node sitting on the simplex vertex e_s.
  int vertex_node(int s) const;

  // Barycentric weights of `x` (clamped onto the simplex first). Zero-weight
  // vertices are dropped.
  InterpWeights interpolate(std::span<const double> x) const;

 private:
  int rank(std::span<const int> c) const;

  int n_states_;
  int resolution_;
  std::vector<double> nodes_;
  std::unordered_map<long long, int> index_;
};

// Clamps tiny negative entries to zero and renormalizes. Entries below
// -kSimplexTolerance or a non-positive total raise InvalidArgument.
std::vector<double> clamp_to_simplex(std::span<const double> x);

}  // namespace spe
