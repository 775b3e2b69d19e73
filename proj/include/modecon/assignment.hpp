#pragma once

#include "modecon/network.hpp"

#include <vector>

namespace modecon {

struct Assignment {
  std::vector<int> perm;  // row i is assigned column perm[i]
  double total_cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// potentials). Among optimal matchings the lexicographically smallest `perm` is
/// returned. Throws DimensionError for non-square input and NumericalError for
/// non-finite entries.
Assignment solve_assignment(const Matrix& cost);

/// Permutation maximizing trace(P^T d), i.e. the nearest permutation matrix to d
/// in Frobenius norm.
std::vector<int> nearest_permutation(const Matrix& d);

}  // namespace modecon
