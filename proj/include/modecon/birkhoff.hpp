#pragma once

#include "modecon/network.hpp"
#include "modecon/permutation.hpp"
#include "modecon/rng.hpp"

#include <vector>

namespace modecon {

/// Alternates a clamp onto the nonnegative orthant with the affine projection
/// onto {X : X1 = 1, X^T 1 = 1}, `iters` times, and returns the last iterate.
/// Row and column sums of the result are exact; entries may dip slightly below
/// zero when the alternation has not converged.
Matrix project_birkhoff(const Matrix& x, int iters = 20);
std::vector<Matrix> project_birkhoff(const std::vector<Matrix>& mats, int iters = 20);

/// Largest |row sum - 1| or |column sum - 1|.
double stochasticity_residual(const Matrix& x);

struct BvnTerm {
  double alpha = 0.0;
  std::vector<int> perm;  // row i -> column perm[i]
};

struct BvnDecomposition {
  std::vector<BvnTerm> terms;  // kept terms
  int truncated_at = 0;        // number of kept terms
  double kept_mass = 0.0;      // sum of kept alphas before renormalization

  /// Sampling probabilities: kept alphas renormalized to sum to 1.
  std::vector<double> probabilities() const;
  /// Sum of alpha_i P_i over the kept terms (no renormalization).
  Matrix reconstruct(int n) const;
};

enum class BvnRule {
  max_trace,      // P = argmax trace(P^T D) over the support
  max_min_entry,  // classical: P maximizes its smallest matched entry
};

/// Greedy decomposition D = sum alpha_i P_i. Each step picks P by `rule` among
/// permutations supported on the positive entries of the residual, takes alpha
/// as the smallest matched entry (capped so the alphas sum to at most 1) and
/// subtracts alpha P. Stops when the residual vanishes, the mass reaches 1, or no
/// supported permutation is left; then keeps the first `truncate` terms
/// (truncate <= 0 keeps all). Throws NumericalError if a residual entry drops
/// below -1e-8.
BvnDecomposition bvn_decompose(const Matrix& d, int truncate = 10, BvnRule rule = BvnRule::max_trace);

/// M block permutations, each layer drawn independently from its decomposition.
std::vector<BlockPermutation> sample_permutations(const std::vector<BvnDecomposition>& layers, int m,
                                                  std::uint64_t seed);

}  // namespace modecon
