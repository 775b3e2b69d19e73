#pragma once

#include "modecon/network.hpp"
#include "modecon/rng.hpp"

#include <vector>

namespace modecon {

/// One permutation per hidden layer. `perms[h][i]` is the index of the neuron in
/// the permuted network that becomes neuron i: applying the permutation gives
/// W'_k[i, j] = W_k[p_k[i], p_{k-1}[j]] and b'_k[i] = b_k[p_k[i]], where the input
/// and output layers keep their order.
struct BlockPermutation {
  std::vector<std::vector<int>> perms;

  static BlockPermutation identity(const NetworkSpec& spec);
  /// Uniform per tied group of layers, so applying it preserves the function of residual nets.
  static BlockPermutation random(const NetworkSpec& spec, Rng& rng);

  /// Throws DimensionError unless every layer holds a bijection of the right size.
  void validate(const NetworkSpec& spec) const;
  bool is_identity() const;
  /// Permutation matrix of hidden layer h with P[i, perms[h][i]] = 1.
  Matrix matrix(int h) const;

  friend bool operator==(const BlockPermutation&, const BlockPermutation&) = default;
};

/// apply(apply(net, a), b) == apply(net, compose(a, b)).
BlockPermutation compose(const BlockPermutation& a, const BlockPermutation& b);
BlockPermutation inverse(const BlockPermutation& p);

bool is_permutation(const std::vector<int>& p);

Network apply_permutation(const Network& net, const BlockPermutation& p);
Params apply_permutation(const NetworkSpec& spec, const Params& params, const BlockPermutation& p);

/// Relaxed action of one matrix per hidden layer: W'_k = D_k W_k D_{k-1}^T and
/// b'_k = D_k b_k. Equals apply_permutation when every D_h is a permutation matrix.
/// Only defined for networks without skip connections.
Params apply_relaxed(const NetworkSpec& spec, const Params& params, const std::vector<Matrix>& d);

}  // namespace modecon
