#pragma once

#include "modecon/assignment.hpp"
#include "modecon/network.hpp"
#include "modecon/permutation.hpp"

#include <string>
#include <vector>

namespace modecon {

enum class CostVariant { corr_post, corr_pre, l2_post, l2_pre };

std::string to_string(CostVariant v);
CostVariant cost_variant_from_string(const std::string& s);
bool is_correlation(CostVariant v);
bool uses_post_activations(CostVariant v);

struct CostMatrix {
  int layer = 0;  // hidden layer index, 0-based
  Matrix values;
  CostVariant variant = CostVariant::corr_post;
};

/// Per hidden layer, an m_l x n_samples matrix of activations. For correlation
/// variants each row is centered and scaled to unit norm; rows with zero variance
/// become zero vectors.
std::vector<Matrix> collect_activations(const Network& net, const Matrix& inputs, CostVariant variant);

/// Centers and unit-normalizes each row; zero-variance rows become zero.
Matrix normalize_rows(const Matrix& z);

/// Correlation variants: clamp(1 - Z1 Z2^T, 0, 2). L2 variants: squared
/// Euclidean distance between rows, summed over samples.
CostMatrix build_cost(const Matrix& z1, const Matrix& z2, CostVariant variant, int layer = 0);

struct AlignResult {
  BlockPermutation perm;
  Network aligned;                    // perm applied to net2
  std::vector<CostMatrix> costs;      // cost each layer was solved with
  std::vector<double> cost_per_layer; // total matched cost per hidden layer
};

/// Matches the hidden units of net2 to those of net1, one layer after another,
/// recomputing net2's activations with earlier layers already permuted. Residual
/// networks need `residual_mode`: skip-tied layers then share the permutation
/// solved on their averaged cost matrix.
AlignResult align_networks(const Network& net1, const Network& net2, const Matrix& inputs,
                           CostVariant variant = CostVariant::corr_post, bool residual_mode = false);

/// Per hidden layer, mean correlation between unit i of net1 and unit i of net2
/// over the inputs (post-activations; zero-variance units count as 0).
std::vector<double> correlation_signature(const Network& net1, const Network& net2, const Matrix& inputs);

/// Aligns on the two halves of the inputs separately and returns, per layer, the
/// fraction of units whose matches agree.
std::vector<double> alignment_stability(const Network& net1, const Network& net2, const Matrix& inputs,
                                        CostVariant variant = CostVariant::corr_post, bool residual_mode = false);

}  // namespace modecon
