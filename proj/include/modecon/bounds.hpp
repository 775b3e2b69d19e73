#pragma once

#include "modecon/alignment.hpp"
#include "modecon/network.hpp"
#include "modecon/nn.hpp"
#include "modecon/permutation.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modecon {

/// Loss the bound is stated for. Cross-entropy is bounded through its logit
/// Lipschitz constant sqrt(2) plus the loss of the one-hot targets themselves;
/// RMSE (root of the mean squared output error) has L_L = 1 and no offset.
enum class BoundLoss { cross_entropy, rmse };

std::string to_string(BoundLoss l);

struct BoundConstants {
  double l_sigma = 1.0;
  double l_loss = 0.0;     // L_L
  double loss_offset = 0.0; // loss at the targets themselves (0 for RMSE)
  double epsilon = 0.0;    // max(epsilon1, epsilon2)
  double epsilon1 = 0.0;   // RMS output-target distance of theta1
  double epsilon2 = 0.0;   // same for theta2
  std::vector<double> spectral_norms1;  // per weight matrix
  std::vector<double> spectral_norms2;
};

/// Distance bounds of one interpolation: d[k][i] for hidden layer k at t_grid[i],
/// to endpoint 0 (`to0`) and endpoint 1 (`to1`).
struct DistanceBounds {
  std::vector<double> base;  // RMS distance between endpoint pre-activations per hidden layer
  std::vector<std::vector<double>> to0, to1;
  std::vector<double> bound_t;        // B(t) with the single epsilon
  std::vector<double> bound_sharp_t;  // B(t) with (1-t) eps1 + t eps2
  std::vector<double> realized_t;     // loss along the linear interpolation
  double bound = 0.0;                 // trapezoid integral of bound_t
  double bound_sharp = 0.0;
};

struct BoundReport {
  std::vector<double> t_grid;
  DistanceBounds unaligned, aligned;
  BoundConstants constants;
  BoundLoss loss = BoundLoss::cross_entropy;
  std::string alignment_variant;  // how P was obtained, if known
  bool heuristic = false;         // P did not come from l2_pre alignment

  double b_u() const { return unaligned.bound; }
  double b_a() const { return aligned.bound; }
  /// True when realized loss <= bound at every grid point for both interpolations.
  bool valid(double tol = 1e-9) const;
};

/// Loss bound along the straight line between theta1 and theta2 (unaligned) and
/// between theta1 and P theta2 (aligned). Targets are one-hot labels. Throws
/// UnsupportedError for networks with skip connections.
BoundReport compute_bounds(const Network& theta1, const Network& theta2, const BlockPermutation& p,
                           const Matrix& inputs, std::span<const int> labels, const std::vector<double>& t_grid,
                           BoundLoss loss = BoundLoss::cross_entropy,
                           std::optional<CostVariant> variant = CostVariant::l2_pre);

/// Same with dense targets and the RMSE loss.
BoundReport compute_bounds(const Network& theta1, const Network& theta2, const BlockPermutation& p,
                           const Matrix& inputs, const Matrix& targets, const std::vector<double>& t_grid,
                           std::optional<CostVariant> variant = CostVariant::l2_pre);

/// Bound of one interpolation from precomputed pieces; exposed for monotonicity checks.
DistanceBounds distance_recursion(const std::vector<double>& base, const std::vector<double>& s1,
                                  const std::vector<double>& s2, const BoundConstants& c,
                                  const std::vector<double>& t_grid);

double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

/// Two-layer, width-3 ReLU pair with dense targets for which every inequality in
/// the bound holds with equality: equal first-layer weights with zero column
/// sums, biases large enough to keep pre-activations positive and differing by a
/// multiple of u = (1,1,1)/sqrt(3), output weights alpha uu^T and -beta uu^T, and
/// targets offset from both endpoints' outputs along u. `scale` multiplies every
/// weight matrix.
struct TightInstance {
  Network theta1, theta2;
  Matrix inputs;
  Matrix targets;
};
TightInstance make_tight_instance(double scale = 1.0, std::uint64_t seed = 7);

/// Largest gap over the grid for each inequality class of the bound, plus the
/// gap between the sharpened bound and the realized RMSE.
struct TightnessReport {
  double loss_lipschitz = 0.0;
  double activation_lipschitz = 0.0;
  double matrix_norm = 0.0;
  double triangle = 0.0;
  double epsilon_triangle = 0.0;
  double total = 0.0;
};
TightnessReport tightness_probe(const Network& theta1, const Network& theta2, const Matrix& inputs,
                                const Matrix& targets, const std::vector<double>& t_grid);

}  // namespace modecon
