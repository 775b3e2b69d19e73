#pragma once

#include "modecon/birkhoff.hpp"
#include "modecon/curve.hpp"
#include "modecon/network.hpp"
#include "modecon/nn.hpp"
#include "modecon/permutation.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modecon {

/// Constants of the rectified-network step-size criterion. When set, each outer
/// iteration logs whether the proximal step sizes reach
/// K_L sqrt(M) (delta / 2) sum_{i=1}^{L-1} K_W^i, with M the widest hidden layer.
struct RectifiedDiagnostic {
  double k_l = 1.4142135623730951;
  double k_w = 1.0;
  double delta = 0.1;
};

struct PamConfig {
  double nu_p = 1.0;
  double nu_phi = 1.0;
  int perm_epochs = 20;
  int curve_epochs = 250;
  int proj_iters = 20;
  int bvn_truncate = 10;
  int n_samples = 32;
  int outer_iters = 1;
  int selection_batch = 2048;
  int t_nodes = 8;  // midpoint nodes for the curve objective estimate
  double perm_lr = 0.05;
  double phi_lr = 0.05;
  double anneal = 0.5;  // both learning rates are multiplied by this each outer iteration
  int batch_size = 64;
  bool full_batch = false;
  BvnRule bvn_rule = BvnRule::max_trace;
  LossKind loss = LossKind::cross_entropy;
  std::uint64_t seed = 0;
  std::optional<RectifiedDiagnostic> diagnostic;

  void validate() const;
};

/// Curve with a permutation inside it:
/// r(t) = (1-t)^2 theta1 + t^2 P theta2 + 2t(1-t)((theta1 + P theta2)/2 + phi)
///      = (1-t) theta1 + t P theta2 + 2t(1-t) phi.
struct PamCurve {
  Network theta1;
  Network theta2;  // unpermuted
  BlockPermutation perm;
  Params phi;

  /// Equivalent plain Bezier curve between theta1 and P theta2.
  BezierCurve to_bezier() const;
  Params at(double t) const;
};

/// Parameters of r(t) with a relaxed matrix per hidden layer in place of P.
Params pam_params(const Network& theta1, const Params& permuted_theta2, const Params& phi, double t);

/// Midpoint nodes (k + 1/2) / K used by the objective estimate.
std::vector<double> midpoint_nodes(int k);

/// Estimate of E_t L(r(t)) on a fixed batch with the midpoint rule.
double pam_objective(const Network& theta1, const Params& permuted_theta2, const Params& phi, const Matrix& inputs,
                     std::span<const int> labels, const std::vector<double>& nodes, LossKind kind);

/// Gradient of L(r(t)) on a batch with respect to the relaxed matrices D, where
/// r(t) uses apply_relaxed(theta2, D).
std::vector<Matrix> relaxed_gradient(const Network& theta1, const Network& theta2, const Params& phi,
                                     const std::vector<Matrix>& d, double t, const Matrix& inputs,
                                     std::span<const int> labels, LossKind kind, double* loss_out = nullptr);

/// Squared Frobenius distance between two block permutations' matrices.
double permutation_distance2(const BlockPermutation& a, const BlockPermutation& b);

struct PermStep {
  BlockPermutation perm;
  std::string selected;  // prev | projection | sample_k
  double objective = 0.0;       // Q(phi_k, P_{k+1})
  double proximal_term = 0.0;   // ||P_{k+1} - P_k||^2 / (2 nu_P)
  double objective_prev = 0.0;  // Q(phi_k, P_k)
  std::vector<double> candidate_scores;
  std::vector<Matrix> relaxed;  // D* before rounding
};

struct PhiStep {
  Params phi;
  double objective = 0.0;      // Q(phi_{k+1}, P)
  double proximal_term = 0.0;  // ||phi_{k+1} - phi_k||^2 / (2 nu_phi)
  double objective_prev = 0.0; // Q(phi_k, P)
};

/// The batch the candidate permutations are scored on: a seeded subset of the
/// training rows of size selection_batch (all rows if fewer).
std::vector<int> selection_indices(int n_rows, const PamConfig& cfg);

/// Relaxed projected SGD on the permutations, then selection of the best of
/// {P_k, projection of D*, M BvN samples} by the proximal objective on the
/// selection batch. The result never scores worse than P_k.
PermStep perm_subproblem(const PamCurve& state, const Matrix& inputs, std::span<const int> labels,
                         const std::vector<int>& selection, const PamConfig& cfg, double lr, std::uint64_t seed);

/// Proximal SGD on phi. In full-batch mode this is proximal gradient descent
/// with step halving, so the proximal objective cannot increase.
PhiStep phi_subproblem(const PamCurve& state, const Matrix& inputs, std::span<const int> labels,
                       const std::vector<int>& selection, const PamConfig& cfg, double lr, std::uint64_t seed);

struct PamLogRecord {
  int iter = 0;
  std::string phase;  // init | perm | phi
  double objective = 0.0;
  double proximal_term = 0.0;
  double proximal_objective = 0.0;  // objective plus the proximal terms of this iteration so far
  std::string selected_candidate;
  std::optional<bool> rectified_criterion;
};

struct PamResult {
  PamCurve curve;
  std::vector<PamLogRecord> log;
};

/// Alternates perm_subproblem and phi_subproblem `outer_iters` times starting
/// from phi = 0 and P = p_init.
PamResult run_pam(const Network& theta1, const Network& theta2, const BlockPermutation& p_init, const Matrix& inputs,
                  std::span<const int> labels, const PamConfig& cfg);

}  // namespace modecon
