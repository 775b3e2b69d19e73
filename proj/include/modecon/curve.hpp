#pragma once

#include "modecon/dataset.hpp"
#include "modecon/network.hpp"
#include "modecon/nn.hpp"
#include "modecon/pgd.hpp"

#include <optional>
#include <span>
#include <vector>

namespace modecon {

/// Quadratic Bezier curve r(t) = (1-t)^2 theta1 + 2t(1-t) control + t^2 theta2.
struct BezierCurve {
  Network theta1;
  Network theta2;
  Params control;

  const NetworkSpec& spec() const { return theta1.spec; }
  void validate() const;
};

/// Parameters of r(t). Exact copies of the endpoints at t = 0 and t = 1.
Params curve_params(const BezierCurve& curve, double t);
Network curve_point(const BezierCurve& curve, double t);

/// Control at the midpoint, so the curve starts as the straight segment.
BezierCurve init_linear(const Network& theta1, const Network& theta2);

struct CurveTrainConfig {
  double lr = 0.05;
  int lr_decay_every = 20;
  double lr_decay_factor = 0.5;
  double weight_decay = 0.0;  // on the control point only
  double momentum = 0.0;
  int epochs = 40;
  int batch_size = 64;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;

  void validate() const;
  double lr_at(int epoch) const;
};

struct CurveTrainResult {
  BezierCurve curve;
  std::vector<double> epoch_loss;
};

/// Stochastic training of the control point: each batch draws one t uniformly
/// and steps along 2t(1-t) times the loss gradient at r(t). With an attack, the
/// batch is first perturbed against r(t).
CurveTrainResult train_curve(BezierCurve curve, const Matrix& inputs, std::span<const int> labels,
                             const CurveTrainConfig& cfg, const std::optional<PGDConfig>& attack = std::nullopt);

/// Gradient of the batch loss at r(t) with respect to the control point.
Params control_gradient(const BezierCurve& curve, double t, const Matrix& inputs, std::span<const int> labels,
                        LossKind kind, double* loss_out = nullptr);

struct CurveMetrics {
  std::vector<double> t_grid;
  std::vector<double> loss;
  std::vector<double> accuracy;
  double max_barrier = 0.0;  // max over the grid of loss minus the endpoint-loss chord
  double min_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_loss = 0.0;
};

std::vector<double> uniform_grid(int points);
void validate_grid(const std::vector<double>& t_grid);

/// Loss and accuracy at each grid point. With an attack, each grid network is
/// attacked independently with a random start drawn from `attack_seed` and the point index.
CurveMetrics evaluate_curve(const BezierCurve& curve, const Matrix& inputs, std::span<const int> labels,
                            const std::vector<double>& t_grid, LossKind kind = LossKind::cross_entropy,
                            const std::optional<PGDConfig>& attack = std::nullopt, std::uint64_t attack_seed = 0);

/// Summary statistics of per-point losses and accuracies.
CurveMetrics summarize_curve(std::vector<double> t_grid, std::vector<double> loss, std::vector<double> accuracy);

struct PlaneNode {
  double u = 0.0, v = 0.0, loss = 0.0, accuracy = 0.0;
};

/// Orthonormal basis of the plane through three networks.
struct PlaneBasis {
  Params origin, e1, e2;
  NetworkSpec spec;
  double u2 = 0.0;          // theta2 sits at (u2, 0)
  double u3 = 0.0, v3 = 0.0; // theta3 sits at (u3, v3)

  Network at(double u, double v) const;
};

/// e1 = (theta2 - theta1)/|.|, e2 = Gram-Schmidt of theta3 - theta1 against e1.
/// Throws NumericalError when the three points are (nearly) colinear.
PlaneBasis plane_basis(const Network& theta1, const Network& theta2, const Network& theta3);

struct PlaneGrid {
  PlaneBasis basis;
  std::vector<PlaneNode> nodes;  // row-major, v outer, u inner
  int resolution = 0;
};

/// Evaluates a resolution x resolution grid over the triangle's bounding box,
/// expanded on every side by `margin` times the box extent.
PlaneGrid plane_grid(const Network& theta1, const Network& theta2, const Network& theta3, const Matrix& inputs,
                     std::span<const int> labels, int resolution, double margin,
                     LossKind kind = LossKind::cross_entropy);

}  // namespace modecon
