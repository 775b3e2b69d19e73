#include "modecon/curve.hpp"

#include "modecon/error.hpp"
#include "modecon/rng.hpp"
#include "modecon/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modecon {

void BezierCurve::validate() const {
  if (!(theta1.spec == theta2.spec)) throw DimensionError("curve endpoints have different specs");
  theta1.validate();
  theta2.validate();
  if (!control.same_shape(theta1.params)) throw DimensionError("curve control point does not match the endpoints");
  if (!control.all_finite()) throw NumericalError("curve control point has non-finite entries");
}

Params curve_params(const BezierCurve& curve, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("curve parameter t must lie in [0, 1]");
  if (t == 0.0) return curve.theta1.params;
  if (t == 1.0) return curve.theta2.params;
  const double a = (1.0 - t) * (1.0 - t), b = 2.0 * t * (1.0 - t), c = t * t;
  Params p = a * curve.theta1.params;
  p.axpy(b, curve.control);
  p.axpy(c, curve.theta2.params);
  return p;
}

Network curve_point(const BezierCurve& curve, double t) { return Network{curve.spec(), curve_params(curve, t)}; }

BezierCurve init_linear(const Network& theta1, const Network& theta2) {
  if (!(theta1.spec == theta2.spec)) throw DimensionError("curve endpoints have different specs");
  BezierCurve c{theta1, theta2, 0.5 * (theta1.params + theta2.params)};
  return c;
}

void CurveTrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("curve lr must be positive");
  if (lr_decay_every < 0 || !(lr_decay_factor > 0.0)) throw ConfigError("invalid curve lr schedule");
  if (weight_decay < 0.0) throw ConfigError("curve weight_decay must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("curve momentum must lie in [0, 1)");
  if (epochs < 0) throw ConfigError("curve epochs must be nonnegative");
  if (batch_size <= 0) throw ConfigError("curve batch_size must be positive");
}

double CurveTrainConfig::lr_at(int epoch) const {
  if (lr_decay_every == 0) return lr;
  return lr * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

Params control_gradient(const BezierCurve& curve, double t, const Matrix& inputs, std::span<const int> labels,
                        LossKind kind, double* loss_out) {
  BackwardResult g = backward(curve_point(curve, t), inputs, labels, kind);
  if (loss_out) *loss_out = g.loss;
  g.grads *= 2.0 * t * (1.0 - t);
  return std::move(g.grads);
}

CurveTrainResult train_curve(BezierCurve curve, const Matrix& inputs, std::span<const int> labels,
                             const CurveTrainConfig& cfg, const std::optional<PGDConfig>& attack) {
  cfg.validate();
  curve.validate();
  if (attack) attack->validate();
  CurveTrainResult out{curve, {}};
  if (cfg.epochs == 0) return out;
  if (inputs.rows() == 0) throw ConfigError("curve training set is empty");

  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  Rng t_rng(derive_seed(cfg.seed, "t"));
  Rng attack_rng(derive_seed(cfg.seed, "attack"));
  Params velocity = Params::zeros_like(curve.spec());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    auto batches = make_batches(static_cast<int>(inputs.rows()), cfg.batch_size, batch_rng);
    for (const auto& idx : batches) {
      Matrix xb = gather_rows(inputs, idx);
      std::vector<int> yb = gather(labels, idx);
      const double t = t_rng.uniform(0.0, 1.0);
      if (attack) xb = pgd_attack(curve_point(curve, t), xb, yb, *attack, attack_rng);
      double batch_loss = 0.0;
      Params g = control_gradient(curve, t, xb, yb, cfg.loss, &batch_loss);
      if (!std::isfinite(batch_loss) || !g.all_finite())
        throw NumericalError("curve training diverged at epoch " + std::to_string(epoch));
      if (cfg.weight_decay > 0.0) g.axpy(cfg.weight_decay, curve.control);
      if (cfg.momentum > 0.0) {
        velocity *= cfg.momentum;
        velocity += g;
        curve.control.axpy(-lr, velocity);
      } else {
        curve.control.axpy(-lr, g);
      }
      total += batch_loss;
    }
    out.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  if (!curve.control.all_finite()) throw NumericalError("curve control point became non-finite");
  out.curve = std::move(curve);
  return out;
}

std::vector<double> uniform_grid(int points) {
  if (points < 2) throw ConfigError("a curve grid needs at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
  g.back() = 1.0;
  return g;
}

void validate_grid(const std::vector<double>& t_grid) {
  if (t_grid.size() < 2 || t_grid.front() != 0.0 || t_grid.back() != 1.0)
    throw ConfigError("t grid must start at 0 and end at 1");
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw ConfigError("t grid must be sorted");
}

CurveMetrics summarize_curve(std::vector<double> t_grid, std::vector<double> loss, std::vector<double> accuracy) {
  CurveMetrics m;
  const double l0 = loss.front(), l1 = loss.back();
  m.max_barrier = 0.0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    double t = t_grid[i];
    m.max_barrier = std::max(m.max_barrier, loss[i] - ((1.0 - t) * l0 + t * l1));
  }
  m.min_accuracy = *std::min_element(accuracy.begin(), accuracy.end());
  m.mean_accuracy = std::accumulate(accuracy.begin(), accuracy.end(), 0.0) / static_cast<double>(accuracy.size());
  m.mean_loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(loss.size());
  m.t_grid = std::move(t_grid);
  m.loss = std::move(loss);
  m.accuracy = std::move(accuracy);
  return m;
}

CurveMetrics evaluate_curve(const BezierCurve& curve, const Matrix& inputs, std::span<const int> labels,
                            const std::vector<double>& t_grid, LossKind kind, const std::optional<PGDConfig>& attack,
                            std::uint64_t attack_seed) {
  validate_grid(t_grid);
  std::vector<double> loss_v, acc_v;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    Network net = curve_point(curve, t_grid[i]);
    Matrix x = inputs;
    if (attack) {
      Rng rng(derive_seed(attack_seed, "eval", i));
      x = pgd_attack(net, inputs, labels, *attack, rng);
    }
    Matrix logits = forward(net, x).logits;
    loss_v.push_back(loss(logits, labels, kind));
    acc_v.push_back(accuracy(logits, labels));
  }
  return summarize_curve(t_grid, std::move(loss_v), std::move(acc_v));
}

Network PlaneBasis::at(double u, double v) const {
  Params p = origin;
  p.axpy(u, e1);
  p.axpy(v, e2);
  return Network{spec, std::move(p)};
}

PlaneBasis plane_basis(const Network& theta1, const Network& theta2, const Network& theta3) {
  if (!(theta1.spec == theta2.spec) || !(theta1.spec == theta3.spec))
    throw DimensionError("plane needs three networks with one spec");
  PlaneBasis b;
  b.spec = theta1.spec;
  b.origin = theta1.params;
  Params d2 = theta2.params - theta1.params;
  Params d3 = theta3.params - theta1.params;
  b.u2 = d2.norm();
  if (b.u2 < 1e-10) throw NumericalError("degenerate plane: theta1 and theta2 coincide");
  b.e1 = (1.0 / b.u2) * d2;
  b.u3 = d3.dot(b.e1);
  Params r = d3;
  r.axpy(-b.u3, b.e1);
  b.v3 = r.norm();
  if (b.v3 < 1e-10) throw NumericalError("degenerate plane: the three networks are colinear");
  b.e2 = (1.0 / b.v3) * r;
  return b;
}

PlaneGrid plane_grid(const Network& theta1, const Network& theta2, const Network& theta3, const Matrix& inputs,
                     std::span<const int> labels, int resolution, double margin, LossKind kind) {
  if (resolution < 2) throw ConfigError("plane resolution must be at least 2");
  if (margin < 0.0) throw ConfigError("plane margin must be nonnegative");
  PlaneGrid g;
  g.basis = plane_basis(theta1, theta2, theta3);
  g.resolution = resolution;
  const auto& b = g.basis;
  double umin = std::min({0.0, b.u2, b.u3}), umax = std::max({0.0, b.u2, b.u3});
  double vmin = std::min(0.0, b.v3), vmax = std::max(0.0, b.v3);
  double du = margin * (umax - umin), dv = margin * (vmax - vmin);
  umin -= du;
  umax += du;
  vmin -= dv;
  vmax += dv;
  for (int iv = 0; iv < resolution; ++iv) {
    double v = vmin + (vmax - vmin) * iv / (resolution - 1);
    for (int iu = 0; iu < resolution; ++iu) {
      double u = umin + (umax - umin) * iu / (resolution - 1);
      Matrix logits = forward(b.at(u, v), inputs).logits;
      g.nodes.push_back({u, v, loss(logits, labels, kind), accuracy(logits, labels)});
    }
  }
  return g;
}

}  // namespace modecon
