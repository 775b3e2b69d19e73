#include "modecon/bounds.hpp"

#include "modecon/error.hpp"
#include "modecon/rng.hpp"
#include "modecon/spectral.hpp"

#include <algorithm>
#include <cmath>

namespace modecon {

std::string to_string(BoundLoss l) { return l == BoundLoss::cross_entropy ? "cross_entropy" : "rmse"; }

bool BoundReport::valid(double tol) const {
  for (const auto* d : {&unaligned, &aligned})
    for (std::size_t i = 0; i < t_grid.size(); ++i)
      if (d->realized_t[i] > d->bound_t[i] + tol || d->realized_t[i] > d->bound_sharp_t[i] + tol) return false;
  return true;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

namespace {

// RMS over samples of the row norms.
double rms(const Matrix& m) { return m.rows() == 0 ? 0.0 : m.norm() / std::sqrt(static_cast<double>(m.rows())); }

Network lerp(const Network& a, const Network& b, double t) {
  Params p = (1.0 - t) * a.params;
  p.axpy(t, b.params);
  return Network{a.spec, std::move(p)};
}

double realized_loss(const Matrix& logits, const Matrix& targets, std::span<const int> labels, BoundLoss kind) {
  if (kind == BoundLoss::rmse) return rms(logits - targets);
  return loss(logits, labels, LossKind::cross_entropy);
}

void check_supported(const Network& a, const Network& b) {
  if (!(a.spec == b.spec)) throw DimensionError("bound endpoints have different specs");
  if (a.spec.residual_period) throw UnsupportedError("loss bounds are only defined for feed-forward networks without skip connections");
}

BoundReport bounds_impl(const Network& theta1, const Network& theta2, const BlockPermutation& p, const Matrix& inputs,
                        const Matrix& targets, std::span<const int> labels, const std::vector<double>& t_grid,
                        BoundLoss kind, std::optional<CostVariant> variant) {
  check_supported(theta1, theta2);
  if (inputs.rows() == 0) throw ConfigError("bounds need a nonempty dataset");
  if (t_grid.size() < 2 || !std::is_sorted(t_grid.begin(), t_grid.end()) || t_grid.front() < 0.0 || t_grid.back() > 1.0)
    throw ConfigError("bound grid must be sorted within [0, 1]");
  const Network theta2p = apply_permutation(theta2, p);

  BoundReport r;
  r.t_grid = t_grid;
  r.loss = kind;
  r.alignment_variant = variant ? to_string(*variant) : "unspecified";
  r.heuristic = !variant || *variant != CostVariant::l2_pre;

  auto& c = r.constants;
  c.l_sigma = theta1.spec.activation.lipschitz();
  if (kind == BoundLoss::cross_entropy) {
    c.l_loss = std::sqrt(2.0);
    c.loss_offset = loss(targets, labels, LossKind::cross_entropy);
  } else {
    c.l_loss = 1.0;
    c.loss_offset = 0.0;
  }
  ForwardResult f1 = forward(theta1, inputs, Capture::pre_activations);
  ForwardResult f2 = forward(theta2, inputs, Capture::pre_activations);
  ForwardResult f2p = forward(theta2p, inputs, Capture::pre_activations);
  c.epsilon1 = rms(f1.logits - targets);
  c.epsilon2 = rms(f2.logits - targets);
  c.epsilon = std::max(c.epsilon1, c.epsilon2);
  for (const auto& w : theta1.params.weights) c.spectral_norms1.push_back(spectral_norm(w));
  for (const auto& w : theta2.params.weights) c.spectral_norms2.push_back(spectral_norm(w));

  std::vector<double> base_u, base_a;
  for (std::size_t k = 0; k < f1.captured.size(); ++k) {
    base_u.push_back(rms(f1.captured[k] - f2.captured[k]));
    base_a.push_back(rms(f1.captured[k] - f2p.captured[k]));
  }
  r.unaligned = distance_recursion(base_u, c.spectral_norms1, c.spectral_norms2, c, t_grid);
  r.aligned = distance_recursion(base_a, c.spectral_norms1, c.spectral_norms2, c, t_grid);
  for (double t : t_grid) {
    r.unaligned.realized_t.push_back(realized_loss(forward(lerp(theta1, theta2, t), inputs).logits, targets, labels, kind));
    r.aligned.realized_t.push_back(realized_loss(forward(lerp(theta1, theta2p, t), inputs).logits, targets, labels, kind));
  }
  return r;
}

}  // namespace

DistanceBounds distance_recursion(const std::vector<double>& base, const std::vector<double>& s1,
                                  const std::vector<double>& s2, const BoundConstants& c,
                                  const std::vector<double>& t_grid) {
  DistanceBounds d;
  d.base = base;
  const std::size_t hidden = base.size();
  if (s1.size() != hidden + 1 || s2.size() != hidden + 1) throw DimensionError("need one spectral norm per layer");
  d.to0.assign(hidden, std::vector<double>(t_grid.size(), 0.0));
  d.to1.assign(hidden, std::vector<double>(t_grid.size(), 0.0));
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    double prev0 = 0.0, prev1 = 0.0;
    for (std::size_t k = 0; k < hidden; ++k) {
      double carried = k == 0 ? 0.0 : c.l_sigma * ((1.0 - t) * s1[k] * prev0 + t * s2[k] * prev1);
      prev0 = carried + t * base[k];
      prev1 = carried + (1.0 - t) * base[k];
      d.to0[k][i] = prev0;
      d.to1[k][i] = prev1;
    }
    double out = hidden == 0 ? 0.0 : c.l_sigma * ((1.0 - t) * s1[hidden] * prev0 + t * s2[hidden] * prev1);
    d.bound_t.push_back(c.loss_offset + c.l_loss * (out + c.epsilon));
    d.bound_sharp_t.push_back(c.loss_offset + c.l_loss * (out + (1.0 - t) * c.epsilon1 + t * c.epsilon2));
  }
  d.bound = trapezoid(t_grid, d.bound_t);
  d.bound_sharp = trapezoid(t_grid, d.bound_sharp_t);
  return d;
}

BoundReport compute_bounds(const Network& theta1, const Network& theta2, const BlockPermutation& p,
                           const Matrix& inputs, std::span<const int> labels, const std::vector<double>& t_grid,
                           BoundLoss loss_kind, std::optional<CostVariant> variant) {
  check_supported(theta1, theta2);
  Matrix targets = one_hot(labels, theta1.spec.output_width());
  return bounds_impl(theta1, theta2, p, inputs, targets, labels, t_grid, loss_kind, variant);
}

BoundReport compute_bounds(const Network& theta1, const Network& theta2, const BlockPermutation& p,
                           const Matrix& inputs, const Matrix& targets, const std::vector<double>& t_grid,
                           std::optional<CostVariant> variant) {
  check_supported(theta1, theta2);
  if (targets.rows() != inputs.rows() || targets.cols() != theta1.spec.output_width())
    throw DimensionError("targets do not match the inputs and the output width");
  return bounds_impl(theta1, theta2, p, inputs, targets, {}, t_grid, BoundLoss::rmse, variant);
}

TightInstance make_tight_instance(double scale, std::uint64_t seed) {
  if (!(scale > 0.0)) throw ConfigError("tight instance scale must be positive");
  const int m = 3, n = 6;
  Rng rng(seed);
  NetworkSpec spec = make_spec(m, {m}, m, ActivationSpec{Activation::relu, 1.0}, true);
  const Vector u = Vector::Ones(m) / std::sqrt(static_cast<double>(m));

  Matrix w(m, m);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  w.rowwise() -= w.colwise().mean();  // u^T W = 0
  w *= scale;
  const double alpha = 0.8 * scale, beta = 1.3 * scale, gap = 0.7, e1 = 0.25, e2 = 0.4;

  TightInstance inst;
  inst.inputs.resize(n, m);
  for (Eigen::Index i = 0; i < inst.inputs.size(); ++i) inst.inputs.data()[i] = rng.uniform(0.0, 1.0);

  Network a{spec, Params::zeros_like(spec)};
  a.params.weights[0] = w;
  a.params.biases[0] = Vector::Constant(m, 10.0 * (1.0 + scale)) + Vector::LinSpaced(m, 0.0, 1.0);
  a.params.weights[1] = alpha * u * u.transpose();
  a.params.biases[1] = Vector::LinSpaced(m, 0.1, 0.3);

  Network b = a;
  b.params.biases[0] = a.params.biases[0] + gap * u;
  b.params.weights[1] = -beta * u * u.transpose();

  Matrix y1 = forward(a, inst.inputs).logits;
  inst.targets = y1.rowwise() - e1 * u.transpose();
  // Chosen so that the outputs of b sit at targets + e2 u for every sample.
  Matrix y2_no_bias = forward(b, inst.inputs).logits.rowwise() - b.params.biases[1].transpose();
  b.params.biases[1] = (inst.targets.row(0) - y2_no_bias.row(0)).transpose() + e2 * u;

  inst.theta1 = std::move(a);
  inst.theta2 = std::move(b);
  return inst;
}

TightnessReport tightness_probe(const Network& theta1, const Network& theta2, const Matrix& inputs,
                                const Matrix& targets, const std::vector<double>& t_grid) {
  check_supported(theta1, theta2);
  const auto& act = theta1.spec.activation;
  const double ls = act.lipschitz();
  const int depth = theta1.spec.depth();
  const int hidden = theta1.spec.num_hidden();
  auto sigma = [&](const Matrix& m) { return Matrix(m.unaryExpr([&](double x) { return act.apply(x); })); };

  BoundReport br = compute_bounds(theta1, theta2, BlockPermutation::identity(theta1.spec), inputs, targets, t_grid);
  const auto& c = br.constants;
  ForwardResult e1 = forward(theta1, inputs, Capture::pre_activations);
  ForwardResult e2 = forward(theta2, inputs, Capture::pre_activations);

  TightnessReport rep;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    Params pt = (1.0 - t) * theta1.params;
    pt.axpy(t, theta2.params);
    ForwardResult ft = forward(Network{theta1.spec, pt}, inputs, Capture::pre_activations);
    for (int k = 0; k <= hidden; ++k) {
      // Input side of weights[k]: the post-activation differences to each endpoint.
      Matrix dg0, dg1;
      if (k > 0) {
        const auto h = static_cast<std::size_t>(k) - 1;
        Matrix df0 = ft.captured[h] - e1.captured[h], df1 = ft.captured[h] - e2.captured[h];
        dg0 = sigma(ft.captured[h]) - sigma(e1.captured[h]);
        dg1 = sigma(ft.captured[h]) - sigma(e2.captured[h]);
        rep.activation_lipschitz = std::max({rep.activation_lipschitz, ls * rms(df0) - rms(dg0), ls * rms(df1) - rms(dg1)});
        const Matrix& w1 = theta1.params.weights[static_cast<std::size_t>(k)];
        const Matrix& w2 = theta2.params.weights[static_cast<std::size_t>(k)];
        Matrix a = (1.0 - t) * dg0 * w1.transpose();
        Matrix b = t * dg1 * w2.transpose();
        rep.matrix_norm = std::max({rep.matrix_norm,
                                    (1.0 - t) * (c.spectral_norms1[static_cast<std::size_t>(k)] * rms(dg0)) - rms(a),
                                    t * (c.spectral_norms2[static_cast<std::size_t>(k)] * rms(dg1)) - rms(b)});
        if (k < depth - 1) {
          const auto hk = static_cast<std::size_t>(k);
          Matrix base = e2.captured[hk] - e1.captured[hk];
          double lhs0 = rms(ft.captured[hk] - e1.captured[hk]);
          double lhs1 = rms(ft.captured[hk] - e2.captured[hk]);
          rep.triangle = std::max({rep.triangle, rms(a) + rms(b) + t * rms(base) - lhs0,
                                   rms(a) + rms(b) + (1.0 - t) * rms(base) - lhs1});
        } else {
          double out_norm = rms(ft.logits - targets);
          rep.triangle = std::max(rep.triangle, rms(a) + rms(b) - rms(a + b));
          rep.epsilon_triangle = std::max(rep.epsilon_triangle, rms(a + b) + (1.0 - t) * c.epsilon1 + t * c.epsilon2 - out_norm);
        }
      }
    }
    double realized = br.unaligned.realized_t[i];
    rep.loss_lipschitz = std::max(rep.loss_lipschitz, c.l_loss * rms(ft.logits - targets) - realized);
    rep.total = std::max(rep.total, br.unaligned.bound_sharp_t[i] - realized);
  }
  return rep;
}

}  // namespace modecon
