#include "modecon/pam.hpp"

#include "modecon/assignment.hpp"
#include "modecon/error.hpp"
#include "modecon/rng.hpp"
#include "modecon/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modecon {

void PamConfig::validate() const {
  if (!(nu_p > 0.0) || !(nu_phi > 0.0)) throw ConfigError("pam proximal weights must be positive");
  if (perm_epochs < 0 || curve_epochs < 0) throw ConfigError("pam epochs must be nonnegative");
  if (proj_iters < 1) throw ConfigError("pam proj_iters must be positive");
  if (bvn_truncate < 1) throw ConfigError("pam bvn_truncate must be positive");
  if (n_samples < 0) throw ConfigError("pam n_samples must be nonnegative");
  if (outer_iters < 0) throw ConfigError("pam outer_iters must be nonnegative");
  if (selection_batch < 1) throw ConfigError("pam selection_batch must be positive");
  if (t_nodes < 1) throw ConfigError("pam t_nodes must be positive");
  if (!(perm_lr > 0.0) || !(phi_lr > 0.0)) throw ConfigError("pam learning rates must be positive");
  if (!(anneal > 0.0)) throw ConfigError("pam anneal factor must be positive");
  if (batch_size < 1) throw ConfigError("pam batch_size must be positive");
}

Params PamCurve::at(double t) const {
  return pam_params(theta1, apply_permutation(theta2.spec, theta2.params, perm), phi, t);
}

BezierCurve PamCurve::to_bezier() const {
  Network p2 = apply_permutation(theta2, perm);
  Params control = 0.5 * (theta1.params + p2.params);
  control += phi;
  return BezierCurve{theta1, std::move(p2), std::move(control)};
}

Params pam_params(const Network& theta1, const Params& permuted_theta2, const Params& phi, double t) {
  Params p = (1.0 - t) * theta1.params;
  p.axpy(t, permuted_theta2);
  p.axpy(2.0 * t * (1.0 - t), phi);
  return p;
}

std::vector<double> midpoint_nodes(int k) {
  std::vector<double> nodes;
  for (int i = 0; i < k; ++i) nodes.push_back((i + 0.5) / k);
  return nodes;
}

double pam_objective(const Network& theta1, const Params& permuted_theta2, const Params& phi, const Matrix& inputs,
                     std::span<const int> labels, const std::vector<double>& nodes, LossKind kind) {
  double total = 0.0;
  for (double t : nodes) {
    Network net{theta1.spec, pam_params(theta1, permuted_theta2, phi, t)};
    total += loss(forward(net, inputs).logits, labels, kind);
  }
  return total / static_cast<double>(nodes.size());
}

std::vector<Matrix> relaxed_gradient(const Network& theta1, const Network& theta2, const Params& phi,
                                     const std::vector<Matrix>& d, double t, const Matrix& inputs,
                                     std::span<const int> labels, LossKind kind, double* loss_out) {
  const auto& spec = theta1.spec;
  Params p2 = apply_relaxed(spec, theta2.params, d);
  BackwardResult g = backward(Network{spec, pam_params(theta1, p2, phi, t)}, inputs, labels, kind);
  if (loss_out) *loss_out = g.loss;
  const int hidden = spec.num_hidden();
  std::vector<Matrix> out(static_cast<std::size_t>(hidden));
  for (int h = 0; h < hidden; ++h) {
    const auto k = static_cast<std::size_t>(h);
    const Matrix& w_in = theta2.params.weights[k];
    const Matrix& w_out = theta2.params.weights[k + 1];
    Matrix in_side = h == 0 ? Matrix(w_in.transpose()) : Matrix(d[k - 1] * w_in.transpose());
    Matrix grad = g.grads.weights[k] * in_side;
    Matrix out_side = h + 1 < hidden ? Matrix(d[k + 1] * w_out) : w_out;
    grad.noalias() += g.grads.weights[k + 1].transpose() * out_side;
    if (spec.has_bias) grad.noalias() += g.grads.biases[k] * theta2.params.biases[k].transpose();
    out[k] = t * grad;
  }
  return out;
}

double permutation_distance2(const BlockPermutation& a, const BlockPermutation& b) {
  double total = 0.0;
  for (std::size_t h = 0; h < a.perms.size(); ++h)
    for (std::size_t i = 0; i < a.perms[h].size(); ++i)
      if (a.perms[h][i] != b.perms[h][i]) total += 2.0;
  return total;
}

std::vector<int> selection_indices(int n_rows, const PamConfig& cfg) {
  std::vector<int> idx;
  if (n_rows <= cfg.selection_batch) {
    for (int i = 0; i < n_rows; ++i) idx.push_back(i);
    return idx;
  }
  Rng rng(derive_seed(cfg.seed, "selection"));
  std::vector<int> order = rng.permutation(n_rows);
  idx.assign(order.begin(), order.begin() + cfg.selection_batch);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

struct Batch {
  Matrix x;
  std::vector<int> y;
  std::vector<double> ts;
};

// One pass over the data: either the selection batch at every node (full batch)
// or shuffled minibatches with one uniform t each.
std::vector<Batch> epoch_batches(const Matrix& inputs, std::span<const int> labels, const Matrix& sel_x,
                                 const std::vector<int>& sel_y, const PamConfig& cfg, Rng& rng) {
  std::vector<Batch> out;
  if (cfg.full_batch) {
    out.push_back({sel_x, sel_y, midpoint_nodes(cfg.t_nodes)});
    return out;
  }
  for (const auto& idx : make_batches(static_cast<int>(inputs.rows()), cfg.batch_size, rng)) {
    Batch b{gather_rows(inputs, idx), gather(labels, idx), {}};
    b.ts.push_back(rng.uniform(0.0, 1.0));
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Matrix> permutation_matrices(const BlockPermutation& p) {
  std::vector<Matrix> m;
  for (std::size_t h = 0; h < p.perms.size(); ++h) m.push_back(p.matrix(static_cast<int>(h)));
  return m;
}

}  // namespace

PermStep perm_subproblem(const PamCurve& state, const Matrix& inputs, std::span<const int> labels,
                         const std::vector<int>& selection, const PamConfig& cfg, double lr, std::uint64_t seed) {
  const auto& spec = state.theta1.spec;
  if (spec.residual_period) throw UnsupportedError("PAM is implemented for networks without skip connections");
  const Matrix sel_x = gather_rows(inputs, selection);
  const std::vector<int> sel_y = gather(labels, selection);
  const auto nodes = midpoint_nodes(cfg.t_nodes);

  const std::vector<Matrix> pk = permutation_matrices(state.perm);
  std::vector<Matrix> d = pk;
  Rng rng(derive_seed(seed, "perm-batches"));
  const double shrink = lr / cfg.nu_p;
  for (int epoch = 0; epoch < cfg.perm_epochs; ++epoch) {
    for (const Batch& b : epoch_batches(inputs, labels, sel_x, sel_y, cfg, rng)) {
      std::vector<Matrix> g;
      for (double t : b.ts) {
        auto gt = relaxed_gradient(state.theta1, state.theta2, state.phi, d, t, b.x, b.y, cfg.loss);
        if (g.empty()) g = std::move(gt);
        else
          for (std::size_t h = 0; h < g.size(); ++h) g[h] += gt[h];
      }
      for (std::size_t h = 0; h < d.size(); ++h) {
        g[h] /= static_cast<double>(b.ts.size());
        if (!g[h].allFinite()) throw NumericalError("non-finite permutation gradient");
        // Closed-form step on the proximal term, then back onto the polytope.
        d[h] = (d[h] - lr * g[h] + shrink * pk[h]) / (1.0 + shrink);
        d[h] = project_birkhoff(d[h], cfg.proj_iters);
      }
    }
  }

  PermStep out;
  out.relaxed = d;
  std::vector<BlockPermutation> candidates{state.perm};
  std::vector<std::string> names{"prev"};
  BlockPermutation projection;
  std::vector<BvnDecomposition> decomps;
  for (const auto& m : d) {
    projection.perms.push_back(nearest_permutation(m));
    decomps.push_back(bvn_decompose(m.cwiseMax(0.0), cfg.bvn_truncate, cfg.bvn_rule));
  }
  candidates.push_back(projection);
  names.emplace_back("projection");
  auto samples = sample_permutations(decomps, cfg.n_samples, derive_seed(seed, "samples"));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    candidates.push_back(std::move(samples[s]));
    names.push_back("sample_" + std::to_string(s));
  }

  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double q = pam_objective(state.theta1, apply_permutation(spec, state.theta2.params, candidates[c]), state.phi,
                             sel_x, sel_y, nodes, cfg.loss);
    double score = q + permutation_distance2(candidates[c], state.perm) / (2.0 * cfg.nu_p);
    out.candidate_scores.push_back(score);
    if (c == 0) out.objective_prev = q;
    if (score < best_score) {
      best_score = score;
      best = c;
    }
  }
  if (!(best_score <= out.candidate_scores.front()))
    throw NumericalError("permutation selection increased the proximal objective");
  out.perm = candidates[best];
  out.selected = names[best];
  out.proximal_term = permutation_distance2(out.perm, state.perm) / (2.0 * cfg.nu_p);
  out.objective = best_score - out.proximal_term;
  return out;
}

PhiStep phi_subproblem(const PamCurve& state, const Matrix& inputs, std::span<const int> labels,
                       const std::vector<int>& selection, const PamConfig& cfg, double lr, std::uint64_t seed) {
  const auto& spec = state.theta1.spec;
  const Matrix sel_x = gather_rows(inputs, selection);
  const std::vector<int> sel_y = gather(labels, selection);
  const auto nodes = midpoint_nodes(cfg.t_nodes);
  const Params p2 = apply_permutation(spec, state.theta2.params, state.perm);
  const Params& phi_k = state.phi;

  auto objective = [&](const Params& phi) {
    return pam_objective(state.theta1, p2, phi, sel_x, sel_y, nodes, cfg.loss);
  };
  auto prox = [&](const Params& phi) { return (phi - phi_k).squared_norm() / (2.0 * cfg.nu_phi); };
  auto gradient = [&](const Params& phi, const Batch& b) {
    Params g = Params::zeros_like(spec);
    for (double t : b.ts) {
      BackwardResult r = backward(Network{spec, pam_params(state.theta1, p2, phi, t)}, b.x, b.y, cfg.loss);
      if (!std::isfinite(r.loss) || !r.grads.all_finite()) throw NumericalError("curve subproblem diverged");
      g.axpy(2.0 * t * (1.0 - t) / static_cast<double>(b.ts.size()), r.grads);
    }
    return g;
  };
  auto step = [&](const Params& phi, const Params& g, double rate) {
    const double shrink = rate / cfg.nu_phi;
    Params next = phi;
    next.axpy(-rate, g);
    next.axpy(shrink, phi_k);
    next *= 1.0 / (1.0 + shrink);
    return next;
  };

  PhiStep out;
  out.objective_prev = objective(phi_k);
  Params phi = phi_k;
  Rng rng(derive_seed(seed, "phi-batches"));
  if (cfg.full_batch) {
    double rate = lr;
    double current = out.objective_prev;
    Batch all{sel_x, sel_y, nodes};
    for (int epoch = 0; epoch < cfg.curve_epochs; ++epoch) {
      Params g = gradient(phi, all);
      bool accepted = false;
      for (int halving = 0; halving < 40 && !accepted; ++halving) {
        Params trial = step(phi, g, rate);
        double value = objective(trial) + prox(trial);
        if (value <= current) {
          phi = std::move(trial);
          current = value;
          accepted = true;
        } else {
          rate *= 0.5;
        }
      }
      if (!accepted) break;
    }
  } else {
    for (int epoch = 0; epoch < cfg.curve_epochs; ++epoch)
      for (const Batch& b : epoch_batches(inputs, labels, sel_x, sel_y, cfg, rng)) phi = step(phi, gradient(phi, b), lr);
  }
  if (!phi.all_finite()) throw NumericalError("curve subproblem produced non-finite parameters");
  out.phi = std::move(phi);
  out.objective = objective(out.phi);
  out.proximal_term = prox(out.phi);
  return out;
}

PamResult run_pam(const Network& theta1, const Network& theta2, const BlockPermutation& p_init, const Matrix& inputs,
                  std::span<const int> labels, const PamConfig& cfg) {
  cfg.validate();
  if (!(theta1.spec == theta2.spec)) throw DimensionError("PAM endpoints have different specs");
  p_init.validate(theta1.spec);
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows() || inputs.rows() == 0)
    throw ConfigError("PAM needs a nonempty training set with one label per row");

  PamResult r{PamCurve{theta1, theta2, p_init, Params::zeros_like(theta1.spec)}, {}};
  const auto selection = selection_indices(static_cast<int>(inputs.rows()), cfg);
  const Matrix sel_x = gather_rows(inputs, selection);
  const std::vector<int> sel_y = gather(labels, selection);
  double q0 = pam_objective(theta1, apply_permutation(theta2.spec, theta2.params, p_init), r.curve.phi, sel_x, sel_y,
                            midpoint_nodes(cfg.t_nodes), cfg.loss);
  r.log.push_back({0, "init", q0, 0.0, q0, "", std::nullopt});

  double threshold = 0.0;
  if (cfg.diagnostic) {
    const auto& dg = *cfg.diagnostic;
    double sum = 0.0;
    for (int i = 1; i <= theta1.spec.depth() - 1; ++i) sum += std::pow(dg.k_w, i);
    threshold = dg.k_l * std::sqrt(static_cast<double>(theta1.spec.max_hidden_width())) * dg.delta / 2.0 * sum;
  }

  double scale = 1.0;
  for (int k = 0; k < cfg.outer_iters; ++k) {
    const std::uint64_t seed = derive_seed(cfg.seed, "outer", static_cast<std::uint64_t>(k));
    PermStep ps = perm_subproblem(r.curve, inputs, labels, selection, cfg, cfg.perm_lr * scale, seed);
    r.curve.perm = ps.perm;
    r.log.push_back({k + 1, "perm", ps.objective, ps.proximal_term, ps.objective + ps.proximal_term, ps.selected,
                     std::nullopt});

    PhiStep fs = phi_subproblem(r.curve, inputs, labels, selection, cfg, cfg.phi_lr * scale, seed);
    r.curve.phi = fs.phi;
    PamLogRecord rec{k + 1, "phi", fs.objective, fs.proximal_term,
                     fs.objective + ps.proximal_term + fs.proximal_term, "", std::nullopt};
    if (cfg.diagnostic) rec.rectified_criterion = ps.proximal_term + fs.proximal_term >= threshold;
    r.log.push_back(std::move(rec));
    scale *= cfg.anneal;
  }
  return r;
}

}  // namespace modecon
