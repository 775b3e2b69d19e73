#include "modecon/alignment.hpp"

#include "modecon/error.hpp"
#include "modecon/nn.hpp"

#include <algorithm>
#include <cmath>

namespace modecon {

std::string to_string(CostVariant v) {
  switch (v) {
    case CostVariant::corr_post: return "corr_post";
    case CostVariant::corr_pre: return "corr_pre";
    case CostVariant::l2_post: return "l2_post";
    case CostVariant::l2_pre: return "l2_pre";
  }
  return "unknown";
}

CostVariant cost_variant_from_string(const std::string& s) {
  if (s == "corr_post") return CostVariant::corr_post;
  if (s == "corr_pre") return CostVariant::corr_pre;
  if (s == "l2_post") return CostVariant::l2_post;
  if (s == "l2_pre") return CostVariant::l2_pre;
  throw ConfigError("unknown alignment variant '" + s + "'");
}

bool is_correlation(CostVariant v) { return v == CostVariant::corr_post || v == CostVariant::corr_pre; }
bool uses_post_activations(CostVariant v) { return v == CostVariant::corr_post || v == CostVariant::l2_post; }

Matrix normalize_rows(const Matrix& z) {
  Matrix out = z.colwise() - z.rowwise().mean();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double scale = std::max(1.0, z.row(i).cwiseAbs().maxCoeff());
    double norm = out.row(i).norm();
    if (norm <= 1e-12 * scale * std::sqrt(static_cast<double>(z.cols()))) out.row(i).setZero();
    else out.row(i) /= norm;
  }
  return out;
}

std::vector<Matrix> collect_activations(const Network& net, const Matrix& inputs, CostVariant variant) {
  if (inputs.rows() == 0) throw ConfigError("alignment split is empty");
  auto capture = uses_post_activations(variant) ? Capture::post_activations : Capture::pre_activations;
  ForwardResult fr = forward(net, inputs, capture);
  std::vector<Matrix> z;
  z.reserve(fr.captured.size());
  for (auto& a : fr.captured) z.push_back(is_correlation(variant) ? normalize_rows(a.transpose()) : Matrix(a.transpose()));
  return z;
}

CostMatrix build_cost(const Matrix& z1, const Matrix& z2, CostVariant variant, int layer) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw DimensionError("activation matrices for hidden layer " + std::to_string(layer + 1) + " differ in shape");
  CostMatrix c{layer, Matrix(), variant};
  if (is_correlation(variant)) {
    c.values = (1.0 - (z1 * z2.transpose()).array()).cwiseMax(0.0).cwiseMin(2.0).matrix();
  } else {
    c.values.resize(z1.rows(), z2.rows());
    for (Eigen::Index i = 0; i < z1.rows(); ++i)
      for (Eigen::Index j = 0; j < z2.rows(); ++j) c.values(i, j) = (z1.row(i) - z2.row(j)).squaredNorm();
  }
  if (!c.values.allFinite()) throw NumericalError("non-finite alignment cost at hidden layer " + std::to_string(layer + 1));
  return c;
}

namespace {

void check_pair(const Network& net1, const Network& net2) {
  if (!(net1.spec == net2.spec)) throw DimensionError("networks to align have different specs");
}

}  // namespace

AlignResult align_networks(const Network& net1, const Network& net2, const Matrix& inputs, CostVariant variant,
                           bool residual_mode) {
  check_pair(net1, net2);
  const auto& spec = net1.spec;
  if (spec.residual_period && !residual_mode)
    throw ConfigError("network has skip connections; alignment needs residual_mode");
  if (inputs.rows() == 0) throw ConfigError("alignment split is empty");

  const int hidden = spec.num_hidden();
  const std::vector<Matrix> z1 = collect_activations(net1, inputs, variant);
  AlignResult r;
  r.perm = BlockPermutation::identity(spec);
  r.aligned = net2;
  r.costs.resize(static_cast<std::size_t>(hidden));
  r.cost_per_layer.assign(static_cast<std::size_t>(hidden), 0.0);

  std::vector<std::vector<int>> groups;
  if (residual_mode) groups = spec.tied_groups();
  else
    for (int h = 0; h < hidden; ++h) groups.push_back({h});

  for (const auto& group : groups) {
    std::vector<Matrix> z2 = collect_activations(r.aligned, inputs, variant);
    Matrix avg = Matrix::Zero(spec.hidden_width(group.front()), spec.hidden_width(group.front()));
    for (int h : group) {
      CostMatrix c = build_cost(z1[static_cast<std::size_t>(h)], z2[static_cast<std::size_t>(h)], variant, h);
      avg += c.values;
      r.costs[static_cast<std::size_t>(h)] = std::move(c);
    }
    avg /= static_cast<double>(group.size());
    Assignment a = solve_assignment(avg);

    BlockPermutation step = BlockPermutation::identity(spec);
    for (int h : group) step.perms[static_cast<std::size_t>(h)] = a.perm;
    r.aligned = apply_permutation(r.aligned, step);
    r.perm = compose(r.perm, step);
    for (int h : group) {
      const Matrix& cv = r.costs[static_cast<std::size_t>(h)].values;
      double total = 0.0;
      for (std::size_t i = 0; i < a.perm.size(); ++i) total += cv(static_cast<Eigen::Index>(i), a.perm[i]);
      r.cost_per_layer[static_cast<std::size_t>(h)] = total;
    }
  }
  return r;
}

std::vector<double> correlation_signature(const Network& net1, const Network& net2, const Matrix& inputs) {
  check_pair(net1, net2);
  auto z1 = collect_activations(net1, inputs, CostVariant::corr_post);
  auto z2 = collect_activations(net2, inputs, CostVariant::corr_post);
  std::vector<double> sig;
  for (std::size_t h = 0; h < z1.size(); ++h) {
    double c = z1[h].cwiseProduct(z2[h]).rowwise().sum().mean();
    sig.push_back(std::clamp(c, -1.0, 1.0));
  }
  return sig;
}

std::vector<double> alignment_stability(const Network& net1, const Network& net2, const Matrix& inputs,
                                        CostVariant variant, bool residual_mode) {
  const Eigen::Index half = inputs.rows() / 2;
  if (half == 0) throw ConfigError("stability check needs at least two alignment samples");
  AlignResult a = align_networks(net1, net2, inputs.topRows(half), variant, residual_mode);
  AlignResult b = align_networks(net1, net2, inputs.bottomRows(inputs.rows() - half), variant, residual_mode);
  std::vector<double> agree;
  for (std::size_t h = 0; h < a.perm.perms.size(); ++h) {
    const auto& pa = a.perm.perms[h];
    const auto& pb = b.perm.perms[h];
    std::size_t same = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) same += pa[i] == pb[i];
    agree.push_back(static_cast<double>(same) / static_cast<double>(pa.size()));
  }
  return agree;
}

}  // namespace modecon
