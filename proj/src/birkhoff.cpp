#include "modecon/birkhoff.hpp"

#include "modecon/assignment.hpp"
#include "modecon/error.hpp"

#include <algorithm>
#include <random>

namespace modecon {

Matrix project_birkhoff(const Matrix& x, int iters) {
  if (x.rows() != x.cols()) throw DimensionError("Birkhoff projection needs a square matrix");
  if (!x.allFinite()) throw NumericalError("Birkhoff projection of a matrix with non-finite entries");
  if (iters < 0) throw ConfigError("projection iterations must be nonnegative");
  const auto n = static_cast<double>(x.rows());
  if (x.rows() == 0) return x;
  Matrix y = x;
  for (int it = 0; it < iters; ++it) {
    y = y.cwiseMax(0.0);
    Vector r = Vector::Ones(y.rows()) - y.rowwise().sum();
    Vector c = Vector::Ones(y.cols()) - y.colwise().sum().transpose();
    double delta = n - y.sum();
    y += (r / n) * Vector::Ones(y.cols()).transpose();
    y += Vector::Ones(y.rows()) * (c / n).transpose();
    y.array() -= delta / (n * n);
  }
  return y;
}

std::vector<Matrix> project_birkhoff(const std::vector<Matrix>& mats, int iters) {
  std::vector<Matrix> out;
  out.reserve(mats.size());
  for (const auto& m : mats) out.push_back(project_birkhoff(m, iters));
  return out;
}

double stochasticity_residual(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  double r = (x.rowwise().sum().array() - 1.0).abs().maxCoeff();
  return std::max(r, (x.colwise().sum().array() - 1.0).abs().maxCoeff());
}

std::vector<double> BvnDecomposition::probabilities() const {
  std::vector<double> p;
  double total = 0.0;
  for (const auto& t : terms) total += t.alpha;
  for (const auto& t : terms) p.push_back(t.alpha / total);
  return p;
}

Matrix BvnDecomposition::reconstruct(int n) const {
  Matrix m = Matrix::Zero(n, n);
  for (const auto& t : terms)
    for (int i = 0; i < n; ++i) m(i, t.perm[static_cast<std::size_t>(i)]) += t.alpha;
  return m;
}

namespace {

constexpr double kZero = 1e-12;

// Largest threshold tau such that {d >= tau} still holds a perfect matching.
double bottleneck_threshold(const Matrix& d) {
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.data()[i] > kZero) vals.push_back(d.data()[i]);
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  const auto n = d.rows();
  auto feasible = [&](double tau) {
    Matrix c = (d.array() >= tau).select(Matrix::Zero(n, n), Matrix::Ones(n, n));
    return solve_assignment(c).total_cost == 0.0;
  };
  std::size_t lo = 0, hi = vals.size();
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    if (feasible(vals[mid])) lo = mid;
    else hi = mid;
  }
  return vals.empty() ? 0.0 : vals[lo];
}

}  // namespace

BvnDecomposition bvn_decompose(const Matrix& d, int truncate, BvnRule rule) {
  if (d.rows() != d.cols()) throw DimensionError("BvN decomposition needs a square matrix");
  if (!d.allFinite()) throw NumericalError("BvN decomposition of a matrix with non-finite entries");
  const Eigen::Index n = d.rows();
  BvnDecomposition out;
  if (n == 0) return out;
  if (d.minCoeff() < -1e-8) throw NumericalError("BvN decomposition of a matrix with negative entries");

  Matrix res = d.cwiseMax(0.0);
  std::vector<BvnTerm> terms;
  double mass = 0.0;
  const double big = static_cast<double>(n) + 1.0;
  for (Eigen::Index step = 0; step < n * n + 1; ++step) {
    if (res.maxCoeff() <= kZero || mass >= 1.0 - kZero) break;
    Matrix cost(n, n);
    double tau = rule == BvnRule::max_min_entry ? bottleneck_threshold(res) : kZero;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        cost(i, j) = (res(i, j) > kZero && res(i, j) >= tau) ? -res(i, j) : big;
    Assignment a = solve_assignment(cost);
    double alpha = std::numeric_limits<double>::infinity();
    bool supported = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = res(i, a.perm[static_cast<std::size_t>(i)]);
      if (v <= kZero) supported = false;
      alpha = std::min(alpha, v);
    }
    if (!supported) break;
    alpha = std::min(alpha, 1.0 - mass);
    for (Eigen::Index i = 0; i < n; ++i) {
      double& v = res(i, a.perm[static_cast<std::size_t>(i)]);
      v -= alpha;
      if (v < -1e-8) throw NumericalError("BvN residual became negative");
      if (v < 0.0) v = 0.0;
    }
    mass += alpha;
    terms.push_back({alpha, std::move(a.perm)});
  }
  if (terms.empty()) throw NumericalError("BvN decomposition found no permutation in the support");
  std::size_t keep = truncate > 0 ? std::min(terms.size(), static_cast<std::size_t>(truncate)) : terms.size();
  terms.resize(keep);
  out.terms = std::move(terms);
  out.truncated_at = static_cast<int>(keep);
  for (const auto& t : out.terms) out.kept_mass += t.alpha;
  return out;
}

std::vector<BlockPermutation> sample_permutations(const std::vector<BvnDecomposition>& layers, int m,
                                                  std::uint64_t seed) {
  if (m < 0) throw ConfigError("sample count must be nonnegative");
  for (const auto& l : layers)
    if (l.terms.empty()) throw ConfigError("cannot sample from an empty decomposition");
  Rng rng(seed);
  std::vector<std::discrete_distribution<int>> dists;
  for (const auto& l : layers) {
    auto p = l.probabilities();
    dists.emplace_back(p.begin(), p.end());
  }
  std::vector<BlockPermutation> out(static_cast<std::size_t>(m));
  for (auto& bp : out)
    for (std::size_t h = 0; h < layers.size(); ++h)
      bp.perms.push_back(layers[h].terms[static_cast<std::size_t>(dists[h](rng.engine()))].perm);
  return out;
}

}  // namespace modecon
