#include "modecon/permutation.hpp"

#include "modecon/error.hpp"

#include <numeric>

namespace modecon {

bool is_permutation(const std::vector<int>& p) {
  std::vector<char> seen(p.size(), 0);
  for (int v : p) {
    if (v < 0 || static_cast<std::size_t>(v) >= p.size() || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  return true;
}

BlockPermutation BlockPermutation::identity(const NetworkSpec& spec) {
  BlockPermutation p;
  for (int h = 0; h < spec.num_hidden(); ++h) {
    std::vector<int> id(static_cast<std::size_t>(spec.hidden_width(h)));
    std::iota(id.begin(), id.end(), 0);
    p.perms.push_back(std::move(id));
  }
  return p;
}

BlockPermutation BlockPermutation::random(const NetworkSpec& spec, Rng& rng) {
  BlockPermutation p = identity(spec);
  for (const auto& group : spec.tied_groups()) {
    std::vector<int> r = rng.permutation(spec.hidden_width(group.front()));
    for (int h : group) p.perms[static_cast<std::size_t>(h)] = r;
  }
  return p;
}

void BlockPermutation::validate(const NetworkSpec& spec) const {
  if (static_cast<int>(perms.size()) != spec.num_hidden())
    throw DimensionError("permutation has " + std::to_string(perms.size()) + " layers, network has " +
                         std::to_string(spec.num_hidden()) + " hidden layers");
  for (int h = 0; h < spec.num_hidden(); ++h) {
    const auto& p = perms[static_cast<std::size_t>(h)];
    if (static_cast<int>(p.size()) != spec.hidden_width(h))
      throw DimensionError("permutation for hidden layer " + std::to_string(h + 1) + " has wrong length");
    if (!is_permutation(p))
      throw DimensionError("permutation for hidden layer " + std::to_string(h + 1) + " is not a bijection");
  }
  for (const auto& group : spec.tied_groups())
    for (int h : group)
      if (perms[static_cast<std::size_t>(h)] != perms[static_cast<std::size_t>(group.front())])
        throw DimensionError("skip-connected hidden layers " + std::to_string(group.front() + 1) + " and " +
                             std::to_string(h + 1) + " need the same permutation");
}

bool BlockPermutation::is_identity() const {
  for (const auto& p : perms)
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] != static_cast<int>(i)) return false;
  return true;
}

Matrix BlockPermutation::matrix(int h) const {
  const auto& p = perms.at(static_cast<std::size_t>(h));
  const auto n = static_cast<Eigen::Index>(p.size());
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, p[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

BlockPermutation compose(const BlockPermutation& a, const BlockPermutation& b) {
  if (a.perms.size() != b.perms.size()) throw DimensionError("composing permutations of different depth");
  BlockPermutation c;
  for (std::size_t h = 0; h < a.perms.size(); ++h) {
    const auto& pa = a.perms[h];
    const auto& pb = b.perms[h];
    if (pa.size() != pb.size()) throw DimensionError("composing permutations of different width");
    std::vector<int> pc(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) pc[i] = pa[static_cast<std::size_t>(pb[i])];
    c.perms.push_back(std::move(pc));
  }
  return c;
}

BlockPermutation inverse(const BlockPermutation& p) {
  BlockPermutation inv = p;
  for (std::size_t h = 0; h < p.perms.size(); ++h)
    for (std::size_t i = 0; i < p.perms[h].size(); ++i)
      inv.perms[h][static_cast<std::size_t>(p.perms[h][i])] = static_cast<int>(i);
  return inv;
}

Params apply_permutation(const NetworkSpec& spec, const Params& params, const BlockPermutation& p) {
  p.validate(spec);
  Params out = params;
  const int depth = spec.depth();
  for (int k = 0; k < depth; ++k) {
    const std::vector<int>* rows = k < depth - 1 ? &p.perms[static_cast<std::size_t>(k)] : nullptr;
    const std::vector<int>* cols = k > 0 ? &p.perms[static_cast<std::size_t>(k) - 1] : nullptr;
    const Matrix& w = params.weights[static_cast<std::size_t>(k)];
    Matrix& wo = out.weights[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      Eigen::Index si = rows ? (*rows)[static_cast<std::size_t>(i)] : i;
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        Eigen::Index sj = cols ? (*cols)[static_cast<std::size_t>(j)] : j;
        wo(i, j) = w(si, sj);
      }
    }
    if (spec.has_bias && rows) {
      const Vector& b = params.biases[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < b.size(); ++i)
        out.biases[static_cast<std::size_t>(k)](i) = b((*rows)[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

Network apply_permutation(const Network& net, const BlockPermutation& p) {
  return Network{net.spec, apply_permutation(net.spec, net.params, p)};
}

Params apply_relaxed(const NetworkSpec& spec, const Params& params, const std::vector<Matrix>& d) {
  if (spec.residual_period) throw UnsupportedError("relaxed permutations are not defined for residual networks");
  if (static_cast<int>(d.size()) != spec.num_hidden())
    throw DimensionError("need one relaxed matrix per hidden layer");
  for (int h = 0; h < spec.num_hidden(); ++h) {
    const auto& m = d[static_cast<std::size_t>(h)];
    if (m.rows() != spec.hidden_width(h) || m.cols() != spec.hidden_width(h))
      throw DimensionError("relaxed matrix for hidden layer " + std::to_string(h + 1) + " has wrong shape");
  }
  Params out = params;
  const int depth = spec.depth();
  for (int k = 0; k < depth; ++k) {
    Matrix w = params.weights[static_cast<std::size_t>(k)];
    if (k < depth - 1) w = d[static_cast<std::size_t>(k)] * w;
    if (k > 0) w = w * d[static_cast<std::size_t>(k) - 1].transpose();
    out.weights[static_cast<std::size_t>(k)] = std::move(w);
    if (spec.has_bias && k < depth - 1)
      out.biases[static_cast<std::size_t>(k)] = d[static_cast<std::size_t>(k)] * params.biases[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace modecon
