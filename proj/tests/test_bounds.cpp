#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "modecon/alignment.hpp"
#include "modecon/bounds.hpp"
#include "modecon/curve.hpp"
#include "modecon/dataset.hpp"
#include "modecon/error.hpp"
#include "modecon/rng.hpp"
#include "modecon/train.hpp"

#include <cmath>

using namespace modecon;

namespace {

struct Pair {
  Dataset data;
  Network a, b;
};

Pair trained_pair(std::uint64_t seed) {
  Dataset d = make_spirals(400, 3, 0.1, seed);
  assign_splits(d, 0.2, 0.2);
  NetworkSpec spec = make_spec(2, {12, 12}, 3);
  SgdConfig cfg;
  cfg.epochs = 15;
  cfg.seed = seed;
  Network a = train_sgd(init_network(spec, derive_seed(seed, "init", 1)), d, cfg).net;
  Network b = train_sgd(init_network(spec, derive_seed(seed, "init", 2)), d, cfg).net;
  return {d.subset(Split::train), a, b};
}

}  // namespace

TEST_CASE("degenerate pair: no distance, constant bound") {
  Network a = init_network(make_spec(2, {6, 6}, 3), 1);
  Rng rng(1);
  Matrix x(30, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) y.push_back(i % 3);
  auto grid = uniform_grid(11);
  BoundReport r = compute_bounds(a, a, BlockPermutation::identity(a.spec), x, y, grid);
  for (double b : r.unaligned.base) CHECK(b == 0.0);
  for (const auto& layer : r.unaligned.to0)
    for (double v : layer) CHECK(v == 0.0);
  for (double b : r.unaligned.bound_t)
    CHECK(b == doctest::Approx(r.constants.loss_offset + std::sqrt(2.0) * r.constants.epsilon));
  CHECK(r.constants.l_loss == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.valid());
}

TEST_CASE("no hidden layers: only the endpoint term remains") {
  NetworkSpec spec = make_spec(3, {}, 2, ActivationSpec{Activation::identity, 1.0});
  Network a = init_network(spec, 1), b = init_network(spec, 2);
  Rng rng(2);
  Matrix x(20, 3), targets(20, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = rng.normal();
  auto grid = uniform_grid(11);
  BoundReport r = compute_bounds(a, b, BlockPermutation::identity(spec), x, targets, grid);
  CHECK(r.unaligned.base.empty());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double t = grid[i];
    CHECK(r.unaligned.bound_sharp_t[i] ==
          doctest::Approx((1 - t) * r.constants.epsilon1 + t * r.constants.epsilon2));
  }
  CHECK(r.valid());
}

TEST_CASE("recursion distances") {
  BoundConstants c;
  c.l_sigma = 1.0;
  c.l_loss = 1.0;
  c.epsilon = c.epsilon1 = c.epsilon2 = 0.5;
  std::vector<double> base{1.0, 2.0}, s1{2.0, 3.0, 1.5}, s2{1.0, 0.5, 2.0};
  std::vector<double> grid{0.0, 0.25, 1.0};
  DistanceBounds d = distance_recursion(base, s1, s2, c, grid);
  // Hand-expanded at t = 0.25.
  double t = 0.25;
  double a0 = t * 1.0, a1 = (1 - t) * 1.0;
  double carried = (1 - t) * 3.0 * a0 + t * 0.5 * a1;
  double b0 = carried + t * 2.0, b1 = carried + (1 - t) * 2.0;
  CHECK(d.to0[0][1] == doctest::Approx(a0));
  CHECK(d.to1[1][1] == doctest::Approx(b1));
  CHECK(d.bound_t[1] == doctest::Approx((1 - t) * 1.5 * b0 + t * 2.0 * b1 + 0.5));
  // Endpoint distances vanish at their own endpoint.
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(d.to0[k][0] == 0.0);
    CHECK(d.to1[k][2] == 0.0);
  }
}

TEST_CASE("recursion is monotone in every base distance") {
  Rng rng(3);
  auto grid = uniform_grid(21);
  for (int trial = 0; trial < 20; ++trial) {
    BoundConstants c;
    c.l_loss = 1.0;
    c.epsilon = c.epsilon1 = c.epsilon2 = rng.uniform();
    std::vector<double> base, s1, s2;
    for (int k = 0; k < 3; ++k) base.push_back(rng.uniform());
    for (int k = 0; k < 4; ++k) {
      s1.push_back(rng.uniform(0.1, 2.0));
      s2.push_back(rng.uniform(0.1, 2.0));
    }
    DistanceBounds ref = distance_recursion(base, s1, s2, c, grid);
    for (std::size_t k = 0; k < base.size(); ++k) {
      auto bumped = base;
      bumped[k] += 0.1;
      DistanceBounds d = distance_recursion(bumped, s1, s2, c, grid);
      for (std::size_t l = 0; l < base.size(); ++l)
        for (std::size_t i = 0; i < grid.size(); ++i) {
          CHECK(d.to0[l][i] >= ref.to0[l][i]);
          CHECK(d.to1[l][i] >= ref.to1[l][i]);
        }
      for (std::size_t i = 0; i < grid.size(); ++i) CHECK(d.bound_t[i] >= ref.bound_t[i]);
      CHECK(d.bound >= ref.bound);
    }
  }
}

TEST_CASE("trained pairs: alignment tightens a valid bound") {
  auto grid = uniform_grid(21);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Pair p = trained_pair(seed);
    const Matrix& x = p.data.features;
    AlignResult al = align_networks(p.a, p.b, x, CostVariant::l2_pre);
    BoundReport r = compute_bounds(p.a, p.b, al.perm, x, p.data.labels, grid);
    CHECK_FALSE(r.heuristic);
    for (std::size_t k = 0; k < r.aligned.base.size(); ++k) CHECK(r.aligned.base[k] <= r.unaligned.base[k] + 1e-12);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(r.aligned.bound_t[i] <= r.unaligned.bound_t[i] + 1e-12);
    CHECK(r.b_a() <= r.b_u());
    CHECK(r.valid());
    for (const auto& layer : r.unaligned.to0)
      for (double v : layer) CHECK(v >= 0.0);

    // Quadrature: 11 versus 101 nodes.
    BoundReport coarse = compute_bounds(p.a, p.b, al.perm, x, p.data.labels, uniform_grid(11));
    BoundReport fine = compute_bounds(p.a, p.b, al.perm, x, p.data.labels, uniform_grid(101));
    CHECK(std::abs(coarse.b_u() - fine.b_u()) < 0.01 * fine.b_u());
    CHECK(std::abs(coarse.b_a() - fine.b_a()) < 0.01 * fine.b_a());

    AlignResult corr = align_networks(p.a, p.b, x, CostVariant::corr_post);
    CHECK(compute_bounds(p.a, p.b, corr.perm, x, p.data.labels, grid, BoundLoss::cross_entropy,
                         CostVariant::corr_post).heuristic);
  }
}

TEST_CASE("constructed instance is tight") {
  auto grid = uniform_grid(21);
  for (double scale : {1.0, 0.5, 2.0}) {
    TightInstance inst = make_tight_instance(scale);
    TightnessReport r = tightness_probe(inst.theta1, inst.theta2, inst.inputs, inst.targets, grid);
    CHECK(std::abs(r.loss_lipschitz) < 1e-6);
    CHECK(std::abs(r.activation_lipschitz) < 1e-6);
    CHECK(std::abs(r.matrix_norm) < 1e-6);
    CHECK(std::abs(r.triangle) < 1e-6);
    CHECK(std::abs(r.epsilon_triangle) < 1e-6);
    CHECK(std::abs(r.total) < 1e-6);
  }
}

TEST_CASE("a generic pair is not tight") {
  NetworkSpec spec = make_spec(3, {3}, 3);
  Network a = init_network(spec, 1), b = init_network(spec, 2);
  Rng rng(4);
  Matrix x(10, 3), y(10, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
  TightnessReport r = tightness_probe(a, b, x, y, uniform_grid(11));
  CHECK(r.total > 1e-3);
}

TEST_CASE("unsupported inputs") {
  NetworkSpec res = make_spec(2, {4, 4}, 2, {}, true, 1);
  Network a = init_network(res, 1);
  std::vector<int> y{0, 1};
  CHECK_THROWS_AS(compute_bounds(a, a, BlockPermutation::identity(res), Matrix::Zero(2, 2), y, uniform_grid(3)),
                  UnsupportedError);
  Network plain = init_network(make_spec(2, {4}, 2), 1);
  CHECK_THROWS_AS(compute_bounds(plain, plain, BlockPermutation::identity(plain.spec), Matrix(0, 2),
                                 std::vector<int>{}, uniform_grid(3)),
                  ConfigError);
}
