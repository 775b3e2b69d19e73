#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "modecon/curve.hpp"
#include "modecon/dataset.hpp"
#include "modecon/error.hpp"
#include "modecon/pgd.hpp"
#include "modecon/robust.hpp"
#include "modecon/rng.hpp"
#include "modecon/train.hpp"

#include <cmath>

using namespace modecon;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix sign(const Matrix& m) {
  return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Dataset separable_blobs(std::uint64_t seed) {
  Dataset d = make_blobs(400, 2, 0.25, seed);
  assign_splits(d, 0.25, 0.2);
  return d;
}

// Smallest distance between points of different classes.
double class_gap(const Dataset& d) {
  double gap = INFINITY;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d.labels[i] != d.labels[j])
        gap = std::min(gap, (d.features.row(static_cast<Eigen::Index>(i)) - d.features.row(static_cast<Eigen::Index>(j))).norm());
  return gap;
}

}  // namespace

TEST_CASE("zero budget is the identity") {
  Network net = init_network(make_spec(2, {8}, 3), 1);
  Rng rng(1);
  Matrix x = random_matrix(rng, 10, 2);
  std::vector<int> y(10, 1);
  PGDConfig cfg;
  cfg.epsilon = 0.0;
  CHECK(pgd_attack(net, x, y, cfg, rng) == x);
}

TEST_CASE("one step without random start is FGSM") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Network net = init_network(make_spec(3, {8}, 3), rng.next());
    Matrix x = Matrix::NullaryExpr(12, 3, [&] { return rng.uniform(-0.9, 0.9); });
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) y.push_back(i % 3);
    PGDConfig cfg;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.3;
    cfg.n_steps = 1;
    cfg.random_start = false;
    cfg.clip_range = std::make_pair(-1.0, 1.0);
    Matrix expect = (x + 0.3 * sign(backward(net, x, y, LossKind::cross_entropy).input_grad)).cwiseMax(-1.0).cwiseMin(1.0);
    Matrix got = pgd_attack(net, x, y, cfg, rng);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("linear binary classifier reaches the analytic worst case") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkSpec spec = make_spec(4, {}, 2, ActivationSpec{Activation::identity, 1.0});
    Network net = init_network(spec, rng.next());
    Matrix x = random_matrix(rng, 20, 4);
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) y.push_back(rng.uniform_int(0, 1));
    const double eps = 0.2;
    Matrix worst = x;
    const Matrix& w = net.params.weights[0];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      int yi = y[static_cast<std::size_t>(i)];
      Eigen::RowVectorXd dir = w.row(1 - yi) - w.row(yi);
      worst.row(i) += eps * sign(dir);
    }
    PGDConfig cfg;
    cfg.epsilon = eps;
    cfg.step_size = eps / 4;
    cfg.random_start = false;
    Matrix adv = pgd_attack(net, x, y, cfg, rng);
    double got = loss(forward(net, adv).logits, y, LossKind::cross_entropy);
    double expect = loss(forward(net, worst).logits, y, LossKind::cross_entropy);
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("attack validity, loss increase and budget monotonicity") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Dataset d = make_moons(300, 0.1, seed);
    assign_splits(d, 0.2, 0.2);
    SgdConfig sgd;
    sgd.epochs = 20;
    sgd.seed = seed;
    Network net = train_sgd(init_network(make_spec(2, {16, 16}, 2), seed), d, sgd).net;
    Dataset val = d.subset(Split::validation);
    PGDConfig base = default_pgd(d, 0.1);
    double prev_acc = 2.0;
    for (double f : {0.0, 0.5, 1.0, 2.0}) {
      PGDConfig cfg = base;
      cfg.epsilon = f * base.epsilon;
      Rng rng(seed);
      Matrix adv = pgd_attack(net, val.features, val.labels, cfg, rng);
      AttackCheck c = check_attack(val.features, adv, cfg);
      CHECK(c.linf <= cfg.epsilon + 1e-12);
      CHECK(c.box_violation == 0.0);
      double acc = accuracy(forward(net, adv).logits, val.labels);
      CHECK(acc <= prev_acc);
      prev_acc = acc;
    }
    PGDConfig det = base;
    det.random_start = false;
    Rng rng(seed);
    Matrix adv = pgd_attack(net, val.features, val.labels, det, rng);
    double clean = loss(forward(net, val.features).logits, val.labels, LossKind::cross_entropy);
    CHECK(loss(forward(net, adv).logits, val.labels, LossKind::cross_entropy) >= clean - 1e-9);
  }
}

TEST_CASE("config validation") {
  PGDConfig cfg;
  cfg.epsilon = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epsilon = 0.1;
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.step_size = 0.1;
  cfg.n_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adversarial training") {
  SUBCASE("zero budget reproduces plain SGD") {
    Dataset d = separable_blobs(1);
    SgdConfig sgd;
    sgd.epochs = 5;
    sgd.seed = 4;
    Network init = init_network(make_spec(2, {16}, 2), 2);
    PGDConfig none;
    none.epsilon = 0.0;
    Dataset train = d.subset(Split::train);
    Network plain = train_sgd(init, train.features, train.labels, sgd).net;
    Network adv = adversarial_train(init, train.features, train.labels, sgd, none, 9).net;
    for (std::size_t k = 0; k < plain.params.weights.size(); ++k) CHECK(plain.params.weights[k] == adv.params.weights[k]);
  }
  SUBCASE("robust training raises robust accuracy on separable blobs") {
    int wins = 0, losses = 0;
    double clean_drop = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Dataset d = separable_blobs(100 + seed);
      Dataset train = d.subset(Split::train), val = d.subset(Split::validation);
      PGDConfig attack = default_pgd(d);
      // L-inf radius with the L2 class gap above 2 sqrt(2) eps, so a robust separator exists.
      attack.epsilon = 0.95 * class_gap(d) / (2.0 * std::sqrt(2.0));
      attack.step_size = attack.epsilon / 4.0;
      SgdConfig sgd;
      sgd.epochs = 5;
      sgd.seed = seed;
      Network init = init_network(make_spec(2, {16}, 2), derive_seed(seed, "init"));
      Network plain = train_sgd(init, train.features, train.labels, sgd).net;
      Network robust = adversarial_train(init, train.features, train.labels, sgd, attack, seed).net;
      double rp = robust_evaluate(plain, d.features, d.labels, attack, 5).accuracy;
      double rr = robust_evaluate(robust, d.features, d.labels, attack, 5).accuracy;
      wins += rr > rp;
      losses += rr < rp;
      clean_drop += accuracy(forward(plain, val.features).logits, val.labels) -
                    accuracy(forward(robust, val.features).logits, val.labels);
    }
    MESSAGE("robust wins " << wins << ", losses " << losses << ", mean clean accuracy drop " << clean_drop / 10);
    CHECK(wins > losses);
    CHECK(oracle::sign_test_p(wins, losses) < 0.05);
  }
}

TEST_CASE("robust curve report") {
  Dataset d = make_moons(200, 0.1, 7);
  assign_splits(d, 0.2, 0.2);
  NetworkSpec spec = make_spec(2, {12}, 2);
  BezierCurve c = init_linear(init_network(spec, 1), init_network(spec, 2));
  Dataset val = d.subset(Split::validation);
  auto grid = uniform_grid(5);

  PGDConfig none;
  none.epsilon = 0.0;
  RobustCurveReport r0 = robust_curve_report(c, val.features, val.labels, grid, none, 3);
  CHECK(r0.robust.loss == r0.clean.loss);
  CHECK(r0.robust.accuracy == r0.clean.accuracy);

  PGDConfig attack = default_pgd(d, 0.1);
  RobustCurveReport r = robust_curve_report(c, val.features, val.labels, grid, attack, 3);
  CHECK(r.worst_check.linf <= attack.epsilon + 1e-12);
  CHECK(r.worst_check.box_violation == 0.0);
  CHECK(r.robust.accuracy.front() ==
        robust_evaluate(c.theta1, val.features, val.labels, attack, derive_seed(3, "eval", 0)).accuracy);
  CHECK(r.robust.accuracy.back() ==
        robust_evaluate(c.theta2, val.features, val.labels, attack, derive_seed(3, "eval", grid.size() - 1)).accuracy);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(r.robust.loss[i] >= r.clean.loss[i] - 1e-9);
}
