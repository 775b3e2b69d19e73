#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "modecon/dataset.hpp"
#include "modecon/error.hpp"
#include "modecon/nn.hpp"
#include "modecon/permutation.hpp"
#include "modecon/rng.hpp"
#include "modecon/spectral.hpp"
#include "modecon/train.hpp"

#include <cmath>

using namespace modecon;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

std::vector<int> random_labels(Rng& rng, int n, int k) {
  std::vector<int> y;
  for (int i = 0; i < n; ++i) y.push_back(rng.uniform_int(0, k - 1));
  return y;
}

}  // namespace

TEST_CASE("identity network is the identity map") {
  NetworkSpec spec = make_spec(3, {3, 3}, 3, ActivationSpec{Activation::identity, 1.0});
  Network net{spec, Params::zeros_like(spec)};
  for (auto& w : net.params.weights) w = Matrix::Identity(3, 3);
  Rng rng(1);
  Matrix x = random_matrix(rng, 5, 3);
  CHECK((forward(net, x).logits - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one hidden ReLU layer by hand") {
  NetworkSpec spec = make_spec(1, {2}, 1);
  Network net{spec, Params::zeros_like(spec)};
  net.params.weights[0] << 1, -1;
  net.params.weights[1] << 1, 1;
  Matrix x(1, 1);
  x << 2;
  auto pre = forward(net, x, Capture::pre_activations);
  auto post = forward(net, x, Capture::post_activations);
  CHECK(pre.captured[0](0, 0) == 2.0);
  CHECK(pre.captured[0](0, 1) == -2.0);
  CHECK(post.captured[0](0, 0) == 2.0);
  CHECK(post.captured[0](0, 1) == 0.0);
  CHECK(pre.logits(0, 0) == 2.0);
  Vector xv(1);
  xv << 2;
  CHECK(oracle::scalar_forward(net, xv)(0) == 2.0);
}

TEST_CASE("forward agrees with the scalar evaluator, residual nets included") {
  Rng rng(2);
  for (auto period : {std::optional<int>{}, std::optional<int>{1}, std::optional<int>{2}}) {
    NetworkSpec spec = make_spec(4, {5, 5, 5, 5}, 3, ActivationSpec{Activation::tanh, 1.0}, true, period);
    Network net = init_network(spec, rng.next());
    Matrix x = random_matrix(rng, 7, 4);
    Matrix logits = forward(net, x).logits;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      CHECK((logits.row(i).transpose() - oracle::scalar_forward(net, x.row(i).transpose())).cwiseAbs().maxCoeff() <
            1e-12);
  }
}

TEST_CASE("huberized ReLU branches") {
  ActivationSpec h{Activation::huberized_relu, 1.0};
  CHECK(h.apply(0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(h.apply(-1.0) == 0.0);
  CHECK(h.apply(3.0) == doctest::Approx(2.5));
  // Derivative is continuous at t = delta: finite differences on both sides agree with 1.
  double e = 1e-7;
  CHECK((h.apply(1.0) - h.apply(1.0 - e)) / e == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((h.apply(1.0 + e) - h.apply(1.0)) / e == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(h.derivative(1.0) == 1.0);
}

TEST_CASE("cross-entropy closed forms") {
  Matrix logits(1, 2);
  logits << 1, 0;
  std::vector<int> y{0};
  CHECK(loss(logits, y, LossKind::cross_entropy) == doctest::Approx(std::log(1 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(loss(logits, y, LossKind::cross_entropy) == doctest::Approx(0.3133).epsilon(1e-4));
  Matrix uniform = Matrix::Constant(4, 5, 0.7);
  std::vector<int> y4{0, 1, 2, 4};
  CHECK(loss(uniform, y4, LossKind::cross_entropy) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  double prev = INFINITY;
  for (double mag : {1.0, 2.0, 5.0, 10.0, 30.0}) {
    Matrix l = Matrix::Zero(1, 3);
    l(0, 1) = mag;
    std::vector<int> y1{1};
    double v = loss(l, y1, LossKind::cross_entropy);
    CHECK(v < prev);
    CHECK(v >= 0.0);
    prev = v;
  }
  CHECK(prev < 1e-12);
  CHECK_THROWS_AS(loss(logits, std::vector<int>{2}, LossKind::cross_entropy), DimensionError);
}

TEST_CASE("gradient matches central differences") {
  Rng rng(3);
  const std::vector<ActivationSpec> acts{{Activation::tanh, 1.0}, {Activation::huberized_relu, 0.7},
                                         {Activation::identity, 1.0}, {Activation::relu, 1.0}};
  int cases = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const auto& act = acts[static_cast<std::size_t>(trial) % acts.size()];
    auto kind = trial % 2 == 0 ? LossKind::cross_entropy : LossKind::mse;
    std::optional<int> period = trial % 5 == 0 ? std::optional<int>(1) : std::nullopt;
    NetworkSpec spec = make_spec(3, {4, 4, 4}, 3, act, trial % 7 != 0, period);
    Network net = init_network(spec, rng.next());
    Matrix x = random_matrix(rng, 6, 3);
    auto y = random_labels(rng, 6, 3);
    BackwardResult g = backward(net, x, y, kind);
    Params fd = oracle::finite_difference(
        [&](const Params& p) { return loss(forward(Network{spec, p}, x).logits, y, kind); }, net.params);
    CHECK(oracle::relative_error(g.grads, fd) < 1e-4);
    ++cases;
  }
  CHECK(cases >= 100);
}

TEST_CASE("input gradient matches central differences") {
  Rng rng(4);
  NetworkSpec spec = make_spec(3, {6, 6}, 2, ActivationSpec{Activation::tanh, 1.0});
  Network net = init_network(spec, 9);
  Matrix x = random_matrix(rng, 4, 3);
  std::vector<int> y{0, 1, 1, 0};
  BackwardResult g = backward(net, x, y, LossKind::cross_entropy);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += 1e-6;
    xm.data()[i] -= 1e-6;
    double fd = (loss(forward(net, xp).logits, y, LossKind::cross_entropy) -
                 loss(forward(net, xm).logits, y, LossKind::cross_entropy)) / 2e-6;
    CHECK(g.input_grad.data()[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("zero gradient when the network already matches its targets") {
  NetworkSpec spec = make_spec(3, {3}, 3, ActivationSpec{Activation::identity, 1.0});
  Network net = init_network(spec, 5);
  Rng rng(5);
  Matrix x = random_matrix(rng, 8, 3);
  Matrix targets = forward(net, x).logits;
  BackwardResult g = backward(net, x, targets);
  CHECK(g.loss == 0.0);
  CHECK(g.grads.norm() == 0.0);
}

TEST_CASE("block permutations leave the function unchanged") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::optional<int> period = trial % 3 == 0 ? std::optional<int>(2) : std::nullopt;
    NetworkSpec spec = make_spec(4, {8, 8, 8, 8, 8}, 3, ActivationSpec{Activation::relu, 1.0}, true, period);
    Network net = init_network(spec, rng.next());
    BlockPermutation p = BlockPermutation::random(spec, rng);
    Matrix x = random_matrix(rng, 16, 4);
    double dev = (forward(net, x).logits - forward(apply_permutation(net, p), x).logits).cwiseAbs().maxCoeff();
    CHECK(dev < 1e-9);
  }
}

TEST_CASE("spectral norm") {
  CHECK(spectral_norm(Matrix::Identity(6, 6)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  CHECK(spectral_norm(d) == doctest::Approx(3.0).epsilon(1e-12));
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_matrix(rng, 5, 4);
    double s = spectral_norm(a, 1e-12);
    CHECK(std::abs(s - oracle::jacobi_singular_values(a).front()) < 1e-8);
  }
  CHECK_THROWS_AS(spectral_norm(Matrix(0, 0)), DimensionError);
  // Two nearly equal top singular values and a one-iteration budget cannot converge.
  Matrix hard = Matrix::Zero(3, 3);
  hard(0, 0) = 1.0;
  hard(1, 1) = 0.999999;
  hard(2, 2) = 0.5;
  CHECK_THROWS_AS(spectral_norm(hard, 1e-14, 1), NumericalError);
}

TEST_CASE("training") {
  SUBCASE("zero epochs returns the input network") {
    Dataset d = make_blobs(100, 2, 0.3, 1);
    assign_splits(d, 0.2, 0.2);
    Network net = init_network(make_spec(2, {16}, 2), 3);
    SgdConfig cfg;
    cfg.epochs = 0;
    TrainResult r = train_sgd(net, d, cfg);
    CHECK((r.net.params - net.params).norm() == 0.0);
  }
  SUBCASE("separable blobs reach 0.99 train accuracy") {
    Dataset d = make_blobs(400, 2, 0.5, 11);
    assign_splits(d, 0.0, 0.2);
    // The problem is linearly separable: a logistic-regression oracle gets >= 0.99.
    REQUIRE(oracle::logistic_regression_accuracy(d.features, d.labels) >= 0.99);
    Network net = init_network(make_spec(2, {16}, 2), 3);
    SgdConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    TrainResult r = train_sgd(net, d, cfg);
    CHECK(accuracy(forward(r.net, d.features).logits, d.labels) >= 0.99);
  }
  SUBCASE("same seed gives bitwise-identical weights") {
    Dataset d = make_spirals(300, 3, 0.05, 2);
    assign_splits(d, 0.2, 0.2);
    Network net = init_network(make_spec(2, {16, 16}, 3), 4);
    SgdConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 99;
    TrainResult a = train_sgd(net, d, cfg), b = train_sgd(net, d, cfg);
    for (std::size_t k = 0; k < a.net.params.weights.size(); ++k)
      CHECK(a.net.params.weights[k] == b.net.params.weights[k]);
  }
  SUBCASE("a small step decreases the regularized batch objective") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      NetworkSpec spec = make_spec(3, {8, 8}, 3, ActivationSpec{Activation::tanh, 1.0});
      Network net = init_network(spec, rng.next());
      Matrix x = random_matrix(rng, 32, 3);
      auto y = random_labels(rng, 32, 3);
      SgdConfig cfg;
      cfg.lr = 1e-4;
      cfg.epochs = 1;
      cfg.batch_size = 32;
      cfg.weight_decay = 5e-4;
      double before = regularized_objective(net, x, y, cfg.loss, cfg.weight_decay);
      TrainResult r = train_sgd(net, x, y, cfg);
      CHECK(regularized_objective(r.net, x, y, cfg.loss, cfg.weight_decay) < before);
    }
  }
  SUBCASE("spectral-norm constraint holds after every step") {
    Dataset d = make_moons(200, 0.1, 5);
    assign_splits(d, 0.0, 0.2);
    Network net = init_network(make_spec(2, {16, 16}, 2), 6);
    for (int epochs = 1; epochs <= 3; ++epochs) {
      SgdConfig cfg;
      cfg.epochs = epochs;
      cfg.max_weight_spectral_norm = 1.5;
      TrainResult r = train_sgd(net, d, cfg);
      for (const auto& w : r.net.params.weights) CHECK(spectral_norm(w) <= 1.5 + 1e-8);
    }
    SgdConfig one;
    one.epochs = 1;
    one.batch_size = 1000;
    one.max_weight_spectral_norm = 0.9;
    TrainResult r = train_sgd(net, d, one);
    for (const auto& w : r.net.params.weights) CHECK(spectral_norm(w) <= 0.9 + 1e-8);
  }
  SUBCASE("divergence carries the last finite state") {
    Dataset d = make_blobs(64, 2, 0.5, 3);
    assign_splits(d, 0.0, 0.2);
    d.features *= 1e150;
    Network net = init_network(make_spec(2, {8}, 2), 1);
    SgdConfig cfg;
    cfg.lr = 1e10;
    cfg.epochs = 3;
    try {
      train_sgd(net, d, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.last_finite.params.all_finite());
    }
  }
}
