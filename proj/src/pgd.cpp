#include "modecon/pgd.hpp"

#include "modecon/error.hpp"

#include <algorithm>
#include <cmath>

namespace modecon {

void PGDConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("pgd epsilon must be nonnegative");
  if (!(step_size > 0.0)) throw ConfigError("pgd step_size must be positive");
  if (n_steps < 1) throw ConfigError("pgd n_steps must be at least 1");
  if (clip_range && !(clip_range->first <= clip_range->second)) throw ConfigError("pgd clip_range is empty");
}

namespace {

void project(Matrix& adv, const Matrix& x, const PGDConfig& cfg) {
  adv = adv.array().max(x.array() - cfg.epsilon).min(x.array() + cfg.epsilon).matrix();
  if (cfg.clip_range) adv = adv.cwiseMax(cfg.clip_range->first).cwiseMin(cfg.clip_range->second);
  // x +- eps can round to a point whose computed distance from x exceeds eps.
  for (Eigen::Index i = 0; i < adv.size(); ++i) {
    double& a = adv.data()[i];
    const double xi = x.data()[i];
    while (std::abs(a - xi) > cfg.epsilon) a = std::nextafter(a, xi);
  }
}

}  // namespace

Matrix pgd_attack(const Network& net, const Matrix& inputs, std::span<const int> labels, const PGDConfig& cfg,
                  Rng& rng) {
  cfg.validate();
  Matrix adv = inputs;
  if (cfg.epsilon == 0.0) return adv;
  if (cfg.random_start) {
    for (Eigen::Index j = 0; j < adv.cols(); ++j)
      for (Eigen::Index i = 0; i < adv.rows(); ++i) adv(i, j) += rng.uniform(-cfg.epsilon, cfg.epsilon);
  }
  project(adv, inputs, cfg);
  for (int s = 0; s < cfg.n_steps; ++s) {
    BackwardResult g = backward(net, adv, labels, cfg.loss);
    if (!g.input_grad.allFinite()) throw NumericalError("non-finite input gradient during PGD");
    adv += cfg.step_size * g.input_grad.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    project(adv, inputs, cfg);
  }
  return adv;
}

AttackCheck check_attack(const Matrix& inputs, const Matrix& adversarial, const PGDConfig& cfg) {
  AttackCheck c;
  if (inputs.size() == 0) return c;
  c.linf = (adversarial - inputs).cwiseAbs().maxCoeff();
  if (cfg.clip_range) {
    double lo = cfg.clip_range->first, hi = cfg.clip_range->second;
    c.box_violation = std::max({0.0, lo - adversarial.minCoeff(), adversarial.maxCoeff() - hi});
  }
  return c;
}

}  // namespace modecon
