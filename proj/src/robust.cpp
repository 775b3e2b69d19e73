#include "modecon/robust.hpp"

#include "modecon/rng.hpp"

#include <algorithm>

namespace modecon {

PGDConfig default_pgd(const Dataset& data, double fraction) {
  PGDConfig c;
  c.epsilon = fraction * data.feature_range();
  c.step_size = c.epsilon > 0.0 ? c.epsilon / 4.0 : 1.0;
  c.n_steps = 10;
  c.random_start = true;
  if (data.features.size() > 0) c.clip_range = std::make_pair(data.features.minCoeff(), data.features.maxCoeff());
  return c;
}

TrainResult adversarial_train(Network net, const Matrix& inputs, std::span<const int> labels, const SgdConfig& sgd,
                              const PGDConfig& attack, std::uint64_t attack_seed) {
  attack.validate();
  Rng rng(attack_seed);
  auto perturb = [&](const Network& current, const Matrix& x, std::span<const int> y) {
    return pgd_attack(current, x, y, attack, rng);
  };
  return train_sgd(std::move(net), inputs, labels, sgd, perturb);
}

RobustEval robust_evaluate(const Network& net, const Matrix& inputs, std::span<const int> labels,
                           const PGDConfig& attack, std::uint64_t attack_seed) {
  Rng rng(attack_seed);
  Matrix adv = pgd_attack(net, inputs, labels, attack, rng);
  Matrix logits = forward(net, adv).logits;
  return {loss(logits, labels, attack.loss), accuracy(logits, labels), check_attack(inputs, adv, attack)};
}

RobustCurveReport robust_curve_report(const BezierCurve& curve, const Matrix& inputs, std::span<const int> labels,
                                      const std::vector<double>& t_grid, const PGDConfig& attack,
                                      std::uint64_t attack_seed) {
  validate_grid(t_grid);
  RobustCurveReport r;
  r.clean = evaluate_curve(curve, inputs, labels, t_grid, attack.loss);
  std::vector<double> loss_v, acc_v;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    RobustEval e = robust_evaluate(curve_point(curve, t_grid[i]), inputs, labels, attack,
                                   derive_seed(attack_seed, "eval", i));
    loss_v.push_back(e.loss);
    acc_v.push_back(e.accuracy);
    r.worst_check.linf = std::max(r.worst_check.linf, e.check.linf);
    r.worst_check.box_violation = std::max(r.worst_check.box_violation, e.check.box_violation);
  }
  r.robust = summarize_curve(t_grid, std::move(loss_v), std::move(acc_v));
  return r;
}

}  // namespace modecon
