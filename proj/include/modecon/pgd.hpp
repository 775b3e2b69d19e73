#pragma once

#include "modecon/network.hpp"
#include "modecon/nn.hpp"
#include "modecon/rng.hpp"

#include <optional>
#include <span>
#include <utility>

namespace modecon {

/// L-infinity projected gradient ascent on the loss with respect to the inputs.
struct PGDConfig {
  double epsilon = 0.1;
  double step_size = 0.025;
  int n_steps = 10;
  bool random_start = true;
  std::optional<std::pair<double, double>> clip_range;  // valid input box, applied per feature
  LossKind loss = LossKind::cross_entropy;

  void validate() const;
};

/// x_adv = clip(proj_{B(x, eps)}(x_adv + step * sign(grad))) repeated n_steps
/// times. The random start (if on) is drawn from `rng`. sign(0) = 0.
Matrix pgd_attack(const Network& net, const Matrix& inputs, std::span<const int> labels, const PGDConfig& cfg,
                  Rng& rng);

/// Largest |x_adv - x| and largest violation of the clip box (0 when none).
struct AttackCheck {
  double linf = 0.0;
  double box_violation = 0.0;
};
AttackCheck check_attack(const Matrix& inputs, const Matrix& adversarial, const PGDConfig& cfg);

}  // namespace modecon
