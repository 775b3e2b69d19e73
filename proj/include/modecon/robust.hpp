#pragma once

#include "modecon/curve.hpp"
#include "modecon/dataset.hpp"
#include "modecon/pgd.hpp"
#include "modecon/train.hpp"

#include <span>
#include <vector>

namespace modecon {

/// Default attack for a dataset: epsilon = fraction * feature range, step =
/// epsilon / 4, 10 steps, random start, clipped to the observed feature box.
PGDConfig default_pgd(const Dataset& data, double fraction = 0.1);

/// SGD where every batch is replaced by its PGD perturbation against the
/// current network. Attack randomness comes from its own stream, so epsilon = 0
/// reproduces train_sgd exactly.
TrainResult adversarial_train(Network net, const Matrix& inputs, std::span<const int> labels, const SgdConfig& sgd,
                              const PGDConfig& attack, std::uint64_t attack_seed);

struct RobustEval {
  double loss = 0.0;
  double accuracy = 0.0;
  AttackCheck check;
};

/// Loss and accuracy of a network on PGD-perturbed inputs.
RobustEval robust_evaluate(const Network& net, const Matrix& inputs, std::span<const int> labels,
                           const PGDConfig& attack, std::uint64_t attack_seed);

struct RobustCurveReport {
  CurveMetrics clean;
  CurveMetrics robust;
  AttackCheck worst_check;  // largest constraint deviation over all attacks
};

/// Clean and robust metrics along a curve; each grid network is attacked on its own.
RobustCurveReport robust_curve_report(const BezierCurve& curve, const Matrix& inputs, std::span<const int> labels,
                                      const std::vector<double>& t_grid, const PGDConfig& attack,
                                      std::uint64_t attack_seed);

}  // namespace modecon
