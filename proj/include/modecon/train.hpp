#pragma once

#include "modecon/dataset.hpp"
#include "modecon/error.hpp"
#include "modecon/network.hpp"
#include "modecon/nn.hpp"
#include "modecon/rng.hpp"

#include <functional>
#include <optional>
#include <span>

namespace modecon {

struct SgdConfig {
  double lr = 0.1;
  int lr_decay_every = 20;  // epochs; 0 disables the schedule
  double lr_decay_factor = 0.5;
  double weight_decay = 5e-4;  // L2 on weights and biases
  double momentum = 0.0;
  int epochs = 60;
  int batch_size = 64;
  std::uint64_t seed = 0;
  std::optional<double> max_weight_spectral_norm;
  LossKind loss = LossKind::cross_entropy;

  void validate() const;
  double lr_at(int epoch) const;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean batch loss per epoch, without the decay term
  long steps = 0;
};

struct TrainResult {
  Network net;
  TrainLog log;
};

/// Replaces a batch of inputs before the gradient step (used for adversarial training).
using BatchTransform = std::function<Matrix(const Network& net, const Matrix& x, std::span<const int> y)>;

/// Thrown when the loss or the parameters stop being finite. Carries the last finite state.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, Network last_finite, int epoch, long step)
      : NumericalError(what), last_finite(std::move(last_finite)), epoch(epoch), step(step) {}
  Network last_finite;
  int epoch;
  long step;
};

/// Minibatch SGD on the mean loss plus (weight_decay / 2) ||theta||^2.
/// Samples are reshuffled each epoch from the config seed; the last partial batch is kept.
TrainResult train_sgd(Network net, const Matrix& inputs, std::span<const int> labels, const SgdConfig& cfg,
                      const BatchTransform& transform = {});
/// Trains on the train split (alignment rows included).
TrainResult train_sgd(Network net, const Dataset& data, const SgdConfig& cfg, const BatchTransform& transform = {});

/// Batch objective that train_sgd descends: mean loss + (weight_decay / 2) ||theta||^2.
double regularized_objective(const Network& net, const Matrix& inputs, std::span<const int> labels, LossKind kind,
                             double weight_decay);

/// Rescales every weight matrix whose spectral norm exceeds `bound`.
void clip_spectral_norms(Network& net, double bound);

/// Contiguous batches of a shuffled index order, shared by every trainer.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng);

/// Rows of `x` and entries of `y` at the given indices.
Matrix gather_rows(const Matrix& x, std::span<const int> idx);
std::vector<int> gather(std::span<const int> y, std::span<const int> idx);

}  // namespace modecon
