#include "modecon/train.hpp"

#include "modecon/rng.hpp"
#include "modecon/spectral.hpp"

#include <cmath>

namespace modecon {

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lr_decay_every < 0) throw ConfigError("lr_decay_every must be nonnegative");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_weight_spectral_norm && !(*max_weight_spectral_norm > 0.0))
    throw ConfigError("max_weight_spectral_norm must be positive");
}

double SgdConfig::lr_at(int epoch) const {
  if (lr_decay_every == 0) return lr;
  return lr * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> order = rng.permutation(n);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    int end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

Matrix gather_rows(const Matrix& x, std::span<const int> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  return out;
}

std::vector<int> gather(std::span<const int> y, std::span<const int> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

double regularized_objective(const Network& net, const Matrix& inputs, std::span<const int> labels, LossKind kind,
                             double weight_decay) {
  return loss(forward(net, inputs).logits, labels, kind) + 0.5 * weight_decay * net.params.squared_norm();
}

void clip_spectral_norms(Network& net, double bound) {
  for (auto& w : net.params.weights) {
    double s = spectral_norm(w);
    if (s > bound) w *= bound / s;
  }
}

TrainResult train_sgd(Network net, const Matrix& inputs, std::span<const int> labels, const SgdConfig& cfg,
                      const BatchTransform& transform) {
  cfg.validate();
  net.validate();
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
    throw DimensionError("inputs and labels have different lengths");
  TrainResult out{net, {}};
  if (cfg.epochs == 0) return out;
  if (inputs.rows() == 0) throw ConfigError("training set is empty");

  Rng rng(cfg.seed);
  Params velocity = Params::zeros_like(net.spec);
  Network last_finite = net;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    auto batches = make_batches(static_cast<int>(inputs.rows()), cfg.batch_size, rng);
    for (const auto& idx : batches) {
      Matrix xb = gather_rows(inputs, idx);
      std::vector<int> yb = gather(labels, idx);
      if (transform) xb = transform(net, xb, yb);
      BackwardResult g = backward(net, xb, yb, cfg.loss);
      if (!std::isfinite(g.loss) || !g.grads.all_finite())
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(out.log.steps) + ": non-finite loss",
                              last_finite, epoch, out.log.steps);
      if (cfg.weight_decay > 0.0) g.grads.axpy(cfg.weight_decay, net.params);
      if (cfg.momentum > 0.0) {
        velocity *= cfg.momentum;
        velocity += g.grads;
        net.params.axpy(-lr, velocity);
      } else {
        net.params.axpy(-lr, g.grads);
      }
      if (cfg.max_weight_spectral_norm) clip_spectral_norms(net, *cfg.max_weight_spectral_norm);
      if (!net.params.all_finite())
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(out.log.steps) + ": non-finite parameters",
                              last_finite, epoch, out.log.steps);
      last_finite = net;
      total += g.loss;
      ++out.log.steps;
    }
    out.log.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  out.net = std::move(net);
  return out;
}

TrainResult train_sgd(Network net, const Dataset& data, const SgdConfig& cfg, const BatchTransform& transform) {
  Dataset train = data.subset(Split::train);
  return train_sgd(std::move(net), train.features, train.labels, cfg, transform);
}

}  // namespace modecon
