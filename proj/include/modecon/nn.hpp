#pragma once

#include "modecon/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace modecon {

enum class Capture { none, pre_activations, post_activations };
enum class LossKind { cross_entropy, mse };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct ForwardResult {
  Matrix logits;                  // n_samples x m_L
  std::vector<Matrix> captured;   // one n_samples x m_l matrix per hidden layer
};

/// Inputs are row-major by sample: `inputs` is n_samples x m_0.
ForwardResult forward(const Network& net, const Matrix& inputs, Capture capture = Capture::none);

/// Mean loss over samples. Cross-entropy is softmax-CE on the logits; MSE is
/// the mean squared Euclidean distance to the one-hot label vectors.
double loss(const Matrix& logits, std::span<const int> labels, LossKind kind);

/// Mean squared Euclidean distance to dense targets.
double mse_loss(const Matrix& logits, const Matrix& targets);

/// Fraction of rows whose argmax equals the label (lowest index wins ties).
double accuracy(const Matrix& logits, std::span<const int> labels);

/// One-hot encoding of labels, n x n_classes.
Matrix one_hot(std::span<const int> labels, int n_classes);

/// Loss value and its gradient with respect to the logits.
struct LossGrad {
  double value = 0.0;
  Matrix dlogits;
};
LossGrad loss_grad(const Matrix& logits, std::span<const int> labels, LossKind kind);
LossGrad mse_loss_grad(const Matrix& logits, const Matrix& targets);

struct BackwardResult {
  double loss = 0.0;
  Params grads;
  Matrix input_grad;  // d loss / d inputs, same shape as the inputs
};

/// Exact gradient of the mean loss with respect to every weight and bias.
BackwardResult backward(const Network& net, const Matrix& inputs, std::span<const int> labels, LossKind kind);
BackwardResult backward(const Network& net, const Matrix& inputs, const Matrix& targets);

/// Backpropagates an arbitrary gradient on the logits. `loss` in the result is left at 0.
BackwardResult backprop(const Network& net, const Matrix& inputs, const Matrix& dlogits);

}  // namespace modecon
