#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace modecon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, huberized_relu, tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Pointwise nonlinearity. `delta` is only read for the huberized ReLU.
struct ActivationSpec {
  Activation kind = Activation::relu;
  double delta = 1.0;

  double apply(double x) const;
  double derivative(double x) const;
  /// Global Lipschitz constant of the nonlinearity (1 for all supported kinds).
  double lipschitz() const { return 1.0; }

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

/// Architecture of a dense feed-forward network.
///
/// Layers are numbered 1..L as in `layer_widths[0]` (input) to `layer_widths[L]`
/// (output). Storage in `Params` is 0-based: `weights[k]` maps layer k to k+1.
/// Hidden layer h (0-based, h = 0..L-2) is layer h+1.
///
/// With a residual period p, hidden layer h >= p with h % p == 0 adds the
/// post-activation output of hidden layer h - p after its nonlinearity:
/// X_{l} = sigma(W_l X_{l-1} + b_l) + X_{l-p}.
struct NetworkSpec {
  std::vector<int> layer_widths;
  ActivationSpec activation;
  std::optional<int> residual_period;
  bool has_bias = true;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  int depth() const { return static_cast<int>(layer_widths.size()) - 1; }
  int num_hidden() const { return depth() - 1; }
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  int hidden_width(int h) const { return layer_widths[static_cast<std::size_t>(h) + 1]; }
  int max_hidden_width() const;

  /// Hidden layer whose output is added to hidden layer `h`, if any.
  std::optional<int> skip_source(int h) const;

  /// Hidden layers that must share one permutation because skip connections tie
  /// their unit indexing. Singletons for plain feed-forward nets. Groups are
  /// ordered by their first member.
  std::vector<std::vector<int>> tied_groups() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Weights and biases of a network, or anything shaped like them (gradients,
/// curve control points). Behaves as a vector in parameter space.
struct Params {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;  // empty when the spec has no biases

  static Params zeros_like(const NetworkSpec& spec);

  Params& operator+=(const Params& o);
  Params& operator-=(const Params& o);
  Params& operator*=(double s);
  /// this += s * o
  Params& axpy(double s, const Params& o);

  double dot(const Params& o) const;
  double squared_norm() const { return dot(*this); }
  double norm() const;
  std::size_t size() const;
  bool all_finite() const;
  bool same_shape(const Params& o) const;
};

Params operator+(Params a, const Params& b);
Params operator-(Params a, const Params& b);
Params operator*(double s, Params a);

struct Network {
  NetworkSpec spec;
  Params params;

  /// Throws DimensionError if the parameter shapes do not match the spec, or
  /// NumericalError if an entry is not finite.
  void validate() const;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)); biases uniform in
/// +-1/sqrt(fan_in).
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Convenience spec: input, hidden widths..., output.
NetworkSpec make_spec(int input, const std::vector<int>& hidden, int output,
                      ActivationSpec activation = {}, bool has_bias = true,
                      std::optional<int> residual_period = std::nullopt);

}  // namespace modecon
