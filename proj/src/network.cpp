#include "modecon/network.hpp"

#include "modecon/error.hpp"
#include "modecon/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modecon {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::huberized_relu: return "huberized_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "huberized_relu") return Activation::huberized_relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

double ActivationSpec::apply(double x) const {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::huberized_relu:
      if (x <= 0.0) return 0.0;
      if (x <= delta) return 0.5 * x * x / delta;
      return x - 0.5 * delta;
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

double ActivationSpec::derivative(double x) const {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::huberized_relu:
      if (x <= 0.0) return 0.0;
      if (x <= delta) return x / delta;
      return 1.0;
    case Activation::tanh: {
      double th = std::tanh(x);
      return 1.0 - th * th;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

void NetworkSpec::validate() const {
  if (layer_widths.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (layer_widths[i] <= 0)
      throw ConfigError("layer " + std::to_string(i) + " has non-positive width");
  }
  if (activation.kind == Activation::huberized_relu && !(activation.delta > 0.0))
    throw ConfigError("huberized ReLU needs delta > 0");
  if (residual_period) {
    if (*residual_period <= 0) throw ConfigError("residual_period must be positive");
    for (int h = 0; h < num_hidden(); ++h) {
      if (auto src = skip_source(h); src && hidden_width(*src) != hidden_width(h)) {
        throw ConfigError("skip connection from hidden layer " + std::to_string(*src + 1) + " to " +
                          std::to_string(h + 1) + " joins layers of different width");
      }
    }
  }
}

int NetworkSpec::max_hidden_width() const {
  int m = 0;
  for (int h = 0; h < num_hidden(); ++h) m = std::max(m, hidden_width(h));
  return m;
}

std::optional<int> NetworkSpec::skip_source(int h) const {
  if (!residual_period) return std::nullopt;
  int p = *residual_period;
  if (h >= p && h % p == 0) return h - p;
  return std::nullopt;
}

std::vector<std::vector<int>> NetworkSpec::tied_groups() const {
  int n = num_hidden();
  std::vector<int> root(static_cast<std::size_t>(std::max(n, 0)));
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int x) {
    while (root[static_cast<std::size_t>(x)] != x) x = root[static_cast<std::size_t>(x)];
    return x;
  };
  for (int h = 0; h < n; ++h) {
    if (auto src = skip_source(h)) {
      int a = find(h), b = find(*src);
      root[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
  }
  std::vector<std::vector<int>> groups;
  std::vector<int> slot(static_cast<std::size_t>(std::max(n, 0)), -1);
  for (int h = 0; h < n; ++h) {
    int r = find(h);
    if (slot[static_cast<std::size_t>(r)] < 0) {
      slot[static_cast<std::size_t>(r)] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(slot[static_cast<std::size_t>(r)])].push_back(h);
  }
  return groups;
}

Params Params::zeros_like(const NetworkSpec& spec) {
  Params p;
  for (int k = 0; k < spec.depth(); ++k) {
    int rows = spec.layer_widths[static_cast<std::size_t>(k) + 1];
    int cols = spec.layer_widths[static_cast<std::size_t>(k)];
    p.weights.push_back(Matrix::Zero(rows, cols));
    if (spec.has_bias) p.biases.push_back(Vector::Zero(rows));
  }
  return p;
}

Params& Params::operator+=(const Params& o) { return axpy(1.0, o); }
Params& Params::operator-=(const Params& o) { return axpy(-1.0, o); }

Params& Params::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

Params& Params::axpy(double s, const Params& o) {
  if (!same_shape(o)) throw DimensionError("parameter sets have different shapes");
  for (std::size_t k = 0; k < weights.size(); ++k) weights[k].noalias() += s * o.weights[k];
  for (std::size_t k = 0; k < biases.size(); ++k) biases[k].noalias() += s * o.biases[k];
  return *this;
}

double Params::dot(const Params& o) const {
  if (!same_shape(o)) throw DimensionError("parameter sets have different shapes");
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k].cwiseProduct(o.weights[k]).sum();
  for (std::size_t k = 0; k < biases.size(); ++k) acc += biases[k].dot(o.biases[k]);
  return acc;
}

double Params::norm() const { return std::sqrt(squared_norm()); }

std::size_t Params::size() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

bool Params::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

bool Params::same_shape(const Params& o) const {
  if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].rows() != o.weights[k].rows() || weights[k].cols() != o.weights[k].cols()) return false;
  }
  for (std::size_t k = 0; k < biases.size(); ++k) {
    if (biases[k].size() != o.biases[k].size()) return false;
  }
  return true;
}

Params operator+(Params a, const Params& b) { return a += b; }
Params operator-(Params a, const Params& b) { return a -= b; }
Params operator*(double s, Params a) { return a *= s; }

void Network::validate() const {
  spec.validate();
  if (static_cast<int>(params.weights.size()) != spec.depth())
    throw DimensionError("network has " + std::to_string(params.weights.size()) + " weight matrices, spec needs " +
                         std::to_string(spec.depth()));
  if (spec.has_bias != !params.biases.empty() ||
      (spec.has_bias && params.biases.size() != params.weights.size()))
    throw DimensionError("bias vectors do not match has_bias");
  for (int k = 0; k < spec.depth(); ++k) {
    const auto& w = params.weights[static_cast<std::size_t>(k)];
    int rows = spec.layer_widths[static_cast<std::size_t>(k) + 1];
    int cols = spec.layer_widths[static_cast<std::size_t>(k)];
    if (w.rows() != rows || w.cols() != cols)
      throw DimensionError("layer " + std::to_string(k + 1) + " weight is " + std::to_string(w.rows()) + "x" +
                           std::to_string(w.cols()) + ", expected " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    if (spec.has_bias && params.biases[static_cast<std::size_t>(k)].size() != rows)
      throw DimensionError("layer " + std::to_string(k + 1) + " bias has wrong length");
  }
  if (!params.all_finite()) throw NumericalError("network contains non-finite parameters");
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Network net{spec, Params::zeros_like(spec)};
  for (int k = 0; k < spec.depth(); ++k) {
    auto& w = net.params.weights[static_cast<std::size_t>(k)];
    double fan_in = static_cast<double>(w.cols());
    double wb = std::sqrt(6.0 / fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-wb, wb);
    if (spec.has_bias) {
      double bb = 1.0 / std::sqrt(fan_in);
      auto& b = net.params.biases[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bb, bb);
    }
  }
  return net;
}

NetworkSpec make_spec(int input, const std::vector<int>& hidden, int output, ActivationSpec activation,
                      bool has_bias, std::optional<int> residual_period) {
  NetworkSpec s;
  s.layer_widths.push_back(input);
  s.layer_widths.insert(s.layer_widths.end(), hidden.begin(), hidden.end());
  s.layer_widths.push_back(output);
  s.activation = activation;
  s.has_bias = has_bias;
  s.residual_period = residual_period;
  s.validate();
  return s;
}

}  // namespace modecon
