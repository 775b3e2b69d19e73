#include "modecon/nn.hpp"

#include "modecon/error.hpp"

#include <cmath>

namespace modecon {

std::string to_string(LossKind k) { return k == LossKind::cross_entropy ? "cross_entropy" : "mse"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "mse") return LossKind::mse;
  throw ConfigError("unknown loss kind '" + s + "'");
}

namespace {

struct Cache {
  std::vector<Matrix> pre;   // hidden pre-activations
  std::vector<Matrix> post;  // hidden outputs (after the residual add)
  Matrix logits;
};

void check_input(const Network& net, const Matrix& inputs) {
  if (inputs.cols() != net.spec.input_width())
    throw DimensionError("layer 1 expects " + std::to_string(net.spec.input_width()) + " input features, got " +
                         std::to_string(inputs.cols()));
  if (static_cast<int>(net.params.weights.size()) != net.spec.depth())
    throw DimensionError("network parameters do not match its spec");
}

Matrix affine(const Network& net, int k, const Matrix& in) {
  const auto& w = net.params.weights[static_cast<std::size_t>(k)];
  if (in.cols() != w.cols())
    throw DimensionError("layer " + std::to_string(k + 1) + " expects width " + std::to_string(w.cols()) +
                         ", got " + std::to_string(in.cols()));
  Matrix out = in * w.transpose();
  if (net.spec.has_bias) out.rowwise() += net.params.biases[static_cast<std::size_t>(k)].transpose();
  return out;
}

Cache run(const Network& net, const Matrix& inputs) {
  check_input(net, inputs);
  const auto& act = net.spec.activation;
  Cache c;
  const int hidden = net.spec.num_hidden();
  c.pre.reserve(static_cast<std::size_t>(hidden));
  c.post.reserve(static_cast<std::size_t>(hidden));
  for (int h = 0; h < hidden; ++h) {
    const Matrix& in = h == 0 ? inputs : c.post.back();
    c.pre.push_back(affine(net, h, in));
    Matrix out = c.pre.back().unaryExpr([&](double x) { return act.apply(x); });
    if (auto src = net.spec.skip_source(h)) out += c.post[static_cast<std::size_t>(*src)];
    c.post.push_back(std::move(out));
  }
  c.logits = affine(net, hidden, hidden == 0 ? inputs : c.post.back());
  return c;
}

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw DimensionError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows()) +
                         " samples");
  for (int y : labels) {
    if (y < 0 || y >= logits.cols())
      throw DimensionError("label " + std::to_string(y) + " out of range for " + std::to_string(logits.cols()) +
                           " classes");
  }
}

}  // namespace

ForwardResult forward(const Network& net, const Matrix& inputs, Capture capture) {
  Cache c = run(net, inputs);
  ForwardResult r;
  r.logits = std::move(c.logits);
  if (capture == Capture::pre_activations) r.captured = std::move(c.pre);
  if (capture == Capture::post_activations) r.captured = std::move(c.post);
  return r;
}

Matrix one_hot(std::span<const int> labels, int n_classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return y;
}

LossGrad loss_grad(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  check_labels(logits, labels);
  const Eigen::Index n = logits.rows();
  if (n == 0) throw DimensionError("loss over an empty batch");
  if (kind == LossKind::mse) return mse_loss_grad(logits, one_hot(labels, static_cast<int>(logits.cols())));

  LossGrad g;
  g.dlogits.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    double z = e.sum();
    int y = labels[static_cast<std::size_t>(i)];
    total += std::log(z) - (logits(i, y) - mx);
    g.dlogits.row(i) = e / z;
    g.dlogits(i, y) -= 1.0;
  }
  g.value = total / static_cast<double>(n);
  g.dlogits /= static_cast<double>(n);
  return g;
}

LossGrad mse_loss_grad(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw DimensionError("targets shape does not match logits");
  const double n = static_cast<double>(logits.rows());
  if (n == 0) throw DimensionError("loss over an empty batch");
  LossGrad g;
  Matrix diff = logits - targets;
  g.value = diff.squaredNorm() / n;
  g.dlogits = (2.0 / n) * diff;
  return g;
}

double loss(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  return loss_grad(logits, labels, kind).value;
}

double mse_loss(const Matrix& logits, const Matrix& targets) { return mse_loss_grad(logits, targets).value; }

double accuracy(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

BackwardResult backprop_cached(const Network& net, const Matrix& inputs, const Cache& c, const Matrix& dlogits) {
  const auto& spec = net.spec;
  const auto& act = spec.activation;
  const int hidden = spec.num_hidden();
  if (dlogits.rows() != c.logits.rows() || dlogits.cols() != c.logits.cols())
    throw DimensionError("logit gradient has the wrong shape");

  BackwardResult r;
  r.grads = Params::zeros_like(spec);
  std::vector<Matrix> dpost(static_cast<std::size_t>(hidden));

  auto layer_input = [&](int k) -> const Matrix& { return k == 0 ? inputs : c.post[static_cast<std::size_t>(k) - 1]; };
  auto accumulate = [&](int k, const Matrix& dout) {
    r.grads.weights[static_cast<std::size_t>(k)].noalias() = dout.transpose() * layer_input(k);
    if (spec.has_bias) r.grads.biases[static_cast<std::size_t>(k)] = dout.colwise().sum().transpose();
    Matrix din = dout * net.params.weights[static_cast<std::size_t>(k)];
    if (k == 0) {
      r.input_grad = std::move(din);
    } else {
      auto& slot = dpost[static_cast<std::size_t>(k) - 1];
      if (slot.size() == 0) slot = std::move(din);
      else slot += din;
    }
  };

  accumulate(hidden, dlogits);
  for (int h = hidden - 1; h >= 0; --h) {
    Matrix& dp = dpost[static_cast<std::size_t>(h)];
    if (auto src = spec.skip_source(h)) {
      auto& slot = dpost[static_cast<std::size_t>(*src)];
      if (slot.size() == 0) slot = dp;
      else slot += dp;
    }
    const Matrix& pre = c.pre[static_cast<std::size_t>(h)];
    Matrix dpre = dp.cwiseProduct(pre.unaryExpr([&](double x) { return act.derivative(x); }));
    accumulate(h, dpre);
  }
  return r;
}

}  // namespace

BackwardResult backprop(const Network& net, const Matrix& inputs, const Matrix& dlogits) {
  Cache c = run(net, inputs);
  return backprop_cached(net, inputs, c, dlogits);
}

BackwardResult backward(const Network& net, const Matrix& inputs, std::span<const int> labels, LossKind kind) {
  if (inputs.rows() == 0) throw DimensionError("backward on an empty batch");
  Cache c = run(net, inputs);
  LossGrad g = loss_grad(c.logits, labels, kind);
  BackwardResult r = backprop_cached(net, inputs, c, g.dlogits);
  r.loss = g.value;
  return r;
}

BackwardResult backward(const Network& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows() == 0) throw DimensionError("backward on an empty batch");
  Cache c = run(net, inputs);
  LossGrad g = mse_loss_grad(c.logits, targets);
  BackwardResult r = backprop_cached(net, inputs, c, g.dlogits);
  r.loss = g.value;
  return r;
}

}  // namespace modecon
