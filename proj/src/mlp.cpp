#include "vqc/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "vqc/errors.hpp"

namespace vqc {

LinearLayer::LinearLayer(std::size_t in_dim, std::size_t out_dim)
    : weight(out_dim, in_dim),
      bias(out_dim, 0.0),
      grad_weight(out_dim, in_dim),
      grad_bias(out_dim, 0.0),
      m_weight(out_dim, in_dim),
      v_weight(out_dim, in_dim),
      m_bias(out_dim, 0.0),
      v_bias(out_dim, 0.0) {}

Mlp::Mlp(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("Mlp needs at least an input and an output dimension");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ConfigError("Mlp layer dimensions must be positive");
    LinearLayer layer(dims[i], dims[i + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight.data()) w = dist(rng);
    for (double& b : layer.bias) b = dist(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<LinearLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("Mlp needs at least one layer");
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].out_dim() != layers_[i + 1].in_dim()) {
      throw ConfigError("Mlp layer " + std::to_string(i) + " output dim does not chain");
    }
  }
  for (auto& l : layers_) {
    if (l.bias.size() != l.out_dim()) throw ConfigError("bias length does not match layer width");
    if (l.grad_weight.rows() != l.weight.rows() || l.grad_weight.cols() != l.weight.cols()) {
      l.grad_weight = Matrix(l.out_dim(), l.in_dim());
      l.grad_bias.assign(l.out_dim(), 0.0);
    }
    if (l.m_weight.rows() != l.weight.rows() || l.m_weight.cols() != l.weight.cols()) {
      l.m_weight = Matrix(l.out_dim(), l.in_dim());
      l.v_weight = Matrix(l.out_dim(), l.in_dim());
      l.m_bias.assign(l.out_dim(), 0.0);
      l.v_bias.assign(l.out_dim(), 0.0);
    }
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

namespace {

Matrix affine(const LinearLayer& layer, const Matrix& x) {
  Matrix out = matmul_transposed(x, layer.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void check_input(const Mlp& net, const Matrix& batch) {
  if (net.num_layers() == 0) throw UsageError("forward on an empty Mlp");
  if (batch.cols() != net.input_dim()) {
    throw ConfigError("Mlp expects input dim " + std::to_string(net.input_dim()) + ", got " +
                      std::to_string(batch.cols()));
  }
}

}  // namespace

Matrix Mlp::forward(const Matrix& batch) {
  check_input(*this, batch);
  inputs_.assign(layers_.size(), Matrix{});
  preacts_.assign(layers_.size(), Matrix{});
  Matrix x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    inputs_[i] = x;
    preacts_[i] = affine(layers_[i], x);
    x = (i + 1 < layers_.size()) ? relu(preacts_[i]) : preacts_[i];
  }
  return x;
}

Matrix Mlp::predict(const Matrix& batch) const {
  check_input(*this, batch);
  Matrix x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = affine(layers_[i], x);
    if (i + 1 < layers_.size()) x = relu(x);
  }
  return x;
}

Matrix Mlp::backward(const Matrix& grad_output) {
  if (preacts_.empty()) throw UsageError("Mlp::backward called without a prior forward pass");
  const Matrix& last = preacts_.back();
  if (grad_output.rows() != last.rows() || grad_output.cols() != last.cols()) {
    throw UsageError("Mlp::backward gradient shape does not match the cached forward pass");
  }
  Matrix grad = grad_output;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    LinearLayer& layer = layers_[li];
    if (li + 1 < layers_.size()) {
      // ReLU'(0) = 0
      const auto& pre = preacts_[li].data();
      auto& g = grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(pre[k] > 0.0)) g[k] = 0.0;
      }
    }
    const Matrix& input = inputs_[li];
    const std::size_t out_dim = layer.out_dim();
    const std::size_t in_dim = layer.in_dim();
    Matrix grad_input(grad.rows(), in_dim);
    for (std::size_t n = 0; n < grad.rows(); ++n) {
      auto g = grad.row(n);
      auto x = input.row(n);
      auto gi = grad_input.row(n);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        layer.grad_bias[o] += go;
        double* gw = layer.grad_weight.row(o).data();
        const double* w = layer.weight.row(o).data();
        for (std::size_t i = 0; i < in_dim; ++i) {
          gw[i] += go * x[i];
          gi[i] += go * w[i];
        }
      }
    }
    grad = std::move(grad_input);
  }
  return grad;
}

void Mlp::zero_grad() {
  for (auto& l : layers_) {
    l.grad_weight.fill(0.0);
    std::fill(l.grad_bias.begin(), l.grad_bias.end(), 0.0);
  }
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

std::vector<double> Mlp::flat_gradients() const {
  std::vector<double> out;
  for (const auto& l : layers_) {
    out.insert(out.end(), l.grad_weight.data().begin(), l.grad_weight.data().end());
    out.insert(out.end(), l.grad_bias.begin(), l.grad_bias.end());
  }
  return out;
}

namespace {

void adamw_update(std::span<double> param, std::span<double> grad, std::span<double> m,
                  std::span<double> v, const AdamWConfig& cfg, double bias1, double bias2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    param[i] -= cfg.lr * cfg.weight_decay * param[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    grad[i] = 0.0;
  }
}

}  // namespace

void adamw_step(Mlp& net, const AdamWConfig& cfg) {
  ++net.step_count_;
  const double t = static_cast<double>(net.step_count_);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  // beta = 0 makes the correction exactly 1; guard the degenerate beta = 1 case.
  const double b1 = bias1 > 0.0 ? bias1 : 1.0;
  const double b2 = bias2 > 0.0 ? bias2 : 1.0;
  for (auto& l : net.layers_) {
    adamw_update(l.weight.data(), l.grad_weight.data(), l.m_weight.data(), l.v_weight.data(), cfg,
                 b1, b2);
    adamw_update(l.bias, l.grad_bias, l.m_bias, l.v_bias, cfg, b1, b2);
  }
}

}  // namespace vqc
