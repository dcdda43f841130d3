#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vqc/matrix.hpp"

namespace vqc {

/// Fully connected layer y = x W^T + b with gradient and AdamW moment buffers.
struct LinearLayer {
  Matrix weight;  // out_dim x in_dim
  std::vector<double> bias;
  Matrix grad_weight;
  std::vector<double> grad_bias;
  Matrix m_weight, v_weight;
  std::vector<double> m_bias, v_bias;

  LinearLayer() = default;
  LinearLayer(std::size_t in_dim, std::size_t out_dim);

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Feedforward network: ReLU between layers, identity after the last one.
class Mlp {
 public:
  Mlp() = default;

  /// dims = {in, h1, ..., out}. Weights and biases are drawn from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual fan-in scaled uniform init.
  Mlp(std::span<const std::size_t> dims, std::uint64_t seed);
  Mlp(std::initializer_list<std::size_t> dims, std::uint64_t seed)
      : Mlp(std::span<const std::size_t>(dims.begin(), dims.size()), seed) {}

  /// Assembles a network from explicit layers; consecutive dims must chain.
  explicit Mlp(std::vector<LinearLayer> layers);

  /// Runs the network and caches activations for backward().
  Matrix forward(const Matrix& batch);

  /// Runs the network without touching the cache. Safe for concurrent readers.
  Matrix predict(const Matrix& batch) const;

  /// Accumulates parameter gradients and returns d(loss)/d(input).
  Matrix backward(const Matrix& grad_output);

  void zero_grad();

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }

  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t steps) { step_count_ = steps; }

  /// Concatenated parameters (weights then bias, per layer); handy for comparisons.
  std::vector<double> flat_parameters() const;
  std::vector<double> flat_gradients() const;

 private:
  friend void adamw_step(Mlp& net, const AdamWConfig& cfg);

  std::vector<LinearLayer> layers_;
  std::vector<Matrix> inputs_;    // input seen by each layer
  std::vector<Matrix> preacts_;   // pre-activation output of each layer
  std::uint64_t step_count_ = 0;
};

/// Decoupled-weight-decay Adam. Zeroes gradients and increments the step counter.
void adamw_step(Mlp& net, const AdamWConfig& cfg);

}  // namespace vqc
