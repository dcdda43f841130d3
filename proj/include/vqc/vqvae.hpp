#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vqc/codebook.hpp"
#include "vqc/matrix.hpp"
#include "vqc/mlp.hpp"

namespace vqc {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t pretrain_epochs = 0;  // 0 = no autoencoder stage
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double gamma = 0.9;
  double beta = 0.25;
  std::size_t codebook_size = 128;
  std::size_t hidden_dim = 32;          // decoder width, and encoder width unless overridden
  std::size_t encoder_hidden_dim = 0;   // 0 = same as hidden_dim
  std::size_t latent_dim = 1;           // encoder output width
  std::size_t token_dim = 1;            // must divide latent_dim
  std::size_t kmeans_iters = 50;
  std::uint64_t seed = 0;

  std::size_t encoder_width() const { return encoder_hidden_dim ? encoder_hidden_dim : hidden_dim; }
  AdamWConfig optimizer() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct EpochRecord {
  double recon_loss = 0.0;
  double commit_loss = 0.0;
  double perplexity = 0.0;  // 0 for autoencoder epochs
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  /// Perplexity of the k-means assignment when the codebook was initialized in this run.
  std::optional<double> init_perplexity;
  std::optional<double> init_objective;
};

/// Encoder, codebook and decoder. Each encoder output row is split into
/// latent_dim / token_dim contiguous chunks that are quantized independently.
class VqVae {
 public:
  VqVae() = default;
  VqVae(Mlp encoder, Mlp decoder, Codebook codebook, double beta);

  /// Fresh model with three-layer encoder/decoder for `input_dim`-wide data.
  static VqVae build(std::size_t input_dim, const TrainConfig& cfg);

  Mlp encoder;
  Mlp decoder;
  Codebook codebook;
  double beta = 0.25;

  std::size_t input_dim() const { return encoder.input_dim(); }
  std::size_t latent_dim() const { return encoder.output_dim(); }
  std::size_t token_dim() const { return codebook.dim(); }
  std::size_t tokens_per_sample() const { return latent_dim() / token_dim(); }

  /// Read-only helpers; no activation caches are touched.
  Matrix encode(const Matrix& batch) const { return encoder.predict(batch); }
  Quantized quantize_latents(const Matrix& latents) const;
  Matrix decode(const Matrix& latents) const { return decoder.predict(latents); }
  Matrix reconstruct(const Matrix& batch) const;

  void validate() const;
};

struct VqForward {
  Matrix embeddings;      // N x latent_dim
  Matrix quantized;       // N x latent_dim
  Matrix reconstruction;  // N x input_dim
  Assignment assignment;  // N * tokens_per_sample entries, row-major chunks
};

/// Encodes, quantizes and decodes while caching activations for the backward pass.
/// The decoder input is Z + sg(Zq - Z), i.e. numerically Zq.
VqForward forward_vq(VqVae& model, const Matrix& batch);

struct VqLoss {
  double recon = 0.0;
  double commit = 0.0;
  VqForward forward;
};

/// Computes recon = mean((X - Xhat)^2) and commit = mean((Z - sg(Zq))^2), and
/// accumulates gradients of recon + beta * commit into encoder and decoder.
/// The decoder's input gradient reaches the encoder unchanged (straight-through).
VqLoss loss_and_grads(VqVae& model, const Matrix& batch);

/// Plain autoencoder loss recon = mean((X - D(E(X)))^2) with gradients accumulated.
double autoencoder_loss_and_grads(Mlp& encoder, Mlp& decoder, const Matrix& batch);

/// Trains encoder+decoder without quantization for cfg.pretrain_epochs epochs.
TrainTrace train_autoencoder(Mlp& encoder, Mlp& decoder, const Matrix& data,
                             const TrainConfig& cfg);

/// Initializes the codebook with k-means over every encoder output of `data`.
KMeansResult init_codebook(VqVae& model, const Matrix& data, const TrainConfig& cfg);

/// Trains for cfg.epochs epochs with per-minibatch EMA codebook updates. Runs
/// init_codebook first when the codebook is not yet initialized.
TrainTrace train_vqvae(VqVae& model, const Matrix& data, const TrainConfig& cfg);

struct PipelineResult {
  VqVae model;
  TrainTrace pretrain;
  TrainTrace finetune;
};

/// Stage 1 trains an autoencoder for cfg.pretrain_epochs; stage 2 builds the VQ-VAE
/// from those weights, initializes tokens on the pretrained encoder outputs and
/// trains for cfg.epochs. With pretrain_epochs = 0 this is plain VQ-VAE training.
PipelineResult pretrain_then_finetune(const Matrix& data, const TrainConfig& cfg);

/// Per-run seeds derived from the config seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace vqc
