#include "vqc/vqvae.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "vqc/errors.hpp"
#include "vqc/synthdata.hpp"

namespace vqc {

namespace {

enum SeedStream : std::uint64_t {
  kEncoderInit = 1,
  kDecoderInit = 2,
  kKMeans = 3,
  kAutoencoderEpochs = 4,
  kVqEpochs = 5,
};

void require_finite(double value, const char* what, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw DivergenceError(std::string(what) + " became non-finite at epoch " +
                          std::to_string(epoch));
  }
}

Matrix as_chunks(const Matrix& latents, std::size_t token_dim) {
  return latents.reshaped(latents.rows() * (latents.cols() / token_dim), token_dim);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over (base, stream)
  std::uint64_t z = base * 0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

AdamWConfig TrainConfig::optimizer() const {
  AdamWConfig a;
  a.lr = lr;
  a.weight_decay = weight_decay;
  return a;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("lr and weight_decay must be >= 0");
  if (codebook_size == 0) throw ConfigError("codebook_size must be >= 1");
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be >= 1");
  if (latent_dim == 0 || token_dim == 0 || latent_dim % token_dim != 0) {
    throw ConfigError("token_dim must divide latent_dim");
  }
}

VqVae::VqVae(Mlp enc, Mlp dec, Codebook cb, double b)
    : encoder(std::move(enc)), decoder(std::move(dec)), codebook(std::move(cb)), beta(b) {
  validate();
}

VqVae VqVae::build(std::size_t input_dim, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t he = cfg.encoder_width();
  const std::size_t hd = cfg.hidden_dim;
  Mlp enc({input_dim, he, he, cfg.latent_dim}, derive_seed(cfg.seed, kEncoderInit));
  Mlp dec({cfg.latent_dim, hd, hd, input_dim}, derive_seed(cfg.seed, kDecoderInit));
  return VqVae(std::move(enc), std::move(dec), Codebook(cfg.codebook_size, cfg.token_dim, cfg.gamma),
               cfg.beta);
}

void VqVae::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (encoder.num_layers() == 0 || decoder.num_layers() == 0) {
    throw ConfigError("encoder and decoder need at least one layer");
  }
  if (codebook.dim() == 0 || latent_dim() % codebook.dim() != 0) {
    throw ConfigError("token dim " + std::to_string(codebook.dim()) +
                      " must divide encoder output dim " + std::to_string(latent_dim()));
  }
  if (decoder.input_dim() != latent_dim()) {
    throw ConfigError("decoder input dim must equal encoder output dim");
  }
  if (decoder.output_dim() != input_dim()) {
    throw ConfigError("decoder output dim must equal encoder input dim");
  }
}

Quantized VqVae::quantize_latents(const Matrix& latents) const {
  if (latents.cols() != latent_dim()) throw ConfigError("latent width mismatch");
  Quantized q = codebook.quantize(as_chunks(latents, token_dim()));
  q.values = q.values.reshaped(latents.rows(), latents.cols());
  return q;
}

Matrix VqVae::reconstruct(const Matrix& batch) const {
  return decode(quantize_latents(encode(batch)).values);
}

VqForward forward_vq(VqVae& model, const Matrix& batch) {
  if (batch.cols() != model.input_dim()) {
    throw ConfigError("batch width " + std::to_string(batch.cols()) + " does not match model input " +
                      std::to_string(model.input_dim()));
  }
  VqForward out;
  out.embeddings = model.encoder.forward(batch);
  Quantized q = model.quantize_latents(out.embeddings);
  out.quantized = std::move(q.values);
  out.assignment = std::move(q.assignment);
  out.reconstruction = model.decoder.forward(out.quantized);
  return out;
}

VqLoss loss_and_grads(VqVae& model, const Matrix& batch) {
  VqLoss loss;
  loss.forward = forward_vq(model, batch);
  const VqForward& f = loss.forward;
  loss.recon = mse(f.reconstruction, batch);
  loss.commit = mse(f.embeddings, f.quantized);

  Matrix grad_recon(batch.rows(), batch.cols());
  const double recon_scale = 2.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grad_recon.data()[i] = recon_scale * (f.reconstruction.data()[i] - batch.data()[i]);
  }
  // Straight-through: d(loss)/dZ receives d(loss)/dZq unchanged.
  Matrix grad_latent = model.decoder.backward(grad_recon);
  const double commit_scale = model.beta * 2.0 / static_cast<double>(f.embeddings.size());
  for (std::size_t i = 0; i < grad_latent.size(); ++i) {
    grad_latent.data()[i] += commit_scale * (f.embeddings.data()[i] - f.quantized.data()[i]);
  }
  model.encoder.backward(grad_latent);
  return loss;
}

double autoencoder_loss_and_grads(Mlp& encoder, Mlp& decoder, const Matrix& batch) {
  const Matrix z = encoder.forward(batch);
  const Matrix xhat = decoder.forward(z);
  const double loss = mse(xhat, batch);
  Matrix grad(batch.rows(), batch.cols());
  const double scale = 2.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grad.data()[i] = scale * (xhat.data()[i] - batch.data()[i]);
  }
  encoder.backward(decoder.backward(grad));
  return loss;
}

TrainTrace train_autoencoder(Mlp& encoder, Mlp& decoder, const Matrix& data,
                             const TrainConfig& cfg) {
  cfg.validate();
  TrainTrace trace;
  const AdamWConfig opt = cfg.optimizer();
  encoder.zero_grad();
  decoder.zero_grad();
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    const auto blocks =
        batch_indices(data.rows(), cfg.batch_size, derive_seed(cfg.seed, kAutoencoderEpochs + 16 * epoch));
    for (const auto& idx : blocks) {
      const Matrix batch = gather_rows(data, idx);
      const double loss = autoencoder_loss_and_grads(encoder, decoder, batch);
      require_finite(loss, "autoencoder reconstruction loss", epoch);
      adamw_step(encoder, opt);
      adamw_step(decoder, opt);
      rec.recon_loss += loss * static_cast<double>(idx.size());
    }
    rec.recon_loss /= static_cast<double>(data.rows());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.epochs.push_back(rec);
  }
  return trace;
}

KMeansResult init_codebook(VqVae& model, const Matrix& data, const TrainConfig& cfg) {
  const Matrix chunks = as_chunks(model.encode(data), model.token_dim());
  return model.codebook.kmeans_init(chunks, cfg.kmeans_iters, derive_seed(cfg.seed, kKMeans));
}

TrainTrace train_vqvae(VqVae& model, const Matrix& data, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  TrainTrace trace;
  if (!model.codebook.initialized()) {
    const KMeansResult km = init_codebook(model, data, cfg);
    trace.init_perplexity = perplexity(km.assignment, model.codebook.size());
    trace.init_objective = km.objective.back();
  }
  const AdamWConfig opt = cfg.optimizer();
  model.encoder.zero_grad();
  model.decoder.zero_grad();
  const std::size_t s = model.codebook.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    std::vector<std::size_t> usage(s, 0);
    std::size_t assigned = 0;
    const auto blocks =
        batch_indices(data.rows(), cfg.batch_size, derive_seed(cfg.seed, kVqEpochs + 16 * epoch));
    for (const auto& idx : blocks) {
      const Matrix batch = gather_rows(data, idx);
      VqLoss loss = loss_and_grads(model, batch);
      require_finite(loss.recon, "reconstruction loss", epoch);
      require_finite(loss.commit, "commitment loss", epoch);
      adamw_step(model.encoder, opt);
      adamw_step(model.decoder, opt);
      model.codebook.ema_update(as_chunks(loss.forward.embeddings, model.token_dim()),
                                loss.forward.assignment);
      rec.recon_loss += loss.recon * static_cast<double>(idx.size());
      rec.commit_loss += loss.commit * static_cast<double>(idx.size());
      for (std::size_t k : loss.forward.assignment.indices) ++usage[k];
      assigned += loss.forward.assignment.size();
    }
    rec.recon_loss /= static_cast<double>(data.rows());
    rec.commit_loss /= static_cast<double>(data.rows());
    double entropy = 0.0;
    for (std::size_t c : usage) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(assigned);
      entropy -= p * std::log(p);
    }
    rec.perplexity = std::exp(entropy);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.epochs.push_back(rec);
  }
  return trace;
}

PipelineResult pretrain_then_finetune(const Matrix& data, const TrainConfig& cfg) {
  PipelineResult result;
  result.model = VqVae::build(data.cols(), cfg);
  if (cfg.pretrain_epochs > 0) {
    result.pretrain = train_autoencoder(result.model.encoder, result.model.decoder, data, cfg);
    // Fine-tuning starts from the pretrained weights with a fresh optimizer.
    for (Mlp* net : {&result.model.encoder, &result.model.decoder}) {
      *net = Mlp(net->layers());
      for (auto& l : net->layers()) {
        l.m_weight.fill(0.0);
        l.v_weight.fill(0.0);
        std::fill(l.m_bias.begin(), l.m_bias.end(), 0.0);
        std::fill(l.v_bias.begin(), l.v_bias.end(), 0.0);
      }
      net->set_step_count(0);
    }
  }
  result.finetune = train_vqvae(result.model, data, cfg);
  return result;
}

}  // namespace vqc
