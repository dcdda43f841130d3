#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vqc/errors.hpp"
#include "vqc/synthdata.hpp"
#include "vqc/vqvae.hpp"

using vqc::Matrix;
using vqc::Mlp;
using vqc::TrainConfig;
using vqc::VqVae;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.codebook_size = 16;
  cfg.hidden_dim = 8;
  cfg.latent_dim = 2;
  cfg.token_dim = 1;
  cfg.batch_size = 64;
  cfg.epochs = 5;
  return cfg;
}

vqc::GaussianMixtureDataset small_data(std::size_t dim = 2, std::size_t per_cluster = 100) {
  vqc::MixtureSpec spec;
  spec.dim = dim;
  spec.points_per_cluster = per_cluster;
  return vqc::generate(spec);
}

std::vector<double*> parameter_pointers(Mlp& net) {
  std::vector<double*> out;
  for (auto& l : net.layers()) {
    for (auto& w : l.weight.data()) out.push_back(&w);
    for (auto& b : l.bias) out.push_back(&b);
  }
  return out;
}

Mlp identity_net() {
  vqc::LinearLayer l(1, 1);
  l.weight(0, 0) = 1.0;
  l.bias = {0.0};
  return Mlp(std::vector<vqc::LinearLayer>{l});
}

// Installs every latent entry of `batch` as a token, so quantization is exact.
void make_quantization_exact(VqVae& model, const Matrix& batch) {
  const Matrix z = model.encode(batch);
  const Matrix chunks = z.reshaped(z.size() / model.token_dim(), model.token_dim());
  model.codebook = vqc::Codebook(chunks.rows(), chunks.cols(), 0.9);
  model.codebook.set_tokens(chunks);
}

void expect_same_traces(const vqc::TrainTrace& a, const vqc::TrainTrace& b) {
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].recon_loss, b.epochs[i].recon_loss);
    EXPECT_EQ(a.epochs[i].commit_loss, b.epochs[i].commit_loss);
    EXPECT_EQ(a.epochs[i].perplexity, b.epochs[i].perplexity);
  }
  EXPECT_EQ(a.init_perplexity, b.init_perplexity);
}

}  // namespace

TEST(VqVae, BuildUsesThreeLayerNetworks) {
  TrainConfig cfg = small_config();
  cfg.encoder_hidden_dim = 4;
  cfg.latent_dim = 4;
  cfg.token_dim = 2;
  const VqVae m = VqVae::build(3, cfg);
  EXPECT_EQ(m.encoder.num_layers(), 3u);
  EXPECT_EQ(m.decoder.num_layers(), 3u);
  EXPECT_EQ(m.encoder.layers()[0].out_dim(), 4u);
  EXPECT_EQ(m.decoder.layers()[0].out_dim(), 8u);
  EXPECT_EQ(m.latent_dim(), 4u);
  EXPECT_EQ(m.tokens_per_sample(), 2u);
  EXPECT_EQ(m.decoder.input_dim(), m.latent_dim());
}

TEST(VqVae, InconsistentShapesAreConfigErrors) {
  TrainConfig cfg = small_config();
  cfg.latent_dim = 3;
  cfg.token_dim = 2;
  EXPECT_THROW(VqVae::build(2, cfg), vqc::ConfigError);
  cfg = small_config();
  cfg.beta = -1.0;
  EXPECT_THROW(VqVae::build(2, cfg), vqc::ConfigError);
  cfg = small_config();
  cfg.gamma = 1.0;
  EXPECT_THROW(cfg.validate(), vqc::ConfigError);
  cfg = small_config();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), vqc::ConfigError);

  VqVae m = VqVae::build(2, small_config());
  make_quantization_exact(m, Matrix(4, 2, 0.5));
  EXPECT_THROW(vqc::forward_vq(m, Matrix(4, 3)), vqc::ConfigError);
}

TEST(ForwardVq, ExactCodebookGivesIdentityQuantization) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(10, 2, rng);
  VqVae m = VqVae::build(2, small_config());
  make_quantization_exact(m, x);
  const auto f = vqc::forward_vq(m, x);
  EXPECT_EQ(f.quantized, f.embeddings);
  EXPECT_EQ(f.assignment.size(), 20u);
}

TEST(ForwardVq, SingleTokenCollapsesAllReconstructions) {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(7, 2, rng);
  TrainConfig cfg = small_config();
  cfg.codebook_size = 1;
  VqVae m = VqVae::build(2, cfg);
  m.codebook.set_tokens(Matrix::from_rows({{0.3}}));
  const auto f = vqc::forward_vq(m, x);
  const Matrix expected = m.decode(Matrix(1, 2, 0.3));
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(f.reconstruction(i, d), expected(0, d));
  }
}

TEST(ForwardVq, ChunksAreQuantizedIndependently) {
  std::mt19937_64 rng(3);
  TrainConfig cfg = small_config();
  cfg.latent_dim = 4;
  cfg.token_dim = 2;
  VqVae m = VqVae::build(3, cfg);
  m.codebook.set_tokens(oracle::random_matrix(16, 2, rng));
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const auto f = vqc::forward_vq(m, x);
  ASSERT_EQ(f.assignment.size(), 10u);
  const Matrix chunks = f.embeddings.reshaped(10, 2);
  const auto want = oracle::brute_force_assign(chunks, m.codebook.tokens());
  EXPECT_EQ(f.assignment.indices, want);
  for (std::size_t c = 0; c < 10; ++c) {
    for (std::size_t d = 0; d < 2; ++d) {
      EXPECT_EQ(f.quantized.data()[2 * c + d], m.codebook.tokens()(want[c], d));
    }
  }
}

TEST(LossAndGrads, ScalarHandComputation) {
  for (double beta : {0.0, 0.25, 1.0}) {
    vqc::Codebook cb(1, 1, 0.9);
    cb.set_tokens(Matrix::from_rows({{1.5}}));
    VqVae m(identity_net(), identity_net(), cb, beta);
    const auto loss = vqc::loss_and_grads(m, Matrix::from_rows({{2.0}}));
    EXPECT_NEAR(loss.recon + beta * loss.commit, 0.25 + beta * 0.25, 1e-12);
    // d/dw_enc: straight-through recon term 2(xhat - x) * x plus beta * 2(z - t) * x.
    EXPECT_NEAR(m.encoder.layers()[0].grad_weight(0, 0), 2 * (1.5 - 2.0) * 2.0 + beta * 2 * 0.5 * 2.0, 1e-12);
    // d/dw_dec = 2(xhat - x) * zq.
    EXPECT_NEAR(m.decoder.layers()[0].grad_weight(0, 0), 2 * (1.5 - 2.0) * 1.5, 1e-12);
  }
}

TEST(LossAndGrads, ExactQuantizationHasZeroCommitment) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(6, 2, rng);
  VqVae m = VqVae::build(2, small_config());
  make_quantization_exact(m, x);
  EXPECT_EQ(vqc::loss_and_grads(m, x).commit, 0.0);
}

class StraightThroughGradient : public ::testing::TestWithParam<std::tuple<std::uint64_t, double>> {};

TEST_P(StraightThroughGradient, MatchesFrozenOffsetFiniteDifferences) {
  const auto [seed, beta] = GetParam();
  std::mt19937_64 rng(seed);
  TrainConfig cfg = small_config();
  cfg.latent_dim = 4;
  cfg.token_dim = 2;
  cfg.beta = beta;
  cfg.seed = seed;
  VqVae m = VqVae::build(3, cfg);
  m.codebook.set_tokens(oracle::random_matrix(16, 2, rng));
  const Matrix x = oracle::random_matrix(9, 3, rng);

  m.encoder.zero_grad();
  m.decoder.zero_grad();
  const auto loss = vqc::loss_and_grads(m, x);
  const Matrix zq = loss.forward.quantized;
  const Matrix offset = [&] {
    Matrix c = zq;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= loss.forward.embeddings.data()[i];
    return c;
  }();

  // Encoder: recon through D(Z + c) with c frozen, commitment against frozen Zq.
  auto encoder_objective = [&] {
    Matrix z = m.encoder.predict(x);
    Matrix shifted = z;
    for (std::size_t i = 0; i < z.size(); ++i) shifted.data()[i] += offset.data()[i];
    return oracle::mean_sq(m.decoder.predict(shifted), x) + beta * oracle::mean_sq(z, zq);
  };
  const auto enc_numeric = oracle::numeric_gradient(parameter_pointers(m.encoder), encoder_objective);
  EXPECT_LT(oracle::max_rel_error(m.encoder.flat_gradients(), enc_numeric), 1e-4);

  auto decoder_objective = [&] { return oracle::mean_sq(m.decoder.predict(zq), x); };
  const auto dec_numeric = oracle::numeric_gradient(parameter_pointers(m.decoder), decoder_objective);
  EXPECT_LT(oracle::max_rel_error(m.decoder.flat_gradients(), dec_numeric), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, StraightThroughGradient,
                         ::testing::Combine(::testing::Values(0u, 1u, 2u), ::testing::Values(0.0, 0.25, 2.0)));

TEST(LossAndGrads, CommitmentGradientMatchesFiniteDifferences) {
  // Isolates beta * d(commit)/dz: gradient of the commitment term alone w.r.t. the latents.
  std::mt19937_64 rng(9);
  const Matrix zq = oracle::random_matrix(4, 3, rng);
  Matrix z = oracle::random_matrix(4, 3, rng);
  const double beta = 0.25;
  std::vector<double> analytic(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    analytic[i] = beta * 2.0 * (z.data()[i] - zq.data()[i]) / static_cast<double>(z.size());
  }
  std::vector<double*> ptrs;
  for (auto& v : z.data()) ptrs.push_back(&v);
  const auto numeric = oracle::numeric_gradient(ptrs, [&] { return beta * vqc::mse(z, zq); });
  EXPECT_LT(oracle::max_rel_error(analytic, numeric), 1e-4);

  // The library's commitment gradient is the beta-difference between two runs.
  TrainConfig cfg = small_config();
  cfg.latent_dim = 3;
  VqVae a = VqVae::build(2, cfg);
  a.codebook.set_tokens(oracle::random_matrix(16, 1, rng));
  VqVae b = a;
  b.beta = 0.0;
  a.beta = beta;
  const Matrix x = oracle::random_matrix(4, 2, rng);
  a.encoder.zero_grad();
  b.encoder.zero_grad();
  vqc::loss_and_grads(a, x);
  const auto fb = vqc::loss_and_grads(b, x).forward;
  const Matrix zq_model = fb.quantized;
  const Matrix x_copy = x;
  auto commit_only = [&] { return beta * oracle::mean_sq(b.encoder.predict(x_copy), zq_model); };
  const auto commit_numeric = oracle::numeric_gradient(parameter_pointers(b.encoder), commit_only);
  std::vector<double> diff = a.encoder.flat_gradients();
  const auto gb = b.encoder.flat_gradients();
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= gb[i];
  EXPECT_LT(oracle::max_rel_error(diff, commit_numeric, 1e-5), 1e-4);
}

TEST(LossAndGrads, ZeroBetaIsPureStraightThrough) {
  std::mt19937_64 rng(5);
  TrainConfig cfg = small_config();
  cfg.beta = 0.0;
  VqVae m = VqVae::build(2, cfg);
  m.codebook.set_tokens(oracle::random_matrix(16, 1, rng));
  const Matrix x = oracle::random_matrix(8, 2, rng);
  vqc::loss_and_grads(m, x);

  // Manual straight-through: decoder input gradient fed straight into the encoder.
  VqVae ref = VqVae::build(2, cfg);
  ref.codebook = m.codebook;
  const auto f = vqc::forward_vq(ref, x);
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data()[i] = 2.0 * (f.reconstruction.data()[i] - x.data()[i]) / static_cast<double>(x.size());
  }
  ref.encoder.backward(ref.decoder.backward(g));
  EXPECT_EQ(m.encoder.flat_gradients(), ref.encoder.flat_gradients());
}

TEST(TrainStep, ExactQuantizationStepEqualsAutoencoderStep) {
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig cfg = small_config();
    cfg.seed = seed;
    const Matrix x = oracle::random_matrix(32, 2, rng);
    VqVae vq = VqVae::build(2, cfg);
    make_quantization_exact(vq, x);
    Mlp enc = vq.encoder, dec = vq.decoder;

    vqc::loss_and_grads(vq, x);
    vqc::adamw_step(vq.encoder, cfg.optimizer());
    vqc::adamw_step(vq.decoder, cfg.optimizer());
    vqc::autoencoder_loss_and_grads(enc, dec, x);
    vqc::adamw_step(enc, cfg.optimizer());
    vqc::adamw_step(dec, cfg.optimizer());

    const auto a = vq.encoder.flat_parameters(), b = enc.flat_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    const auto c = vq.decoder.flat_parameters(), d = dec.flat_parameters();
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], d[i], 1e-12);
  }
}

TEST(TrainStep, OptimizerAndEmaTouchDisjointState) {
  std::mt19937_64 rng(7);
  VqVae m = VqVae::build(2, small_config());
  m.codebook.set_tokens(oracle::random_matrix(16, 1, rng));
  const Matrix x = oracle::random_matrix(16, 2, rng);
  const Matrix tokens = m.codebook.tokens();
  const auto f = vqc::loss_and_grads(m, x).forward;
  vqc::adamw_step(m.encoder, {});
  vqc::adamw_step(m.decoder, {});
  EXPECT_EQ(m.codebook.tokens(), tokens);

  const auto enc = m.encoder.flat_parameters(), dec = m.decoder.flat_parameters();
  m.codebook.ema_update(f.embeddings.reshaped(f.embeddings.size(), 1), f.assignment);
  EXPECT_EQ(m.encoder.flat_parameters(), enc);
  EXPECT_EQ(m.decoder.flat_parameters(), dec);
}

TEST(TrainAutoencoder, ZeroEpochsLeaveParameters) {
  TrainConfig cfg = small_config();
  cfg.pretrain_epochs = 0;
  VqVae m = VqVae::build(2, cfg);
  const auto before = m.encoder.flat_parameters();
  const auto trace = vqc::train_autoencoder(m.encoder, m.decoder, small_data().train(), cfg);
  EXPECT_TRUE(trace.epochs.empty());
  EXPECT_EQ(m.encoder.flat_parameters(), before);
}

TEST(TrainAutoencoder, ReconstructionImprovesOnMixture) {
  const auto ds = small_data(2, 1000);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig cfg;
    cfg.latent_dim = 2;
    cfg.pretrain_epochs = 100;
    cfg.seed = seed;
    VqVae m = VqVae::build(2, cfg);
    const auto trace = vqc::train_autoencoder(m.encoder, m.decoder, ds.train(), cfg);
    ASSERT_EQ(trace.epochs.size(), 100u);
    EXPECT_LT(trace.epochs.back().recon_loss, trace.epochs.front().recon_loss);
  }
}

TEST(TrainAutoencoder, LinearDataIsLearnedAlmostExactly) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(2000, 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double u = n(rng);
    x(i, 0) = u;
    x(i, 1) = -0.5 * u;
  }
  TrainConfig cfg;
  cfg.latent_dim = 2;
  cfg.pretrain_epochs = 100;
  cfg.batch_size = 64;
  VqVae m = VqVae::build(2, cfg);
  const auto trace = vqc::train_autoencoder(m.encoder, m.decoder, x, cfg);
  EXPECT_LT(vqc::mse(m.decoder.predict(m.encoder.predict(x)), x), 1e-3);
  EXPECT_EQ(trace.epochs.size(), 100u);
}

TEST(TrainVqVae, FrozenNetworksOnlyMoveTokens) {
  const auto ds = small_data();
  TrainConfig cfg = small_config();
  cfg.lr = 0.0;
  VqVae m = VqVae::build(2, cfg);
  vqc::init_codebook(m, ds.train(), cfg);
  // Perturb tokens so the EMA has somewhere to go.
  Matrix shifted = m.codebook.tokens();
  for (double& v : shifted.data()) v += 0.05;
  m.codebook.set_tokens(shifted);
  const auto enc = m.encoder.flat_parameters(), dec = m.decoder.flat_parameters();
  const auto trace = vqc::train_vqvae(m, ds.train(), cfg);
  EXPECT_EQ(m.encoder.flat_parameters(), enc);
  EXPECT_EQ(m.decoder.flat_parameters(), dec);
  EXPECT_NE(m.codebook.tokens(), shifted);
  // With fixed embeddings the EMA pulls tokens toward their assigned means: commitment drops.
  EXPECT_LT(trace.epochs.back().commit_loss, trace.epochs.front().commit_loss);
}

TEST(TrainVqVae, RecordsOneEpochEachWithFiniteLosses) {
  const auto ds = small_data();
  TrainConfig cfg = small_config();
  cfg.epochs = 20;
  VqVae m = VqVae::build(2, cfg);
  const auto trace = vqc::train_vqvae(m, ds.train(), cfg);
  ASSERT_EQ(trace.epochs.size(), 20u);
  ASSERT_TRUE(trace.init_perplexity.has_value());
  for (const auto& e : trace.epochs) {
    EXPECT_TRUE(std::isfinite(e.recon_loss));
    EXPECT_TRUE(std::isfinite(e.commit_loss));
    EXPECT_GE(e.perplexity, 1.0);
    EXPECT_LE(e.perplexity, 16.0 + 1e-9);
  }
}

TEST(TrainVqVae, RepeatedSingleBatchBecomesStationary) {
  const auto ds = small_data(2, 10);
  TrainConfig cfg = small_config();
  cfg.batch_size = ds.train().rows();
  cfg.epochs = 300;
  VqVae m = VqVae::build(2, cfg);
  const auto trace = vqc::train_vqvae(m, ds.train(), cfg);
  for (std::size_t i = trace.epochs.size() - 49; i < trace.epochs.size(); ++i) {
    EXPECT_LE(trace.epochs[i].commit_loss, trace.epochs[i - 1].commit_loss + 1e-3);
  }
}

TEST(TrainVqVae, NonFiniteInputAborts) {
  auto ds = small_data();
  Matrix x = ds.train();
  x(3, 1) = std::numeric_limits<double>::quiet_NaN();
  VqVae m = VqVae::build(2, small_config());
  EXPECT_THROW(vqc::train_vqvae(m, x, small_config()), vqc::DivergenceError);
}

TEST(Pipeline, NoPretrainingEqualsPlainTraining) {
  const auto ds = small_data();
  TrainConfig cfg = small_config();
  const auto p = vqc::pretrain_then_finetune(ds.train(), cfg);
  VqVae m = VqVae::build(2, cfg);
  const auto trace = vqc::train_vqvae(m, ds.train(), cfg);
  EXPECT_TRUE(p.pretrain.epochs.empty());
  expect_same_traces(p.finetune, trace);
  EXPECT_EQ(p.model.encoder.flat_parameters(), m.encoder.flat_parameters());
  EXPECT_EQ(p.model.codebook.tokens(), m.codebook.tokens());
}

TEST(Pipeline, IsDeterministic) {
  const auto ds = small_data();
  TrainConfig cfg = small_config();
  cfg.pretrain_epochs = 3;
  const auto a = vqc::pretrain_then_finetune(ds.train(), cfg);
  const auto b = vqc::pretrain_then_finetune(ds.train(), cfg);
  expect_same_traces(a.pretrain, b.pretrain);
  expect_same_traces(a.finetune, b.finetune);
  EXPECT_EQ(a.model.decoder.flat_parameters(), b.model.decoder.flat_parameters());
}

TEST(Pipeline, FineTuningStartsWithFreshOptimizer) {
  const auto ds = small_data();
  TrainConfig cfg = small_config();
  cfg.pretrain_epochs = 2;
  cfg.epochs = 1;
  const auto p = vqc::pretrain_then_finetune(ds.train(), cfg);
  const std::size_t steps_per_epoch = (ds.train().rows() + cfg.batch_size - 1) / cfg.batch_size;
  EXPECT_EQ(p.model.encoder.step_count(), steps_per_epoch);
  EXPECT_EQ(p.pretrain.epochs.size(), 2u);
  EXPECT_EQ(p.finetune.epochs.size(), 1u);
}
