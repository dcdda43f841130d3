#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqc/artifacts.hpp"
#include "vqc/config.hpp"
#include "vqc/diagnostics.hpp"
#include "vqc/errors.hpp"
#include "vqc/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

using nlohmann::json;

std::size_t parse_workers(const std::string& text, const char* source) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size() || n == 0) {
    throw vqc::ConfigError(std::string(source) + " must be a positive integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(n);
}

json report_json(const vqc::CollapseReport& r) {
  return {{"codebook_perplexity", r.codebook_perplexity},
          {"usage_histogram", r.usage_histogram},
          {"allocation_per_cluster", r.allocation_per_cluster},
          {"allocation_entropy_ratio", r.allocation_entropy_ratio},
          {"mode_coverage", r.mode_coverage},
          {"ood_fraction", r.ood_fraction},
          {"test_mse", r.test_mse},
          {"dead_token_fraction", r.dead_token_fraction}};
}

json mlp_json(const vqc::Mlp& net) {
  json dims = json::array();
  dims.push_back(net.layers().front().in_dim());
  for (const auto& l : net.layers()) dims.push_back(l.out_dim());
  return {{"dims", dims}, {"optimizer_steps", net.step_count()}};
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& out,
            const std::optional<std::string>& workers, const std::optional<std::uint64_t>& seed_override) {
  vqc::ExperimentConfig cfg = vqc::load_experiment_config(config_path);
  if (out) cfg.output_dir = *out;
  if (seed_override) cfg.seeds = {*seed_override};
  if (workers) {
    cfg.workers = parse_workers(*workers, "--workers");
  } else if (const char* env = std::getenv("VQC_WORKERS"); env && *env) {
    cfg.workers = parse_workers(env, "VQC_WORKERS");
  }
  cfg.validate();
  vqc::RunOptions opts;
  opts.workers = cfg.workers;
  opts.quiet = false;
  const vqc::ExperimentOutcome outcome = vqc::run_experiment(cfg, opts);
  std::size_t resumed = 0, diverged = 0;
  for (const auto& c : outcome.cells) {
    resumed += c.resumed;
    diverged += c.diverged;
  }
  std::printf("%s: %zu cells (%zu resumed, %zu diverged) -> %s\n", cfg.id.c_str(), outcome.cells.size(),
              resumed, diverged, cfg.output_dir.string().c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, double eps, double thr) {
  const vqc::VqVae model = vqc::artifacts::load_checkpoint(checkpoint);
  const vqc::GaussianMixtureDataset ds = vqc::artifacts::load_dataset(dataset);
  if (model.encoder.layers().front().in_dim() != ds.spec.dim) {
    throw vqc::ConfigError("checkpoint expects " + std::to_string(model.encoder.layers().front().in_dim()) +
                           "-dim input, dataset has dim " + std::to_string(ds.spec.dim));
  }
  std::cout << report_json(vqc::evaluate(model, ds, eps, thr)).dump(2) << "\n";
  return 0;
}

int cmd_dump(const std::string& path) {
  const auto bytes = vqc::artifacts::read_file(path);
  json j;
  switch (vqc::artifacts::peek_kind(bytes)) {
    case vqc::artifacts::ArtifactKind::kCheckpoint: {
      const vqc::VqVae m = vqc::artifacts::decode_checkpoint(bytes);
      const vqc::Matrix& t = m.codebook.tokens();
      json tokens = json::array();
      for (std::size_t k = 0; k < t.rows(); ++k) {
        const auto row = t.row(k);
        tokens.push_back(std::vector<double>(row.begin(), row.end()));
      }
      j = {{"kind", "checkpoint"},
           {"beta", m.beta},
           {"encoder", mlp_json(m.encoder)},
           {"decoder", mlp_json(m.decoder)},
           {"codebook", {{"size", m.codebook.size()},
                         {"token_dim", m.codebook.dim()},
                         {"gamma", m.codebook.gamma()},
                         {"ema_count", m.codebook.ema_count()},
                         {"tokens", tokens}}}};
      break;
    }
    case vqc::artifacts::ArtifactKind::kDataset: {
      const vqc::GaussianMixtureDataset ds = vqc::artifacts::decode_dataset(bytes);
      j = {{"kind", "dataset"},
           {"n_clusters", ds.spec.n_clusters},
           {"points_per_cluster", ds.spec.points_per_cluster},
           {"dim", ds.spec.dim},
           {"seed", ds.spec.seed},
           {"train_size", ds.train_indices.size()},
           {"test_size", ds.test_indices.size()}};
      break;
    }
    case vqc::artifacts::ArtifactKind::kDump: {
      const vqc::artifacts::Dump d = vqc::artifacts::decode_dump(bytes);
      j = {{"kind", "dump"},
           {"samples", d.embeddings.rows()},
           {"latent_dim", d.embeddings.cols()},
           {"codebook_size", d.tokens.rows()},
           {"token_dim", d.tokens.cols()},
           {"assignments", d.assignment.size()}};
      break;
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VQ-VAE collapse experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out, workers;
  std::optional<std::uint64_t> seed_override;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out, "Output directory (overrides output.dir)");
  run->add_option("--workers", workers, "Parallel cells (falls back to VQC_WORKERS, then run.workers)");
  run->add_option("--seed-override", seed_override, "Run only this seed");

  std::string checkpoint, dataset;
  double eps = vqc::kDefaultCoverageEpsilon;
  double thr = vqc::kDefaultOodThreshold;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset and print the report as JSON");
  eval->add_option("checkpoint", checkpoint)->required();
  eval->add_option("dataset", dataset)->required();
  eval->add_option("--coverage-epsilon", eps, "Mode coverage radius in cluster stds");
  eval->add_option("--ood-threshold", thr, "Out-of-distribution distance in cluster stds");

  std::string artifact;
  auto* dump = app.add_subcommand("dump", "Print a JSON summary of a checkpoint, dataset or dump file");
  dump->add_option("artifact", artifact)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out, workers, seed_override);
    if (*eval) return cmd_eval(checkpoint, dataset, eps, thr);
    if (*dump) return cmd_dump(artifact);
  } catch (const vqc::ConfigError& e) {
    std::fprintf(stderr, "vqc: config error: %s\n", e.what());
    return kExitConfig;
  } catch (const vqc::DivergenceError& e) {
    std::fprintf(stderr, "vqc: numeric divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const vqc::IoError& e) {
    std::fprintf(stderr, "vqc: I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vqc: %s\n", e.what());
    return 1;
  }
  return 0;
}
