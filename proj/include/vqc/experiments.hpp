#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vqc/config.hpp"
#include "vqc/diagnostics.hpp"
#include "vqc/report.hpp"
#include "vqc/vqvae.hpp"

namespace vqc {

/// One independent training run: an (arm, seed, sweep value) cell of an experiment.
struct CellSpec {
  std::string experiment;
  std::string arm;  // "baseline" or "remedy"
  std::uint64_t seed = 0;
  std::uint64_t sweep_value = 0;
  MixtureSpec data;
  TrainConfig train;

  /// File-name-safe identifier, unique within an experiment.
  std::string key() const;
};

struct CellResult {
  CellSpec spec;
  ReportRow row;
  bool diverged = false;
  std::string error;
  std::optional<double> init_perplexity;
  TrainTrace pretrain;
  TrainTrace finetune;
  bool resumed = false;  // loaded from a previous invocation instead of trained
};

inline constexpr const char* kTrendHeader = "experiment,seed,series,sweep_values,values,monotone";

struct TrendRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string series;
  std::vector<std::uint64_t> sweep_values;
  std::vector<double> values;
  std::string monotone;  // "constant", "non-decreasing", "non-increasing" or "none"
};

struct ExperimentOutcome {
  std::vector<CellResult> cells;  // canonical plan order
  std::vector<PairedSummary> summaries;
  std::vector<TrendRow> trends;
};

struct RunOptions {
  std::size_t workers = 1;
  bool write_files = true;
  bool quiet = true;
};

/// Baseline trains cfg.arms.baseline_epochs without pretraining; remedy pretrains an
/// autoencoder for cfg.arms.pretrain_epochs and fine-tunes for cfg.arms.finetune_epochs.
TrainConfig arm_config(const ExperimentConfig& cfg, const std::string& arm);

/// The cells an experiment consists of, in canonical order.
std::vector<CellSpec> plan_cells(const ExperimentConfig& cfg);

/// Trains and evaluates one cell. Divergence is captured in the result, not thrown.
CellResult run_cell(const CellSpec& spec, const GaussianMixtureDataset& ds, double coverage_epsilon,
                    double ood_threshold, VqVae* model_out = nullptr);

std::string monotone_label(const std::vector<double>& values);
std::string format_trend_row(const TrendRow& row);

std::vector<PairedSummary> paired_summaries(const std::vector<CellResult>& cells);
std::vector<TrendRow> trend_rows(const ExperimentConfig& cfg, const std::vector<CellResult>& cells);

ExperimentOutcome run_tokens_collapse_ablation(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutcome run_codebook_size_sweep(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutcome run_capacity_sweep(const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Also writes checkpoint.vqc, dataset.vqc and dump.vqc; rethrows DivergenceError.
ExperimentOutcome run_single(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Dispatches on cfg.kind. With write_files set, output goes to cfg.output_dir:
/// report.csv, summary.csv, trend.csv, manifest.json and cells/<key>.json. Cells with
/// an existing cells/<key>.json are loaded rather than retrained.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace vqc
