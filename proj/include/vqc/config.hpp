#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vqc/synthdata.hpp"
#include "vqc/vqvae.hpp"

namespace vqc {

enum class ExperimentKind { kTokensCollapseAblation, kCodebookSizeSweep, kCapacitySweep, kSingleRun };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);

/// Epoch budgets of the two training arms.
struct ArmSchedule {
  std::size_t baseline_epochs = 200;
  std::size_t pretrain_epochs = 100;
  std::size_t finetune_epochs = 100;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingleRun;
  std::string id;  // defaults to the kind name
  MixtureSpec data;
  TrainConfig train;
  ArmSchedule arms;
  /// Dims for the ablation, codebook sizes for the size sweep, encoder widths for the capacity sweep.
  std::vector<std::size_t> sweep_values;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output_dir = "vqc-out";
  double coverage_epsilon = 3.0;
  double ood_threshold = 4.0;
  std::size_t workers = 1;

  void validate() const;
};

/// Flat `key = value` text; `#` starts a comment; lists are comma separated.
/// Recognized keys are listed in the README. Unknown keys are a ConfigError.
std::map<std::string, std::string> parse_key_values(const std::string& text);
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical key = value rendering; parse_experiment_config(render(cfg)) == cfg.
std::string render_experiment_config(const ExperimentConfig& cfg);

/// Token width used for `dim`-dimensional synthetic data: 1 below dim 8, dim / 2 from 8 up.
/// The encoder output width defaults to `dim`, so a sample carries dim / token_dim tokens.
std::size_t default_token_dim(std::size_t dim);

}  // namespace vqc
