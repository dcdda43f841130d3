#include "vqc/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vqc/artifacts.hpp"
#include "vqc/errors.hpp"

namespace vqc {

using nlohmann::json;

std::string CellSpec::key() const {
  return arm + "-s" + std::to_string(seed) + "-v" + std::to_string(sweep_value);
}

TrainConfig arm_config(const ExperimentConfig& cfg, const std::string& arm) {
  TrainConfig t = cfg.train;
  if (arm == "baseline") {
    t.pretrain_epochs = 0;
    t.epochs = cfg.arms.baseline_epochs;
  } else if (arm == "remedy") {
    t.pretrain_epochs = cfg.arms.pretrain_epochs;
    t.epochs = cfg.arms.finetune_epochs;
  } else {
    throw ConfigError("unknown arm '" + arm + "'");
  }
  return t;
}

std::vector<CellSpec> plan_cells(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<CellSpec> cells;
  auto add = [&](const std::string& arm, std::uint64_t seed, std::uint64_t value, MixtureSpec data,
                 TrainConfig train) {
    CellSpec c;
    c.experiment = cfg.id;
    c.arm = arm;
    c.seed = seed;
    c.sweep_value = value;
    c.data = std::move(data);
    c.train = std::move(train);
    c.train.seed = seed;
    cells.push_back(std::move(c));
  };
  switch (cfg.kind) {
    case ExperimentKind::kTokensCollapseAblation:
      for (std::size_t dim : cfg.sweep_values) {
        MixtureSpec data = cfg.data;
        data.dim = dim;
        for (std::uint64_t seed : cfg.seeds) {
          for (const char* arm : {"baseline", "remedy"}) {
            TrainConfig t = arm_config(cfg, arm);
            t.token_dim = default_token_dim(dim);
            t.latent_dim = dim;
            add(arm, seed, dim, data, t);
          }
        }
      }
      break;
    case ExperimentKind::kCodebookSizeSweep:
      for (std::size_t size : cfg.sweep_values) {
        for (std::uint64_t seed : cfg.seeds) {
          for (const char* arm : {"baseline", "remedy"}) {
            TrainConfig t = arm_config(cfg, arm);
            t.codebook_size = size;
            add(arm, seed, size, cfg.data, t);
          }
        }
      }
      break;
    case ExperimentKind::kCapacitySweep:
      for (std::size_t width : cfg.sweep_values) {
        for (std::uint64_t seed : cfg.seeds) {
          TrainConfig t = arm_config(cfg, "baseline");
          t.encoder_hidden_dim = width;
          add("baseline", seed, width, cfg.data, t);
        }
      }
      break;
    case ExperimentKind::kSingleRun: {
      const std::uint64_t seed = cfg.seeds.front();
      add(cfg.train.pretrain_epochs > 0 ? "remedy" : "baseline", seed, 0, cfg.data, cfg.train);
      break;
    }
  }
  return cells;
}

CellResult run_cell(const CellSpec& spec, const GaussianMixtureDataset& ds, double coverage_epsilon,
                    double ood_threshold, VqVae* model_out) {
  CellResult result;
  result.spec = spec;
  try {
    PipelineResult p = pretrain_then_finetune(ds.train(), spec.train);
    result.pretrain = std::move(p.pretrain);
    result.finetune = std::move(p.finetune);
    result.init_perplexity = result.finetune.init_perplexity;
    const CollapseReport report = evaluate(p.model, ds, coverage_epsilon, ood_threshold);
    result.row = make_report_row(spec.experiment, spec.arm, spec.seed, spec.sweep_value, report);
    if (model_out) *model_out = std::move(p.model);
  } catch (const DivergenceError& e) {
    result.diverged = true;
    result.error = e.what();
    const double nan = std::nan("");
    result.row = ReportRow{spec.experiment, spec.arm, spec.seed, spec.sweep_value, "diverged",
                           nan, nan, nan, nan, nan, nan};
  }
  return result;
}

std::string monotone_label(const std::vector<double>& values) {
  bool up = true;
  bool down = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] >= values[i - 1])) up = false;
    if (!(values[i] <= values[i - 1])) down = false;
  }
  if (up && down) return "constant";
  if (up) return "non-decreasing";
  if (down) return "non-increasing";
  return "none";
}

std::string format_trend_row(const TrendRow& row) {
  std::ostringstream os;
  os << row.experiment << ',' << row.seed << ',' << row.series << ',';
  for (std::size_t i = 0; i < row.sweep_values.size(); ++i) os << (i ? ";" : "") << row.sweep_values[i];
  os << ',';
  char buf[64];
  for (std::size_t i = 0; i < row.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", row.values[i]);
    os << (i ? ";" : "") << buf;
  }
  os << ',' << row.monotone;
  return os.str();
}

std::vector<PairedSummary> paired_summaries(const std::vector<CellResult>& cells) {
  std::vector<PairedSummary> out;
  std::map<std::pair<std::uint64_t, std::uint64_t>, const CellResult*> baselines;
  for (const auto& c : cells) {
    if (c.spec.arm == "baseline") baselines[{c.spec.seed, c.spec.sweep_value}] = &c;
  }
  for (const auto& c : cells) {
    if (c.spec.arm != "remedy") continue;
    auto it = baselines.find({c.spec.seed, c.spec.sweep_value});
    if (it == baselines.end()) continue;
    const CellResult& b = *it->second;
    PairedSummary s;
    s.experiment = c.spec.experiment;
    s.seed = c.spec.seed;
    s.sweep_value = c.spec.sweep_value;
    s.baseline_init_perplexity = b.init_perplexity.value_or(std::nan(""));
    s.remedy_init_perplexity = c.init_perplexity.value_or(std::nan(""));
    s.baseline = b.row;
    s.remedy = c.row;
    s.winner = (b.diverged || c.diverged) ? "diverged" : paired_winner(b.row, c.row);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrendRow> trend_rows(const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  std::vector<TrendRow> out;
  auto series = [&](std::uint64_t seed, const std::string& arm, auto metric) {
    std::vector<double> v;
    for (std::size_t value : cfg.sweep_values) {
      for (const auto& c : cells) {
        if (c.spec.seed == seed && c.spec.arm == arm && c.spec.sweep_value == value) v.push_back(metric(c));
      }
    }
    return v;
  };
  auto push = [&](std::uint64_t seed, const std::string& name, std::vector<double> values) {
    TrendRow r;
    r.experiment = cfg.id;
    r.seed = seed;
    r.series = name;
    r.sweep_values.assign(cfg.sweep_values.begin(), cfg.sweep_values.end());
    r.monotone = monotone_label(values);
    r.values = std::move(values);
    out.push_back(std::move(r));
  };
  for (std::uint64_t seed : cfg.seeds) {
    if (cfg.kind == ExperimentKind::kCodebookSizeSweep) {
      const auto remedy = series(seed, "remedy", [](const CellResult& c) { return c.row.perplexity; });
      const auto base = series(seed, "baseline", [](const CellResult& c) { return c.row.perplexity; });
      std::vector<double> gap(remedy.size());
      for (std::size_t i = 0; i < gap.size() && i < base.size(); ++i) gap[i] = remedy[i] - base[i];
      push(seed, "remedy_perplexity", remedy);
      push(seed, "baseline_perplexity", base);
      push(seed, "perplexity_gap", gap);
    } else if (cfg.kind == ExperimentKind::kCapacitySweep) {
      push(seed, "mode_coverage", series(seed, "baseline", [](const CellResult& c) { return c.row.mode_coverage; }));
      push(seed, "ood_fraction", series(seed, "baseline", [](const CellResult& c) { return c.row.ood_fraction; }));
      push(seed, "recon_mse", series(seed, "baseline", [](const CellResult& c) { return c.row.recon_mse; }));
    }
  }
  return out;
}

namespace {

// Everything that determines a cell's outcome; a stored cell is reused only if this matches.
std::string fingerprint(const CellSpec& spec, double eps, double thr) {
  ExperimentConfig c;
  c.id = spec.experiment;
  c.data = spec.data;
  c.train = spec.train;
  c.seeds = {spec.seed};
  c.output_dir = "";
  c.coverage_epsilon = eps;
  c.ood_threshold = thr;
  return render_experiment_config(c);
}

json trace_json(const TrainTrace& t) {
  json epochs = json::array();
  for (const auto& e : t.epochs) {
    epochs.push_back({{"recon_loss", e.recon_loss}, {"commit_loss", e.commit_loss},
                      {"perplexity", e.perplexity}, {"seconds", e.seconds}});
  }
  json j = {{"epochs", epochs}};
  if (t.init_perplexity) j["init_perplexity"] = *t.init_perplexity;
  if (t.init_objective) j["init_objective"] = *t.init_objective;
  return j;
}

// nlohmann writes non-finite doubles as null.
double number(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

TrainTrace trace_from_json(const json& j) {
  TrainTrace t;
  for (const auto& e : j.at("epochs")) {
    t.epochs.push_back({number(e.at("recon_loss")), number(e.at("commit_loss")),
                        number(e.at("perplexity")), number(e.at("seconds"))});
  }
  if (j.contains("init_perplexity")) t.init_perplexity = number(j["init_perplexity"]);
  if (j.contains("init_objective")) t.init_objective = number(j["init_objective"]);
  return t;
}

json cell_json(const CellResult& c, const ExperimentConfig& cfg) {
  json j = {{"experiment", c.spec.experiment}, {"arm", c.spec.arm},
            {"seed", c.spec.seed},             {"sweep_value", c.spec.sweep_value},
            {"diverged", c.diverged},          {"error", c.error},
            {"row", format_report_row(c.row)}, {"pretrain", trace_json(c.pretrain)},
            {"finetune", trace_json(c.finetune)}};
  j["fingerprint"] = fingerprint(c.spec, cfg.coverage_epsilon, cfg.ood_threshold);
  if (c.init_perplexity) j["init_perplexity"] = *c.init_perplexity;
  return j;
}

std::optional<CellResult> load_cell(const std::filesystem::path& path, const CellSpec& spec,
                                    const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    std::ifstream in(path);
    const json j = json::parse(in);
    if (j.at("fingerprint").get<std::string>() != fingerprint(spec, cfg.coverage_epsilon, cfg.ood_threshold)) {
      return std::nullopt;
    }
    CellResult c;
    c.spec = spec;
    c.row = parse_report_row(j.at("row").get<std::string>());
    if (c.row.experiment != spec.experiment || c.row.arm != spec.arm || c.row.seed != spec.seed ||
        c.row.sweep_value != spec.sweep_value) {
      return std::nullopt;
    }
    c.diverged = j.at("diverged").get<bool>();
    c.error = j.at("error").get<std::string>();
    if (j.contains("init_perplexity")) c.init_perplexity = number(j["init_perplexity"]);
    c.pretrain = trace_from_json(j.at("pretrain"));
    c.finetune = trace_from_json(j.at("finetune"));
    c.resumed = true;
    return c;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable record: retrain the cell
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

const GaussianMixtureDataset& dataset_for(std::map<std::size_t, GaussianMixtureDataset>& cache,
                                          const MixtureSpec& spec) {
  auto it = cache.find(spec.dim);
  if (it == cache.end()) it = cache.emplace(spec.dim, generate(spec)).first;
  return it->second;
}

ExperimentOutcome run_planned(const ExperimentConfig& cfg, const RunOptions& opts) {
  const std::vector<CellSpec> plan = plan_cells(cfg);
  std::map<std::size_t, GaussianMixtureDataset> datasets;
  for (const auto& c : plan) dataset_for(datasets, c.data);

  const std::filesystem::path out_dir = cfg.output_dir;
  const std::filesystem::path cells_dir = out_dir / "cells";
  if (opts.write_files) {
    std::error_code ec;
    std::filesystem::create_directories(cells_dir, ec);
    if (ec) throw IoError("cannot create " + cells_dir.string() + ": " + ec.message());
  }

  ExperimentOutcome outcome;
  outcome.cells.resize(plan.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    std::optional<CellResult> done;
    if (opts.write_files) done = load_cell(cells_dir / (plan[i].key() + ".json"), plan[i], cfg);
    if (done) {
      outcome.cells[i] = std::move(*done);
    } else {
      pending.push_back(i);
    }
  }

  const bool single = cfg.kind == ExperimentKind::kSingleRun;
  std::optional<VqVae> single_model;
  ReportAppender appender(out_dir / "report.partial.csv");
  if (opts.write_files && !pending.empty()) std::filesystem::remove(out_dir / "report.partial.csv");
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      const std::size_t i = pending[slot];
      try {
        VqVae model;
        CellResult r = run_cell(plan[i], datasets.at(plan[i].data.dim), cfg.coverage_epsilon,
                                cfg.ood_threshold, single ? &model : nullptr);
        if (opts.write_files) {
          write_text(cells_dir / (plan[i].key() + ".json"), cell_json(r, cfg).dump(1) + "\n");
          appender.append(r.row);
        }
        std::lock_guard lock(log_mutex);
        if (!opts.quiet) {
          std::fprintf(stderr, "[%s] %s%s\n", cfg.id.c_str(), plan[i].key().c_str(),
                       r.diverged ? " diverged" : "");
        }
        if (single && !r.diverged) single_model = std::move(model);
        outcome.cells[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next.store(pending.size());
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.workers, pending.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  outcome.summaries = paired_summaries(outcome.cells);
  outcome.trends = trend_rows(cfg, outcome.cells);

  if (opts.write_files) {
    std::vector<ReportRow> rows;
    for (const auto& c : outcome.cells) rows.push_back(c.row);
    write_report(out_dir / "report.csv", rows);
    std::filesystem::remove(out_dir / "report.partial.csv");
    if (!outcome.summaries.empty()) {
      std::string text = std::string(kSummaryHeader) + "\n";
      for (const auto& s : outcome.summaries) text += format_summary_row(s) + "\n";
      write_text(out_dir / "summary.csv", text);
    }
    if (!outcome.trends.empty()) {
      std::string text = std::string(kTrendHeader) + "\n";
      for (const auto& t : outcome.trends) text += format_trend_row(t) + "\n";
      write_text(out_dir / "trend.csv", text);
    }
    const json manifest = {{"report_schema_version", kReportSchemaVersion},
                           {"artifact_format_version", artifacts::kFormatVersion},
                           {"experiment", cfg.id},
                           {"kind", to_string(cfg.kind)},
                           {"workers", opts.workers},
                           {"threads_per_cell", 1},
                           {"mse_convention", "mean over elements"},
                           {"ema_count_update", "per-token L_k"},
                           {"config", render_experiment_config(cfg)}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

    if (single && single_model) {
      const GaussianMixtureDataset& ds = datasets.at(plan.front().data.dim);
      artifacts::save_checkpoint(out_dir / "checkpoint.vqc", *single_model);
      artifacts::save_dataset(out_dir / "dataset.vqc", ds);
      artifacts::save_dump(out_dir / "dump.vqc", artifacts::make_dump(*single_model, ds));
    }
  }
  return outcome;
}

void require_kind(const ExperimentConfig& cfg, ExperimentKind kind) {
  if (cfg.kind != kind) {
    throw ConfigError("config kind is " + to_string(cfg.kind) + ", expected " + to_string(kind));
  }
}

}  // namespace

ExperimentOutcome run_tokens_collapse_ablation(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_kind(cfg, ExperimentKind::kTokensCollapseAblation);
  return run_planned(cfg, opts);
}

ExperimentOutcome run_codebook_size_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_kind(cfg, ExperimentKind::kCodebookSizeSweep);
  return run_planned(cfg, opts);
}

ExperimentOutcome run_capacity_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_kind(cfg, ExperimentKind::kCapacitySweep);
  return run_planned(cfg, opts);
}

ExperimentOutcome run_single(const ExperimentConfig& cfg, const RunOptions& opts) {
  require_kind(cfg, ExperimentKind::kSingleRun);
  ExperimentOutcome out = run_planned(cfg, opts);
  const CellResult& cell = out.cells.front();
  if (cell.diverged) throw DivergenceError(cell.error);
  return out;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  switch (cfg.kind) {
    case ExperimentKind::kTokensCollapseAblation: return run_tokens_collapse_ablation(cfg, opts);
    case ExperimentKind::kCodebookSizeSweep: return run_codebook_size_sweep(cfg, opts);
    case ExperimentKind::kCapacitySweep: return run_capacity_sweep(cfg, opts);
    case ExperimentKind::kSingleRun: return run_single(cfg, opts);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace vqc
