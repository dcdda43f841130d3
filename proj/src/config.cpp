#include "vqc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "vqc/errors.hpp"

namespace vqc {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTokensCollapseAblation: return "tokens-collapse-ablation";
    case ExperimentKind::kCodebookSizeSweep: return "codebook-size-sweep";
    case ExperimentKind::kCapacitySweep: return "capacity-sweep";
    case ExperimentKind::kSingleRun: return "single-run";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (auto k : {ExperimentKind::kTokensCollapseAblation, ExperimentKind::kCodebookSizeSweep,
                 ExperimentKind::kCapacitySweep, ExperimentKind::kSingleRun}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown experiment kind '" + text + "'");
}

std::size_t default_token_dim(std::size_t dim) { return dim >= 8 ? dim / 2 : 1; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse_u64(key, item)));
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  bool sweep_given = false;
  bool token_given = false;
  bool latent_given = false;
  const auto kv = parse_key_values(text);

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto sz = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_u64(k, v); };
  };
  auto u64 = [](std::uint64_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_u64(k, v); };
  };
  auto f64 = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_f64(k, v); };
  };
  double cluster_std = 1.0;
  const std::map<std::string, Setter> setters = {
      {"experiment.kind", [&](const std::string&, const std::string& v) { cfg.kind = parse_experiment_kind(v); }},
      {"experiment.id", [&](const std::string&, const std::string& v) { cfg.id = v; }},
      {"data.dim", sz(cfg.data.dim)},
      {"data.n_clusters", sz(cfg.data.n_clusters)},
      {"data.points_per_cluster", sz(cfg.data.points_per_cluster)},
      {"data.seed", u64(cfg.data.seed)},
      {"data.cluster_std", f64(cluster_std)},
      {"data.test_fraction", f64(cfg.data.test_fraction)},
      {"train.epochs", sz(cfg.train.epochs)},
      {"train.pretrain_epochs", sz(cfg.train.pretrain_epochs)},
      {"train.batch_size", sz(cfg.train.batch_size)},
      {"train.lr", f64(cfg.train.lr)},
      {"train.weight_decay", f64(cfg.train.weight_decay)},
      {"train.gamma", f64(cfg.train.gamma)},
      {"train.beta", f64(cfg.train.beta)},
      {"train.codebook_size", sz(cfg.train.codebook_size)},
      {"train.hidden_dim", sz(cfg.train.hidden_dim)},
      {"train.encoder_hidden_dim", sz(cfg.train.encoder_hidden_dim)},
      {"train.latent_dim", [&](const std::string& k, const std::string& v) { cfg.train.latent_dim = parse_u64(k, v); latent_given = true; }},
      {"train.token_dim", [&](const std::string& k, const std::string& v) { cfg.train.token_dim = parse_u64(k, v); token_given = true; }},
      {"train.kmeans_iters", sz(cfg.train.kmeans_iters)},
      {"arms.baseline_epochs", sz(cfg.arms.baseline_epochs)},
      {"arms.pretrain_epochs", sz(cfg.arms.pretrain_epochs)},
      {"arms.finetune_epochs", sz(cfg.arms.finetune_epochs)},
      {"sweep.values", [&](const std::string& k, const std::string& v) { cfg.sweep_values = parse_list<std::size_t>(k, v); sweep_given = true; }},
      {"run.seeds", [&](const std::string& k, const std::string& v) { cfg.seeds = parse_list<std::uint64_t>(k, v); }},
      {"run.workers", sz(cfg.workers)},
      {"output.dir", [&](const std::string&, const std::string& v) { cfg.output_dir = v; }},
      {"eval.coverage_epsilon", f64(cfg.coverage_epsilon)},
      {"eval.ood_threshold", f64(cfg.ood_threshold)},
  };
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }

  cfg.data.cluster_stds.assign(cfg.data.n_clusters, cluster_std);
  if (cfg.id.empty()) cfg.id = to_string(cfg.kind);
  if (!token_given) cfg.train.token_dim = default_token_dim(cfg.data.dim);
  if (!latent_given) cfg.train.latent_dim = cfg.data.dim;
  if (!sweep_given) {
    switch (cfg.kind) {
      case ExperimentKind::kTokensCollapseAblation: cfg.sweep_values = {2, 3, 8}; break;
      case ExperimentKind::kCodebookSizeSweep: cfg.sweep_values = {32, 128, 512, 2048}; break;
      case ExperimentKind::kCapacitySweep: cfg.sweep_values = {4, 8, 16, 32}; break;
      case ExperimentKind::kSingleRun: break;
    }
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (kind != ExperimentKind::kSingleRun && sweep_values.empty()) {
    throw ConfigError("sweep.values must not be empty for " + to_string(kind));
  }
  for (std::size_t v : sweep_values) {
    if (v == 0) throw ConfigError("sweep values must be positive");
  }
  if (kind == ExperimentKind::kCodebookSizeSweep) {
    for (std::size_t i = 1; i < sweep_values.size(); ++i) {
      if (sweep_values[i] <= sweep_values[i - 1]) throw ConfigError("codebook sizes must be ascending");
    }
  }
  if (workers == 0) throw ConfigError("run.workers must be >= 1");
  if (!(coverage_epsilon > 0.0) || !(ood_threshold > 0.0)) {
    throw ConfigError("eval thresholds must be positive");
  }
  if (data.dim == 0 || data.n_clusters == 0 || data.points_per_cluster == 0) {
    throw ConfigError("data dims and counts must be positive");
  }
  train.validate();
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string render_experiment_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  const double cluster_std = cfg.data.cluster_stds.empty() ? 1.0 : cfg.data.cluster_stds.front();
  os << "experiment.kind = " << to_string(cfg.kind) << "\n"
     << "experiment.id = " << cfg.id << "\n"
     << "data.dim = " << cfg.data.dim << "\n"
     << "data.n_clusters = " << cfg.data.n_clusters << "\n"
     << "data.points_per_cluster = " << cfg.data.points_per_cluster << "\n"
     << "data.seed = " << cfg.data.seed << "\n"
     << "data.cluster_std = " << fmt_double(cluster_std) << "\n"
     << "data.test_fraction = " << fmt_double(cfg.data.test_fraction) << "\n"
     << "train.epochs = " << cfg.train.epochs << "\n"
     << "train.pretrain_epochs = " << cfg.train.pretrain_epochs << "\n"
     << "train.batch_size = " << cfg.train.batch_size << "\n"
     << "train.lr = " << fmt_double(cfg.train.lr) << "\n"
     << "train.weight_decay = " << fmt_double(cfg.train.weight_decay) << "\n"
     << "train.gamma = " << fmt_double(cfg.train.gamma) << "\n"
     << "train.beta = " << fmt_double(cfg.train.beta) << "\n"
     << "train.codebook_size = " << cfg.train.codebook_size << "\n"
     << "train.hidden_dim = " << cfg.train.hidden_dim << "\n"
     << "train.encoder_hidden_dim = " << cfg.train.encoder_hidden_dim << "\n"
     << "train.latent_dim = " << cfg.train.latent_dim << "\n"
     << "train.token_dim = " << cfg.train.token_dim << "\n"
     << "train.kmeans_iters = " << cfg.train.kmeans_iters << "\n"
     << "arms.baseline_epochs = " << cfg.arms.baseline_epochs << "\n"
     << "arms.pretrain_epochs = " << cfg.arms.pretrain_epochs << "\n"
     << "arms.finetune_epochs = " << cfg.arms.finetune_epochs << "\n";
  if (!cfg.sweep_values.empty()) os << "sweep.values = " << join(cfg.sweep_values) << "\n";
  os << "run.seeds = " << join(cfg.seeds) << "\n"
     << "run.workers = " << cfg.workers << "\n"
     << "output.dir = " << cfg.output_dir.string() << "\n"
     << "eval.coverage_epsilon = " << fmt_double(cfg.coverage_epsilon) << "\n"
     << "eval.ood_threshold = " << fmt_double(cfg.ood_threshold) << "\n";
  return os.str();
}

}  // namespace vqc
