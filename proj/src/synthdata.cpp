#include "vqc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "vqc/errors.hpp"

namespace vqc {

StandardScaler StandardScaler::fit(const Matrix& samples) {
  if (samples.rows() == 0) throw UsageError("cannot fit a scaler on zero samples");
  StandardScaler s;
  const std::size_t d = samples.cols();
  const double n = static_cast<double>(samples.rows());
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += samples(r, c);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = samples(r, c) - s.mean[c];
      s.std[c] += diff * diff;
    }
  }
  // Population std, as sklearn's StandardScaler; constant columns scale by 1.
  for (double& v : s.std) {
    v = std::sqrt(v / n);
    if (v == 0.0) v = 1.0;
  }
  return s;
}

Matrix StandardScaler::transform(const Matrix& points) const {
  if (points.cols() != mean.size()) throw UsageError("scaler dimension mismatch");
  Matrix out = points;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / std[c];
  }
  return out;
}

Matrix StandardScaler::inverse_transform(const Matrix& points) const {
  if (points.cols() != mean.size()) throw UsageError("scaler dimension mismatch");
  Matrix out = points;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * std[c] + mean[c];
  }
  return out;
}

std::vector<std::size_t> GaussianMixtureDataset::train_labels() const {
  std::vector<std::size_t> out;
  out.reserve(train_indices.size());
  for (std::size_t i : train_indices) out.push_back(labels[i]);
  return out;
}

std::vector<std::size_t> GaussianMixtureDataset::test_labels() const {
  std::vector<std::size_t> out;
  out.reserve(test_indices.size());
  for (std::size_t i : test_indices) out.push_back(labels[i]);
  return out;
}

double min_pairwise_distance(const Matrix& points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t j = i + 1; j < points.rows(); ++j) {
      best = std::min(best, std::sqrt(squared_distance(points.row(i), points.row(j))));
    }
  }
  return best;
}

Matrix place_cluster_means(std::size_t n_clusters, std::size_t dim, double separation,
                           std::uint64_t seed) {
  if (n_clusters == 0 || dim == 0) throw ConfigError("mixture needs >= 1 cluster and dim >= 1");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix means(n_clusters, dim);
  if (n_clusters == 1) return means;

  if (dim == 2) {
    // Adjacent ring points are the closest pair; size the radius so their chord is 1.25x separation.
    const double step = 2.0 * std::numbers::pi / static_cast<double>(n_clusters);
    const double radius = 1.25 * separation / (2.0 * std::sin(step / 2.0));
    const double phase = std::uniform_real_distribution<double>(0.0, step)(rng);
    for (std::size_t k = 0; k < n_clusters; ++k) {
      const double angle = phase + step * static_cast<double>(k);
      means(k, 0) = radius * std::cos(angle);
      means(k, 1) = radius * std::sin(angle);
    }
    return means;
  }

  // Greedy max-min selection from uniform candidates in a box that grows until the
  // separation target is met.
  const std::size_t n_candidates = std::max<std::size_t>(64 * n_clusters, 512);
  double half_width =
      separation * std::pow(static_cast<double>(n_clusters), 1.0 / static_cast<double>(dim));
  for (int attempt = 0; attempt < 64; ++attempt, half_width *= 1.25) {
    std::uniform_real_distribution<double> coord(-half_width, half_width);
    Matrix cand(n_candidates, dim);
    for (double& v : cand.data()) v = coord(rng);
    std::vector<double> min_d(n_candidates, std::numeric_limits<double>::infinity());
    std::size_t pick = 0;
    for (std::size_t k = 0; k < n_clusters; ++k) {
      auto src = cand.row(pick);
      std::copy(src.begin(), src.end(), means.row(k).begin());
      for (std::size_t c = 0; c < n_candidates; ++c) {
        min_d[c] = std::min(min_d[c], squared_distance(cand.row(c), means.row(k)));
      }
      pick = static_cast<std::size_t>(
          std::distance(min_d.begin(), std::max_element(min_d.begin(), min_d.end())));
    }
    if (min_pairwise_distance(means) >= separation) return means;
  }
  throw ConfigError("could not place well-separated cluster means");
}

GaussianMixtureDataset generate(const MixtureSpec& spec_in) {
  MixtureSpec spec = spec_in;
  if (spec.n_clusters == 0 || spec.points_per_cluster == 0 || spec.dim == 0) {
    throw ConfigError("mixture needs clusters, points and dim >= 1");
  }
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (spec.cluster_stds.empty()) spec.cluster_stds.assign(spec.n_clusters, 1.0);
  if (spec.cluster_stds.size() != spec.n_clusters) {
    throw ConfigError("need one std per cluster");
  }
  for (double s : spec.cluster_stds) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("cluster stds must be positive");
  }
  if (spec.cluster_means.empty()) {
    const double max_std = *std::max_element(spec.cluster_stds.begin(), spec.cluster_stds.end());
    spec.cluster_means = place_cluster_means(
        spec.n_clusters, spec.dim,
        std::max(kGeneratedSeparation, kMinSeparationInStds * max_std), spec.seed);
  }
  if (spec.cluster_means.rows() != spec.n_clusters || spec.cluster_means.cols() != spec.dim) {
    throw ConfigError("cluster_means must be n_clusters x dim");
  }
  const double max_std = *std::max_element(spec.cluster_stds.begin(), spec.cluster_stds.end());
  if (spec.n_clusters > 1 &&
      min_pairwise_distance(spec.cluster_means) < kMinSeparationInStds * max_std) {
    throw ConfigError("cluster means closer than " + std::to_string(kMinSeparationInStds) +
                      "x the largest cluster std");
  }

  const std::size_t n = spec.n_clusters * spec.points_per_cluster;
  Matrix raw(n, spec.dim);
  std::vector<std::size_t> labels(n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t r = 0;
  for (std::size_t k = 0; k < spec.n_clusters; ++k) {
    for (std::size_t p = 0; p < spec.points_per_cluster; ++p, ++r) {
      labels[r] = k;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        raw(r, d) = spec.cluster_means(k, d) + spec.cluster_stds[k] * normal(rng);
      }
    }
  }

  GaussianMixtureDataset ds;
  ds.scaler = StandardScaler::fit(raw);
  ds.samples = ds.scaler.transform(raw);
  ds.labels = std::move(labels);
  ds.spec = std::move(spec);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(ds.spec.seed + 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_test = static_cast<std::size_t>(std::round(ds.spec.test_fraction * n));
  ds.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  ds.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Matrix> batches(const Matrix& samples, std::size_t batch_size,
                            std::uint64_t epoch_seed) {
  std::vector<Matrix> out;
  for (const auto& idx : batch_indices(samples.rows(), batch_size, epoch_seed)) {
    out.push_back(gather_rows(samples, idx));
  }
  return out;
}

std::vector<Matrix> batches(const GaussianMixtureDataset& ds, std::size_t batch_size,
                            std::uint64_t epoch_seed) {
  return batches(ds.samples, batch_size, epoch_seed);
}

Matrix unscale(const GaussianMixtureDataset& ds, const Matrix& points) {
  return ds.scaler.inverse_transform(points);
}

}  // namespace vqc
