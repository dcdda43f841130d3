#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vqc/matrix.hpp"

namespace vqc {

/// Parameters of an isotropic Gaussian mixture.
struct MixtureSpec {
  std::size_t n_clusters = 10;
  std::size_t points_per_cluster = 1000;
  std::size_t dim = 2;
  /// n_clusters x dim. Left empty, generate() places the means itself.
  Matrix cluster_means;
  /// One std per cluster. Left empty, every cluster uses std 1.
  std::vector<double> cluster_stds;
  std::uint64_t seed = 0;
  /// Held-out share used for evaluation.
  double test_fraction = 0.1;
};

/// Minimum mean separation, in units of the largest cluster std.
inline constexpr double kMinSeparationInStds = 6.0;
/// Separation targeted when generate() places the means.
inline constexpr double kGeneratedSeparation = 8.0;

/// Per-dimension affine normalization to zero mean and unit variance.
struct StandardScaler {
  std::vector<double> mean;
  std::vector<double> std;

  static StandardScaler fit(const Matrix& samples);
  Matrix transform(const Matrix& points) const;
  Matrix inverse_transform(const Matrix& points) const;
};

struct GaussianMixtureDataset {
  Matrix samples;  // scaled
  std::vector<std::size_t> labels;
  StandardScaler scaler;
  MixtureSpec spec;  // means and stds are always populated, in generator coordinates
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  Matrix train() const { return gather_rows(samples, train_indices); }
  Matrix test() const { return gather_rows(samples, test_indices); }
  std::vector<std::size_t> train_labels() const;
  std::vector<std::size_t> test_labels() const;
};

/// Deterministic for a fixed spec. Throws ConfigError when the means are too close.
GaussianMixtureDataset generate(const MixtureSpec& spec);

/// Places n well-separated means: a ring in 2-D, greedy max-min dispersion otherwise.
Matrix place_cluster_means(std::size_t n_clusters, std::size_t dim, double separation,
                           std::uint64_t seed);

/// Smallest pairwise distance between rows.
double min_pairwise_distance(const Matrix& points);

/// Shuffled index blocks covering 0..n-1 exactly once; the last block may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

std::vector<Matrix> batches(const Matrix& samples, std::size_t batch_size,
                            std::uint64_t epoch_seed);
std::vector<Matrix> batches(const GaussianMixtureDataset& ds, std::size_t batch_size,
                            std::uint64_t epoch_seed);

/// Maps scaled points back to generator coordinates.
Matrix unscale(const GaussianMixtureDataset& ds, const Matrix& points);

}  // namespace vqc
