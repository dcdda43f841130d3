#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "vqc/codebook.hpp"
#include "vqc/matrix.hpp"
#include "vqc/synthdata.hpp"
#include "vqc/vqvae.hpp"

namespace vqc {

inline constexpr double kDefaultCoverageEpsilon = 3.0;
inline constexpr double kDefaultOodThreshold = 4.0;

struct TokenAllocation {
  std::vector<std::size_t> usage_histogram;                   // S
  std::vector<std::vector<std::size_t>> allocation_per_cluster;  // n_clusters x S sample counts
  std::vector<std::size_t> distinct_tokens_per_cluster;       // n_clusters
  double allocation_entropy_ratio = 0.0;
};

struct CollapseReport {
  double codebook_perplexity = 0.0;
  std::vector<std::size_t> usage_histogram;
  std::vector<std::vector<std::size_t>> allocation_per_cluster;
  double allocation_entropy_ratio = 0.0;
  double mode_coverage = 0.0;
  double ood_fraction = 0.0;
  double test_mse = 0.0;
  double dead_token_fraction = 0.0;
};

/// Entropy of the distinct-token counts divided by ln(n_clusters); 1 means every
/// cluster is served by the same number of distinct tokens.
double allocation_entropy_ratio(std::span<const std::size_t> distinct_tokens_per_cluster);

/// `labels` gives the cluster of each sample; a sample with several tokens
/// contributes each of them to its cluster.
TokenAllocation token_allocation(const Assignment& assignment, std::span<const std::size_t> labels,
                                 std::size_t codebook_size, std::size_t n_clusters);

/// Fraction of clusters c with some point p such that |p - mean_c| / std_c <= epsilon.
double mode_coverage(const Matrix& points, const Matrix& cluster_means,
                     std::span<const double> cluster_stds, double epsilon);

/// Fraction of points whose std-scaled distance to the nearest cluster mean exceeds threshold.
double ood_fraction(const Matrix& points, const Matrix& cluster_means,
                    std::span<const double> cluster_stds, double threshold);

/// Model-level diagnostics on the held-out split of `ds`.
TokenAllocation token_allocation(const VqVae& model, const GaussianMixtureDataset& ds);

/// Decoded tokens in generator coordinates. With one token per sample every codebook
/// entry is decoded; otherwise the distinct token tuples used on the held-out split are.
Matrix decoded_tokens(const VqVae& model, const GaussianMixtureDataset& ds);

double mode_coverage(const VqVae& model, const GaussianMixtureDataset& ds,
                     double epsilon = kDefaultCoverageEpsilon);
double ood_fraction(const VqVae& model, const GaussianMixtureDataset& ds,
                    double threshold = kDefaultOodThreshold);

CollapseReport evaluate(const VqVae& model, const GaussianMixtureDataset& ds,
                        double epsilon = kDefaultCoverageEpsilon,
                        double threshold = kDefaultOodThreshold);

}  // namespace vqc
