#include "vqc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vqc/errors.hpp"

namespace vqc {

double allocation_entropy_ratio(std::span<const std::size_t> distinct_tokens_per_cluster) {
  const std::size_t n = distinct_tokens_per_cluster.size();
  if (n <= 1) return 1.0;
  double total = 0.0;
  for (std::size_t c : distinct_tokens_per_cluster) total += static_cast<double>(c);
  if (total == 0.0) return 0.0;
  double entropy = 0.0;
  for (std::size_t c : distinct_tokens_per_cluster) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  return std::clamp(entropy / std::log(static_cast<double>(n)), 0.0, 1.0);
}

TokenAllocation token_allocation(const Assignment& assignment, std::span<const std::size_t> labels,
                                 std::size_t codebook_size, std::size_t n_clusters) {
  if (labels.empty() || assignment.size() % labels.size() != 0) {
    throw UsageError("assignment length must be a multiple of the label count");
  }
  const std::size_t per_sample = assignment.size() / labels.size();
  TokenAllocation out;
  out.usage_histogram = usage_histogram(assignment, codebook_size);
  out.allocation_per_cluster.assign(n_clusters, std::vector<std::size_t>(codebook_size, 0));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t label = labels[i / per_sample];
    if (label >= n_clusters) throw UsageError("label out of range");
    ++out.allocation_per_cluster[label][assignment.indices[i]];
  }
  out.distinct_tokens_per_cluster.resize(n_clusters);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    const auto& row = out.allocation_per_cluster[c];
    out.distinct_tokens_per_cluster[c] = static_cast<std::size_t>(
        std::count_if(row.begin(), row.end(), [](std::size_t v) { return v > 0; }));
  }
  out.allocation_entropy_ratio = allocation_entropy_ratio(out.distinct_tokens_per_cluster);
  return out;
}

namespace {

void check_mixture(const Matrix& points, const Matrix& means, std::span<const double> stds) {
  if (means.rows() != stds.size()) throw UsageError("need one std per cluster mean");
  if (points.rows() > 0 && points.cols() != means.cols()) {
    throw UsageError("points and cluster means differ in dimension");
  }
}

double scaled_distance(std::span<const double> p, std::span<const double> mean, double std) {
  return std::sqrt(squared_distance(p, mean)) / std;
}

}  // namespace

double mode_coverage(const Matrix& points, const Matrix& cluster_means,
                     std::span<const double> cluster_stds, double epsilon) {
  check_mixture(points, cluster_means, cluster_stds);
  if (cluster_means.rows() == 0) return 0.0;
  std::size_t covered = 0;
  for (std::size_t c = 0; c < cluster_means.rows(); ++c) {
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (scaled_distance(points.row(i), cluster_means.row(c), cluster_stds[c]) <= epsilon) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(cluster_means.rows());
}

double ood_fraction(const Matrix& points, const Matrix& cluster_means,
                    std::span<const double> cluster_stds, double threshold) {
  check_mixture(points, cluster_means, cluster_stds);
  if (points.rows() == 0) return 0.0;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cluster_means.rows(); ++c) {
      nearest = std::min(nearest, scaled_distance(points.row(i), cluster_means.row(c), cluster_stds[c]));
    }
    if (nearest > threshold) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(points.rows());
}

TokenAllocation token_allocation(const VqVae& model, const GaussianMixtureDataset& ds) {
  const Quantized q = model.quantize_latents(model.encode(ds.test()));
  return token_allocation(q.assignment, ds.test_labels(), model.codebook.size(),
                          ds.spec.n_clusters);
}

Matrix decoded_tokens(const VqVae& model, const GaussianMixtureDataset& ds) {
  if (model.tokens_per_sample() == 1) {
    return unscale(ds, model.decode(model.codebook.tokens()));
  }
  const Quantized q = model.quantize_latents(model.encode(ds.test()));
  const std::size_t per = model.tokens_per_sample();
  std::map<std::vector<std::size_t>, std::size_t> seen;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < q.values.rows(); ++r) {
    std::vector<std::size_t> key(q.assignment.indices.begin() + static_cast<std::ptrdiff_t>(r * per),
                                 q.assignment.indices.begin() + static_cast<std::ptrdiff_t>((r + 1) * per));
    if (seen.emplace(std::move(key), r).second) rows.push_back(r);
  }
  return unscale(ds, model.decode(gather_rows(q.values, rows)));
}

double mode_coverage(const VqVae& model, const GaussianMixtureDataset& ds, double epsilon) {
  return mode_coverage(decoded_tokens(model, ds), ds.spec.cluster_means, ds.spec.cluster_stds,
                       epsilon);
}

double ood_fraction(const VqVae& model, const GaussianMixtureDataset& ds, double threshold) {
  return ood_fraction(unscale(ds, model.reconstruct(ds.test())), ds.spec.cluster_means,
                      ds.spec.cluster_stds, threshold);
}

CollapseReport evaluate(const VqVae& model, const GaussianMixtureDataset& ds, double epsilon,
                        double threshold) {
  const Matrix test = ds.test();
  if (test.rows() == 0) throw UsageError("dataset has no held-out samples");
  const Quantized q = model.quantize_latents(model.encode(test));
  const Matrix recon = model.decode(q.values);
  const TokenAllocation alloc =
      token_allocation(q.assignment, ds.test_labels(), model.codebook.size(), ds.spec.n_clusters);

  CollapseReport r;
  r.codebook_perplexity = perplexity(q.assignment, model.codebook.size());
  r.usage_histogram = alloc.usage_histogram;
  r.allocation_per_cluster = alloc.allocation_per_cluster;
  r.allocation_entropy_ratio = alloc.allocation_entropy_ratio;
  r.mode_coverage = mode_coverage(decoded_tokens(model, ds), ds.spec.cluster_means,
                                  ds.spec.cluster_stds, epsilon);
  r.ood_fraction =
      ood_fraction(unscale(ds, recon), ds.spec.cluster_means, ds.spec.cluster_stds, threshold);
  r.test_mse = mse(recon, test);
  const auto dead = std::count(r.usage_histogram.begin(), r.usage_histogram.end(), std::size_t{0});
  r.dead_token_fraction = static_cast<double>(dead) / static_cast<double>(model.codebook.size());
  return r;
}

}  // namespace vqc
