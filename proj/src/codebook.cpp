#include "vqc/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "vqc/errors.hpp"

namespace vqc {

Codebook::Codebook(std::size_t size, std::size_t dim, double gamma)
    : tokens_(size, dim), ema_sum_(size, dim), ema_count_(size, 0.0), gamma_(gamma) {
  if (size == 0 || dim == 0) throw ConfigError("codebook size and token dim must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("EMA decay must lie in (0, 1)");
}

void Codebook::check_ready(const Matrix& embeddings) const {
  if (!initialized_) throw UsageError("codebook is not initialized");
  if (embeddings.cols() != dim()) {
    throw ConfigError("embedding dim " + std::to_string(embeddings.cols()) +
                      " does not match token dim " + std::to_string(dim()));
  }
}

namespace {

/// Index of the nearest row of `tokens`; lowest index on ties.
std::size_t nearest(const Matrix& tokens, std::span<const double> z, double* best_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tokens.rows(); ++k) {
    const double d = squared_distance(z, tokens.row(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

Assignment assign_all(const Matrix& embeddings, const Matrix& tokens,
                      std::vector<double>* distances = nullptr) {
  Assignment a;
  a.indices.resize(embeddings.rows());
  if (distances) distances->resize(embeddings.rows());
  for (std::size_t j = 0; j < embeddings.rows(); ++j) {
    double d = 0.0;
    a.indices[j] = nearest(tokens, embeddings.row(j), &d);
    if (distances) (*distances)[j] = d;
  }
  return a;
}

}  // namespace

Quantized Codebook::quantize(const Matrix& embeddings) const {
  check_ready(embeddings);
  Quantized q;
  q.assignment = assign_all(embeddings, tokens_);
  q.values = Matrix(embeddings.rows(), dim());
  for (std::size_t j = 0; j < embeddings.rows(); ++j) {
    auto t = tokens_.row(q.assignment.indices[j]);
    std::copy(t.begin(), t.end(), q.values.row(j).begin());
  }
  return q;
}

KMeansResult Codebook::kmeans_init(const Matrix& embeddings, std::size_t max_iters,
                                   std::uint64_t seed) {
  const std::size_t n = embeddings.rows();
  const std::size_t s = size();
  if (embeddings.cols() != dim()) {
    throw ConfigError("embedding dim " + std::to_string(embeddings.cols()) +
                      " does not match token dim " + std::to_string(dim()));
  }
  if (n < s) {
    throw ConfigError("k-means needs at least as many embeddings (" + std::to_string(n) +
                      ") as tokens (" + std::to_string(s) + ")");
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  Matrix centers(s, dim());
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t k = 0; k < s; ++k) {
    auto src = embeddings.row(pick);
    std::copy(src.begin(), src.end(), centers.row(k).begin());
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      min_d[j] = std::min(min_d[j], squared_distance(embeddings.row(j), centers.row(k)));
      total += min_d[j];
    }
    if (k + 1 == s) break;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t j = 0; j < n; ++j) {
        acc += min_d[j];
        if (acc > target && min_d[j] > 0.0) {
          pick = j;
          break;
        }
      }
      // Rounding can leave the cumulative sum short of target; fall back to the last positive.
      while (min_d[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
  }

  KMeansResult result;
  std::vector<double> dist;
  Assignment assignment = assign_all(embeddings, centers, &dist);
  result.objective.push_back(kmeans_objective(embeddings, centers, assignment));

  std::vector<std::size_t> counts(s);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Update step: move each non-empty center to its cluster mean.
    Matrix sums(s, dim());
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = assignment.indices[j];
      ++counts[k];
      auto row = embeddings.row(j);
      auto acc = sums.row(k);
      for (std::size_t d = 0; d < row.size(); ++d) acc[d] += row[d];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t k = 0; k < s; ++k) {
      if (counts[k] > 0) {
        auto c = centers.row(k);
        auto acc = sums.row(k);
        for (std::size_t d = 0; d < c.size(); ++d) c[d] = acc[d] / static_cast<double>(counts[k]);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      dist[j] = squared_distance(embeddings.row(j), centers.row(assignment.indices[j]));
    }
    // Empty clusters are re-seeded at the point farthest from its current center.
    for (std::size_t k = 0; k < s; ++k) {
      if (counts[k] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!taken[j] && dist[j] > far_d) {
          far_d = dist[j];
          far = j;
        }
      }
      if (far == n) continue;
      taken[far] = true;
      auto src = embeddings.row(far);
      std::copy(src.begin(), src.end(), centers.row(k).begin());
    }

    std::vector<double> new_dist;
    Assignment next = assign_all(embeddings, centers, &new_dist);
    const bool changed = next.indices != assignment.indices;
    assignment = std::move(next);
    dist = std::move(new_dist);
    result.objective.push_back(kmeans_objective(embeddings, centers, assignment));
    ++result.iterations;
    if (!changed) {
      result.converged = true;
      break;
    }
  }

  tokens_ = centers;
  ema_sum_ = Matrix(s, dim());
  ema_count_.assign(s, 0.0);
  for (std::size_t k : assignment.indices) ema_count_[k] += 1.0;
  for (std::size_t k = 0; k < s; ++k) {
    auto m = ema_sum_.row(k);
    auto t = tokens_.row(k);
    for (std::size_t d = 0; d < m.size(); ++d) m[d] = t[d] * ema_count_[k];
  }
  initialized_ = true;
  result.assignment = std::move(assignment);
  return result;
}

void Codebook::ema_update(const Matrix& embeddings, const Assignment& assignment) {
  check_ready(embeddings);
  if (assignment.size() != embeddings.rows()) {
    throw UsageError("assignment length does not match embedding rows");
  }
  const std::size_t s = size();
  Matrix batch_sum(s, dim());
  std::vector<double> batch_count(s, 0.0);
  for (std::size_t j = 0; j < embeddings.rows(); ++j) {
    const std::size_t k = assignment.indices[j];
    if (k >= s) throw UsageError("assignment index out of range");
    batch_count[k] += 1.0;
    auto row = embeddings.row(j);
    auto acc = batch_sum.row(k);
    for (std::size_t d = 0; d < row.size(); ++d) acc[d] += row[d];
  }
  const double keep = gamma_;
  const double blend = 1.0 - gamma_;
  for (std::size_t k = 0; k < s; ++k) {
    auto m = ema_sum_.row(k);
    auto add = batch_sum.row(k);
    for (std::size_t d = 0; d < m.size(); ++d) m[d] = keep * m[d] + blend * add[d];
    ema_count_[k] = keep * ema_count_[k] + blend * batch_count[k];
    if (ema_count_[k] > kCountFloor) {
      auto t = tokens_.row(k);
      for (std::size_t d = 0; d < t.size(); ++d) t[d] = m[d] / ema_count_[k];
    }
  }
}

void Codebook::set_tokens(const Matrix& tokens) {
  if (tokens.rows() != size() || tokens.cols() != dim()) {
    throw UsageError("set_tokens: shape does not match the codebook");
  }
  tokens_ = tokens;
  ema_sum_ = tokens;
  ema_count_.assign(size(), 1.0);
  initialized_ = true;
}

void Codebook::restore(Matrix tokens, Matrix ema_sum, std::vector<double> ema_count,
                       bool initialized) {
  if (tokens.rows() == 0 || tokens.cols() == 0 || ema_sum.rows() != tokens.rows() ||
      ema_sum.cols() != tokens.cols() || ema_count.size() != tokens.rows()) {
    throw ConfigError("inconsistent codebook state");
  }
  tokens_ = std::move(tokens);
  ema_sum_ = std::move(ema_sum);
  ema_count_ = std::move(ema_count);
  initialized_ = initialized;
}

double kmeans_objective(const Matrix& embeddings, const Matrix& tokens,
                        const Assignment& assignment) {
  double total = 0.0;
  for (std::size_t j = 0; j < embeddings.rows(); ++j) {
    total += squared_distance(embeddings.row(j), tokens.row(assignment.indices[j]));
  }
  return total;
}

double perplexity(const Assignment& assignment, std::size_t codebook_size) {
  if (assignment.size() == 0) throw UsageError("perplexity of an empty assignment");
  const auto counts = usage_histogram(assignment, codebook_size);
  const double n = static_cast<double>(assignment.size());
  double entropy = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

std::vector<std::size_t> usage_histogram(const Assignment& assignment, std::size_t codebook_size) {
  std::vector<std::size_t> counts(codebook_size, 0);
  for (std::size_t k : assignment.indices) {
    if (k >= codebook_size) throw UsageError("assignment index out of range");
    ++counts[k];
  }
  return counts;
}

}  // namespace vqc
