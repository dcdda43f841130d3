#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vqc/matrix.hpp"

namespace vqc {

/// Token index chosen for each quantized row.
struct Assignment {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct Quantized {
  Assignment assignment;
  Matrix values;  // row j is the selected token for input row j
};

struct KMeansResult {
  /// Sum of squared distances to the assigned center, after the seeding pass
  /// and after every Lloyd iteration.
  std::vector<double> objective;
  std::size_t iterations = 0;
  bool converged = false;
  Assignment assignment;
};

/// Token set with exponential-moving-average accumulators.
///
/// Tokens are only ever changed by kmeans_init(), ema_update() or set_tokens();
/// there is no gradient path into the codebook.
class Codebook {
 public:
  /// Tokens with EMA counts below this are frozen by ema_update().
  static constexpr double kCountFloor = 1e-9;

  Codebook() = default;
  Codebook(std::size_t size, std::size_t dim, double gamma);

  std::size_t size() const { return tokens_.rows(); }
  std::size_t dim() const { return tokens_.cols(); }
  double gamma() const { return gamma_; }
  bool initialized() const { return initialized_; }

  const Matrix& tokens() const { return tokens_; }
  const Matrix& ema_sum() const { return ema_sum_; }
  const std::vector<double>& ema_count() const { return ema_count_; }

  /// Nearest token per row; ties go to the lowest index.
  Quantized quantize(const Matrix& embeddings) const;

  /// k-means++ seeding followed by Lloyd iterations. Seeds the accumulators
  /// with L_k = cluster size and M_k = t_k * L_k.
  KMeansResult kmeans_init(const Matrix& embeddings, std::size_t max_iters, std::uint64_t seed);

  /// M_k <- gamma M_k + (1-gamma) m_k, L_k <- gamma L_k + (1-gamma) l_k, t_k <- M_k / L_k.
  void ema_update(const Matrix& embeddings, const Assignment& assignment);

  /// Installs tokens directly with unit accumulators (M_k = t_k, L_k = 1).
  void set_tokens(const Matrix& tokens);

  /// Restores a full state, e.g. from a checkpoint.
  void restore(Matrix tokens, Matrix ema_sum, std::vector<double> ema_count, bool initialized);

 private:
  void check_ready(const Matrix& embeddings) const;

  Matrix tokens_;
  Matrix ema_sum_;
  std::vector<double> ema_count_;
  double gamma_ = 0.9;
  bool initialized_ = false;
};

/// Sum over rows of the squared distance to the assigned token.
double kmeans_objective(const Matrix& embeddings, const Matrix& tokens,
                        const Assignment& assignment);

/// exp of the entropy of token usage frequencies.
double perplexity(const Assignment& assignment, std::size_t codebook_size);

std::vector<std::size_t> usage_histogram(const Assignment& assignment, std::size_t codebook_size);

}  // namespace vqc
