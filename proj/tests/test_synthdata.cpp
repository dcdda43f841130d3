#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vqc/errors.hpp"
#include "vqc/synthdata.hpp"

using vqc::GaussianMixtureDataset;
using vqc::Matrix;
using vqc::MixtureSpec;

namespace {

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

void expect_standardized(const Matrix& m) {
  for (std::size_t d = 0; d < m.cols(); ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) mean += m(i, d);
    mean /= static_cast<double>(m.rows());
    double var = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) var += (m(i, d) - mean) * (m(i, d) - mean);
    var /= static_cast<double>(m.rows());
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
  }
}

}  // namespace

TEST(Generate, DefaultSpecHasBalancedClasses) {
  const GaussianMixtureDataset ds = vqc::generate(MixtureSpec{});
  EXPECT_EQ(ds.size(), 10000u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(oracle::count(ds.labels, 10), std::vector<std::size_t>(10, 1000));
}

TEST(Generate, SamplesAreStandardized) {
  for (std::size_t dim : {2u, 3u, 8u}) {
    MixtureSpec spec;
    spec.dim = dim;
    spec.points_per_cluster = 200;
    expect_standardized(vqc::generate(spec).samples);
  }
}

TEST(Generate, MeansAreWellSeparated) {
  for (std::size_t dim : {2u, 3u, 4u, 8u}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      MixtureSpec spec;
      spec.dim = dim;
      spec.seed = seed;
      spec.points_per_cluster = 10;
      const auto ds = vqc::generate(spec);
      const double max_std = *std::max_element(ds.spec.cluster_stds.begin(), ds.spec.cluster_stds.end());
      double closest = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < 10; ++a) {
        for (std::size_t b = a + 1; b < 10; ++b) {
          closest = std::min(closest, std::sqrt(oracle::dist2(ds.spec.cluster_means, a, ds.spec.cluster_means, b)));
        }
      }
      EXPECT_GE(closest, 6.0 * max_std);
      EXPECT_GE(closest, vqc::kGeneratedSeparation);
    }
  }
}

TEST(Generate, SinglePointPerClusterIsMeanPlusOneDraw) {
  MixtureSpec spec;
  spec.points_per_cluster = 1;
  const auto ds = vqc::generate(spec);
  ASSERT_EQ(ds.size(), 10u);
  const Matrix raw = vqc::unscale(ds, ds.samples);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(ds.labels[i], i);
    // One standard-normal draw rarely exceeds 6 stds; the nearest mean is its own.
    EXPECT_EQ(oracle::brute_force_assign(vqc::gather_rows(raw, std::vector<std::size_t>{i}),
                                         ds.spec.cluster_means)[0],
              i);
  }
}

TEST(Generate, EmpiricalMeansWithinFiveStandardErrors) {
  MixtureSpec spec;
  spec.dim = 3;
  const auto ds = vqc::generate(spec);
  const Matrix raw = vqc::unscale(ds, ds.samples);
  const double se = 1.0 / std::sqrt(static_cast<double>(spec.points_per_cluster));
  for (std::size_t k = 0; k < 10; ++k) {
    for (std::size_t d = 0; d < 3; ++d) {
      double mean = 0.0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == k) mean += raw(i, d);
      }
      mean /= static_cast<double>(spec.points_per_cluster);
      EXPECT_LT(std::abs(mean - ds.spec.cluster_means(k, d)), 5.0 * se);
    }
  }
}

TEST(Generate, IsDeterministic) {
  MixtureSpec spec;
  spec.dim = 3;
  spec.seed = 5;
  const auto a = vqc::generate(spec), b = vqc::generate(spec);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.train_indices, b.train_indices);
  spec.seed = 6;
  EXPECT_NE(vqc::generate(spec).samples, a.samples);
}

TEST(Generate, SplitIsDisjointAndCovering) {
  const auto ds = vqc::generate(MixtureSpec{});
  EXPECT_EQ(ds.test_indices.size(), 1000u);
  EXPECT_EQ(ds.train_indices.size(), 9000u);
  std::vector<std::size_t> all = ds.train_indices;
  all.insert(all.end(), ds.test_indices.begin(), ds.test_indices.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
  EXPECT_EQ(ds.test().rows(), 1000u);
  EXPECT_EQ(ds.test_labels().size(), 1000u);
}

TEST(Generate, CloseMeansAreConfigError) {
  MixtureSpec spec;
  spec.n_clusters = 2;
  spec.cluster_means = Matrix::from_rows({{0, 0}, {5, 0}});
  EXPECT_THROW(vqc::generate(spec), vqc::ConfigError);
  spec.cluster_means = Matrix::from_rows({{0, 0}, {6, 0}});
  EXPECT_NO_THROW(vqc::generate(spec));
  spec.cluster_stds = {1.0, 2.0};
  EXPECT_THROW(vqc::generate(spec), vqc::ConfigError);
}

TEST(Generate, InvalidSpecsAreConfigErrors) {
  MixtureSpec spec;
  spec.dim = 0;
  EXPECT_THROW(vqc::generate(spec), vqc::ConfigError);
  spec = MixtureSpec{};
  spec.test_fraction = 1.0;
  EXPECT_THROW(vqc::generate(spec), vqc::ConfigError);
  spec = MixtureSpec{};
  spec.cluster_stds = {1.0};
  EXPECT_THROW(vqc::generate(spec), vqc::ConfigError);
}

TEST(Batches, FullBatchIsPermutation) {
  MixtureSpec spec;
  spec.points_per_cluster = 20;
  const auto ds = vqc::generate(spec);
  const auto b = vqc::batches(ds, ds.size(), 3);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(sorted_rows(b[0]), sorted_rows(ds.samples));
}

TEST(Batches, LastBatchIsShort) {
  const auto ds = vqc::generate(MixtureSpec{});
  const auto b = vqc::batches(ds, 256, 0);
  ASSERT_EQ(b.size(), 40u);
  for (std::size_t i = 0; i < 39; ++i) EXPECT_EQ(b[i].rows(), 256u);
  EXPECT_EQ(b.back().rows(), 16u);
}

TEST(Batches, ConcatenationIsSameMultiset) {
  MixtureSpec spec;
  spec.points_per_cluster = 37;
  const auto ds = vqc::generate(spec);
  std::vector<double> data;
  for (const auto& m : vqc::batches(ds, 64, 9)) data.insert(data.end(), m.data().begin(), m.data().end());
  EXPECT_EQ(sorted_rows(Matrix(ds.size(), 2, data)), sorted_rows(ds.samples));
}

TEST(Batches, ZeroBatchSizeIsConfigError) {
  EXPECT_THROW(vqc::batch_indices(10, 0, 0), vqc::ConfigError);
}

TEST(Unscale, IdentityScalerIsNoOp) {
  GaussianMixtureDataset ds;
  ds.scaler.mean = {0.0, 0.0};
  ds.scaler.std = {1.0, 1.0};
  const Matrix p = Matrix::from_rows({{1.5, -2}});
  EXPECT_EQ(vqc::unscale(ds, p), p);
}

TEST(Unscale, HandComputedPoint) {
  GaussianMixtureDataset ds;
  ds.scaler.mean = {2.0};
  ds.scaler.std = {3.0};
  EXPECT_DOUBLE_EQ(vqc::unscale(ds, Matrix::from_rows({{-1}}))(0, 0), -1.0);
}

TEST(Unscale, RoundTripOnDataset) {
  MixtureSpec spec;
  spec.dim = 3;
  spec.points_per_cluster = 50;
  const auto ds = vqc::generate(spec);
  const Matrix back = ds.scaler.transform(vqc::unscale(ds, ds.samples));
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back.data()[i], ds.samples.data()[i], 1e-12);
}

TEST(StandardScaler, RefitOnScaledDataIsNearIdentity) {
  MixtureSpec spec;
  spec.points_per_cluster = 100;
  const auto ds = vqc::generate(spec);
  const auto refit = vqc::StandardScaler::fit(ds.samples);
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_NEAR(refit.mean[d], 0.0, 1e-9);
    EXPECT_NEAR(refit.std[d], 1.0, 1e-9);
  }
  const Matrix again = refit.transform(ds.samples);
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_NEAR(again.data()[i], ds.samples.data()[i], 1e-9);
}
