#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "lbfl/core_math.hpp"

using lbfl::ParamVector;
using lbfl::RngStream;

TEST(Axpy, ZeroScaleIsIdentityOnY) {
  EXPECT_EQ(lbfl::axpy(0.0, {3, 4}, {1, 2}), (ParamVector{1, 2}));
}

TEST(Axpy, AdditiveInverse) {
  EXPECT_EQ(lbfl::axpy(1.0, {1, 1}, {-1, -1}), (ParamVector{0, 0}));
}

TEST(Axpy, MatchesScalarLoop) {
  const ParamVector x{1, -2}, y{0.5, 0.5};
  const auto got = lbfl::axpy(2.0, x, y);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(got[j], 2.0 * x[j] + y[j]);
  EXPECT_EQ(got, (ParamVector{2.5, -3.5}));
}

TEST(Axpy, ExactOnIntegers) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> u(-1000, 1000);
  for (int trial = 0; trial < 100; ++trial) {
    ParamVector x(6), y(6);
    for (std::size_t j = 0; j < 6; ++j) {
      x[j] = u(gen);
      y[j] = u(gen);
    }
    const int alpha = u(gen);
    const auto got = lbfl::axpy(alpha, x, y);
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(got[j], static_cast<double>(static_cast<long long>(alpha) * static_cast<long long>(x[j]) +
                                            static_cast<long long>(y[j])));
    }
  }
}

TEST(Axpy, DimensionMismatchThrows) {
  EXPECT_THROW(lbfl::axpy(1.0, {1, 2}, {1, 2, 3}), lbfl::DimensionError);
}

TEST(SqEuclidean, Examples) {
  EXPECT_EQ(lbfl::sq_euclidean({7, 7, 7}, {7, 7, 7}), 0.0);
  EXPECT_EQ(lbfl::sq_euclidean({0, 0}, {3, 4}), 25.0);
  EXPECT_EQ(lbfl::sq_euclidean({1, 2, 3}, {4, 0, 3}), 13.0);
  EXPECT_THROW(lbfl::sq_euclidean({1}, {1, 2}), lbfl::DimensionError);
}

TEST(SqEuclidean, SymmetricExactly) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(0, 100);
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector x(9), y(9);
    double loop = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      x[j] = nd(gen);
      y[j] = nd(gen);
      loop += (x[j] - y[j]) * (x[j] - y[j]);
    }
    EXPECT_EQ(lbfl::sq_euclidean(x, y), lbfl::sq_euclidean(y, x));
    EXPECT_EQ(lbfl::sq_euclidean(x, y), loop);
  }
}

TEST(CoordwiseSorted, Examples) {
  const std::vector<ParamVector> a{{2}, {1}, {3}};
  EXPECT_EQ(lbfl::coordwise_sorted(a, 0), (std::vector<double>{1, 2, 3}));
  const std::vector<ParamVector> b{{1, 9}, {1, 5}};
  EXPECT_EQ(lbfl::coordwise_sorted(b, 1), (std::vector<double>{5, 9}));
  EXPECT_THROW(lbfl::coordwise_sorted(std::vector<ParamVector>{}, 0), lbfl::DimensionError);
  EXPECT_THROW(lbfl::coordwise_sorted(b, 2), lbfl::DimensionError);
}

TEST(CoordwiseSorted, MatchesExtractThenSort) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ParamVector> vs(5, ParamVector(3));
    for (auto& v : vs) {
      for (auto& x : v) x = u(gen);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> col;
      for (const auto& v : vs) col.push_back(v[j]);
      std::sort(col.begin(), col.end());
      EXPECT_EQ(lbfl::coordwise_sorted(vs, j), col);
    }
  }
}

TEST(CoordwiseSorted, NaNSortsLast) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<ParamVector> vs{{nan}, {2}, {-1}};
  const auto col = lbfl::coordwise_sorted(vs, 0);
  EXPECT_EQ(col[0], -1);
  EXPECT_EQ(col[1], 2);
  EXPECT_TRUE(std::isnan(col[2]));
}

TEST(ParamVector, IsFiniteReportsExactly) {
  EXPECT_TRUE((ParamVector{1, 2, 3}).is_finite());
  EXPECT_FALSE((ParamVector{1, std::numeric_limits<double>::infinity()}).is_finite());
  EXPECT_FALSE((ParamVector{std::nan(""), 0}).is_finite());
  EXPECT_TRUE(ParamVector{}.is_finite());
}

TEST(GaussianSample, DegenerateSigma) {
  RngStream rng(1, 0);
  EXPECT_EQ(lbfl::gaussian_sample(rng, 0.25, 0.0, 3), (ParamVector{0.25, 0.25, 0.25}));
}

TEST(GaussianSample, NegativeSigmaThrows) {
  RngStream rng(1, 0);
  EXPECT_THROW(lbfl::gaussian_sample(rng, 0.0, -1.0, 3), lbfl::ConfigError);
}

TEST(GaussianSample, MomentsLawOfLargeNumbers) {
  RngStream rng(42, 5);
  const auto v = lbfl::gaussian_sample(rng, 0.0, 1.0, 10000);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 10000.0;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= 9999.0;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(GaussianSample, Reproducible) {
  RngStream a(99, 3), b(99, 3);
  EXPECT_EQ(lbfl::gaussian_sample(a, 0.0, 1.0, 64), lbfl::gaussian_sample(b, 0.0, 1.0, 64));
}

TEST(RngStream, SameSeedAndStreamReplays) {
  RngStream a(123, 9), b(123, 9);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, DistinctStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 0; stream < 64; ++stream) {
    RngStream r(5, stream);
    for (int i = 0; i < 64; ++i) seen.insert(r.next_u64());
  }
  EXPECT_EQ(seen.size(), 64u * 64u);
}

TEST(RngStream, UniformAndBelowRanges) {
  RngStream r(1, 1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
  EXPECT_THROW(r.below(0), lbfl::ConfigError);
}

TEST(RngStream, ShuffleIsPermutation) {
  RngStream r(8, 0);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(v, sorted);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagatesErrors) {
  std::vector<int> hits(100, 0);
  lbfl::parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(lbfl::parallel_for(10, 3,
                                  [](std::size_t i) {
                                    if (i == 7) throw lbfl::DimensionError("boom");
                                  }),
               lbfl::DimensionError);
}
