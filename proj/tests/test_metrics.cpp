#include <gtest/gtest.h>

#include "posetraj/metrics.hpp"

#include <cmath>
#include <random>

using namespace posetraj;

namespace {

Matrix random_track(std::mt19937_64& rng, int steps) {
  std::normal_distribution<double> n(0.0, 3.0);
  Matrix m(steps, 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Straight-line re-implementations with explicit loops.
double brute_ade(const Matrix& p, const Matrix& g) {
  double s = 0.0;
  for (int i = 0; i < p.rows(); ++i) s += std::hypot(p(i, 0) - g(i, 0), p(i, 1) - g(i, 1));
  return s / p.rows();
}

double brute_fde(const Matrix& p, const Matrix& g) {
  const int i = static_cast<int>(p.rows()) - 1;
  return std::hypot(p(i, 0) - g(i, 0), p(i, 1) - g(i, 1));
}

double brute_aswaee(const Matrix& p, const Matrix& g, double fr) {
  const double times[5] = {0.44, 0.96, 1.48, 2.00, 2.52};
  double s = 0.0;
  for (double t : times) {
    // Nearest frame: prediction row i sits (i + 1) / fr seconds ahead.
    int best = 0;
    for (int i = 1; i < p.rows(); ++i)
      if (std::abs((i + 1) / fr - t) < std::abs((best + 1) / fr - t)) best = i;
    s += std::hypot(p(best, 0) - g(best, 0), p(best, 1) - g(best, 1));
  }
  return s / 5.0;
}

}  // namespace

TEST(Metrics, AgreeWithBruteForceOnRandomPairs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix p = random_track(rng, 12), g = random_track(rng, 12);
    EXPECT_NEAR(ade(p, g), brute_ade(p, g), 1e-9);
    EXPECT_NEAR(fde(p, g), brute_fde(p, g), 1e-9);
    EXPECT_NEAR(aswaee(p, g, 2.5), brute_aswaee(p, g, 2.5), 1e-9);
    const Matrix p13 = random_track(rng, 13), g13 = random_track(rng, 13);
    EXPECT_NEAR(aswaee(p13, g13, 5.0), brute_aswaee(p13, g13, 5.0), 1e-9);
  }
}

TEST(Metrics, ConstantOffsetGivesHalfMeter) {
  Matrix g = Matrix::Zero(12, 2);
  Matrix p = g;
  p.col(0).array() += 0.3;
  p.col(1).array() += 0.4;
  EXPECT_EQ(ade(p, g), 0.5);
  EXPECT_EQ(fde(p, g), 0.5);
  EXPECT_EQ(ade(g, g), 0.0);
  EXPECT_EQ(fde(g, g), 0.0);
  EXPECT_EQ(aswaee(g, g, 2.5), 0.0);
}

TEST(Metrics, LastStepOffsetOnly) {
  const Matrix g = Matrix::Zero(12, 2);
  Matrix p = g;
  p(11, 0) = 1.0;
  EXPECT_DOUBLE_EQ(fde(p, g), 1.0);
  EXPECT_DOUBLE_EQ(ade(p, g), 1.0 / 12.0);
}

TEST(Metrics, FdeIsAdeOfFinalStep) {
  std::mt19937_64 rng(2);
  const Matrix p = random_track(rng, 12), g = random_track(rng, 12);
  EXPECT_EQ(fde(p, g), ade(p.bottomRows(1), g.bottomRows(1)));
}

TEST(Metrics, AswaeeAveragesFiveCheckpoints) {
  // At 2.5 fps the checkpoints map to rows 0, 1, 3, 4, 5.
  EXPECT_EQ(aswaee_row(0.44, 2.5), 0);
  EXPECT_EQ(aswaee_row(0.96, 2.5), 1);
  EXPECT_EQ(aswaee_row(1.48, 2.5), 3);
  EXPECT_EQ(aswaee_row(2.00, 2.5), 4);
  EXPECT_EQ(aswaee_row(2.52, 2.5), 5);
  const Matrix g = Matrix::Zero(12, 2);
  Matrix p = g;
  const int rows[5] = {0, 1, 3, 4, 5};
  for (int i = 0; i < 5; ++i) p(rows[i], 1) = 0.1 * (i + 1);
  p(2, 0) = 100.0;
  p(11, 0) = 100.0;
  EXPECT_NEAR(aswaee(p, g, 2.5), 0.3, 1e-15);
}

TEST(Metrics, AswaeeFrameMappingAtFiveFps) {
  // 0.44 s at 5 fps is frame round(2.2) = 2, zero-based row 1.
  EXPECT_EQ(aswaee_row(0.44, 5.0) + 1, 2);
  EXPECT_EQ(aswaee_row(2.52, 5.0), 12);
  EXPECT_FALSE(aswaee_defined(12, 5.0));
  EXPECT_TRUE(aswaee_defined(13, 5.0));
  EXPECT_TRUE(aswaee_defined(12, 2.5));
  EXPECT_FALSE(aswaee_defined(5, 2.5));
}

TEST(Metrics, ShortHorizonOrMismatchIsAnError) {
  const Matrix a = Matrix::Zero(12, 2), b = Matrix::Zero(11, 2);
  EXPECT_THROW(ade(a, b), ConfigError);
  EXPECT_THROW(fde(Matrix(0, 2), Matrix(0, 2)), ConfigError);
  EXPECT_THROW(aswaee(a, a, 5.0), ConfigError);
  EXPECT_THROW(aswaee(a, a, 0.0), ConfigError);
  EXPECT_THROW(ade(Matrix::Zero(3, 3), Matrix::Zero(3, 3)), ConfigError);
}

TEST(MinOfK, SingleSampleEqualsMetric) {
  std::mt19937_64 rng(3);
  const Matrix p = random_track(rng, 12), g = random_track(rng, 12);
  EXPECT_EQ(min_of_k(ade, {p}, g), ade(p, g));
}

TEST(MinOfK, PerfectSampleGivesZero) {
  std::mt19937_64 rng(4);
  const Matrix g = random_track(rng, 12);
  EXPECT_EQ(min_of_k(fde, {random_track(rng, 12), g, random_track(rng, 12)}, g), 0.0);
}

TEST(MinOfK, MatchesEnumerationAndIsMonotone) {
  std::mt19937_64 rng(5);
  const Matrix g = random_track(rng, 12);
  std::vector<Matrix> samples;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 20; ++k) {
    samples.push_back(random_track(rng, 12));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) best = std::min(best, brute_ade(s, g));
    const double got = min_of_k(ade, samples, g);
    EXPECT_NEAR(got, best, 1e-12);
    EXPECT_LE(got, prev);
    prev = got;
  }
  EXPECT_THROW(min_of_k(ade, {}, g), ConfigError);
}
