// tests/model_core_test.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nlscore/model_core.hpp"
#include "oracles.hpp"

namespace nlscore {
namespace {

constexpr double kPi = std::numbers::pi;

Vector V(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Samples the two-level model directly: speaker means N(0, eps), utterances
// N(mean, sigma). Independent of the simulate module.
LabeledDataset DrawModel(std::size_t dim, std::size_t speakers,
                         std::size_t utts, double eps, double sigma,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledDataset ds(dim);
  const auto d = static_cast<Eigen::Index>(dim);
  for (std::size_t k = 0; k < speakers; ++k) {
    const Vector mu = oracle::RandomVec(rng, d, std::sqrt(eps));
    for (std::size_t u = 0; u < utts; ++u)
      ds.Add("u" + std::to_string(k) + "_" + std::to_string(u),
             "s" + std::to_string(k), "dom",
             mu + oracle::RandomVec(rng, d, std::sqrt(sigma)));
  }
  return ds;
}

TEST(EstimateDomainStats, ZeroWithinScatterFloorsSigma) {
  LabeledDataset ds(2);
  for (int i = 0; i < 3; ++i) {
    ds.Add("a" + std::to_string(i), "a", "d", V({0, 0}));
    ds.Add("b" + std::to_string(i), "b", "d", V({2, 0}));
  }
  const DomainStats s = estimate_domain_stats(ds);
  EXPECT_EQ(s.sigma, 1e-6);
  // Speaker means (-1,0) and (1,0) about center (1,0): variance 1 on dim 0,
  // 0 on dim 1, averaged 0.5; correction sigma / 3.
  EXPECT_NEAR(s.epsilon, 0.5 - 1e-6 / 3.0, 1e-15);
  EXPECT_EQ(s.center, V({1, 0}));
}

TEST(EstimateDomainStats, RecoversGenerativeVariances) {
  const auto ds = DrawModel(8, 500, 20, 1.0, 0.5, 7);
  const DomainStats s = estimate_domain_stats(ds);
  EXPECT_NEAR(s.epsilon, 1.0, 0.1);
  EXPECT_NEAR(s.sigma, 0.5, 0.025);
  EXPECT_EQ(s.dim, 8u);
}

TEST(EstimateDomainStats, Errors) {
  LabeledDataset one(2);
  one.Add("a", "s", "d", V({0, 1}));
  one.Add("b", "s", "d", V({1, 1}));
  EXPECT_THROW(estimate_domain_stats(one), EstimationError);

  LabeledDataset singles(2);
  singles.Add("a", "s1", "d", V({0, 1}));
  singles.Add("b", "s2", "d", V({1, 1}));
  EXPECT_THROW(estimate_domain_stats(singles), EstimationError);

  EXPECT_THROW(estimate_domain_stats(LabeledDataset(2)), EstimationError);
  const auto ok = DrawModel(2, 3, 2, 1.0, 1.0, 1);
  EXPECT_THROW(estimate_domain_stats(ok, {0.0, false}), EstimationError);
}

TEST(EstimateDomainStats, LengthNormalizeOption) {
  const auto ds = DrawModel(4, 30, 5, 1.0, 0.5, 3);
  const DomainStats direct = estimate_domain_stats(LengthNormalize(ds));
  const DomainStats flagged = estimate_domain_stats(ds, {1e-6, true});
  EXPECT_EQ(direct, flagged);
}

TEST(BuildEnrollmentModel, SingleSample) {
  const auto stats = DomainStats::Make(1.0, 1.0, 2);
  const auto m = build_enrollment_model(stats, "k", std::vector<Vector>{V({2, 0})});
  EXPECT_EQ(m.pred_mean, V({1, 0}));
  EXPECT_EQ(m.pred_var, 1.5);
  EXPECT_EQ(m.n, 1u);
}

TEST(BuildEnrollmentModel, ManySamplesApproachSampleMean) {
  const auto stats = DomainStats::Make(1.0, 1.0, 2);
  const std::vector<Vector> samples(10000, V({2, 0}));
  const auto m = build_enrollment_model(stats, "k", samples);
  EXPECT_NEAR(m.pred_mean(0), 2.0, 1e-3);
  EXPECT_NEAR(m.pred_mean(1), 0.0, 1e-3);
  EXPECT_NEAR(m.pred_var, 1.0, 1e-3);
}

TEST(BuildEnrollmentModel, HandEvaluated) {
  const auto stats = DomainStats::Make(2.0, 0.5, 4);
  const double c = 0.7;
  const std::vector<Vector> samples = {V({0.2, 0.4, 1.0, 0.0}), V({1.2, 1.0, 0.4, 1.4}),
                                       V({0.7, 0.7, 0.7, 0.7}), V({0.7, 0.7, 0.7, 0.7})};
  const auto m = build_enrollment_model(stats, "k", samples);
  const Vector xbar = Vector::Constant(4, c);
  EXPECT_LT((m.xbar - xbar).norm(), 1e-15);
  EXPECT_LT((m.pred_mean - (8.0 / 8.5) * xbar).norm(), 1e-15);
  EXPECT_NEAR(m.pred_var, 0.5 + 1.0 / 8.5, 1e-15);
}

TEST(BuildEnrollmentModel, CentersSamples) {
  const auto stats = DomainStats::Make(1.0, 1.0, V({1, 1}));
  const auto m = build_enrollment_model(stats, "k", std::vector<Vector>{V({3, 1})});
  EXPECT_EQ(m.xbar, V({2, 0}));
}

TEST(BuildEnrollmentModel, Errors) {
  const auto stats = DomainStats::Make(1.0, 1.0, 2);
  EXPECT_THROW(build_enrollment_model(stats, "k", std::vector<Vector>{}), ModelError);
  EXPECT_THROW(build_enrollment_model(stats, "k", std::vector<Vector>{V({1, 2, 3})}),
               ModelError);
}

TEST(BuildEnrollmentModel, InvariantsHoldOnRandomInputs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> var(1e-3, 10.0);
  std::uniform_int_distribution<int> count(1, 40), dims(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const double eps = var(rng), sigma = var(rng);
    const int d = dims(rng), n = count(rng);
    const auto stats = DomainStats::Make(eps, sigma, oracle::RandomVec(rng, d));
    std::vector<Vector> samples;
    for (int i = 0; i < n; ++i) samples.push_back(oracle::RandomVec(rng, d, 2.0));
    const auto m = build_enrollment_model(stats, "k", samples);
    const double ne = n * eps;
    EXPECT_LT((m.pred_mean - (ne / (ne + sigma)) * m.xbar).norm(),
              1e-12 * (1.0 + m.xbar.norm()));
    EXPECT_NEAR(m.pred_var, sigma + eps * sigma / (ne + sigma), 1e-12 * (sigma + eps));
    EXPECT_GT(m.pred_var, sigma);
    EXPECT_LE(m.pred_var, sigma + eps * sigma / (eps + sigma) + 1e-12);
  }
}

TEST(MarginalLogDensity, ClosedFormExamples) {
  const auto stats = DomainStats::Make(1.0, 1.0, 1);
  EXPECT_NEAR(marginal_log_density(stats, V({0})), -0.5 * std::log(4 * kPi), 1e-15);
  EXPECT_NEAR(marginal_log_density(stats, V({2})), -0.5 * std::log(4 * kPi) - 1.0, 1e-15);
  EXPECT_THROW(marginal_log_density(stats, V({1, 2})), ModelError);
}

TEST(MarginalLogDensity, MatchesGridQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> var(0.2, 3.0);
  for (int trial = 0; trial < 3; ++trial) {
    const auto stats = DomainStats::Make(var(rng), var(rng), oracle::RandomVec(rng, 5));
    const Vector x = oracle::RandomVec(rng, 5, 1.5);
    const double grid = oracle::GridMarginalLogDensity(x, stats.epsilon, stats.sigma,
                                                       stats.center, 20001, 30.0);
    EXPECT_NEAR(marginal_log_density(stats, x), grid, 1e-3);
  }
}

TEST(MarginalLogDensity, IntegratesToOne) {
  const auto stats = DomainStats::Make(0.8, 0.7, V({0.3}));
  std::mt19937_64 rng(9);
  const double half = 12.0;
  std::uniform_real_distribution<double> u(-half, half);
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::exp(marginal_log_density(stats, V({u(rng)})));
  EXPECT_NEAR(acc / n * 2.0 * half, 1.0, 1e-2);
}

TEST(PredictiveLogDensity, Examples) {
  const auto stats = DomainStats::Make(1.0, 1.0, 2);
  const auto m = build_enrollment_model(stats, "k", std::vector<Vector>{V({2, 0})});
  EXPECT_NEAR(predictive_log_density(m, V({1, 0}), stats), -std::log(2 * kPi * 1.5), 1e-15);
  EXPECT_NEAR(predictive_log_density(m, m.pred_mean, stats),
              -0.5 * 2 * std::log(2 * kPi * m.pred_var), 1e-15);
  EXPECT_THROW(predictive_log_density(m, V({1, 0, 0}), stats), ModelError);
}

TEST(PredictiveLogDensity, MatchesSequentialBayesUpdate) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> var(0.05, 5.0);
  std::uniform_int_distribution<int> count(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto stats = DomainStats::Make(var(rng), var(rng), oracle::RandomVec(rng, 6));
    std::vector<Vector> enroll;
    for (int i = count(rng); i > 0; --i) enroll.push_back(oracle::RandomVec(rng, 6, 2.0));
    const Vector x = oracle::RandomVec(rng, 6, 2.0);
    const auto m = build_enrollment_model(stats, "k", enroll);
    EXPECT_NEAR(predictive_log_density(m, x, stats),
                oracle::SequentialPredictiveLogDensity(enroll, x, stats.epsilon,
                                                       stats.sigma, stats.center),
                1e-10);
  }
}

TEST(PredictiveLogDensity, LargeEnrollmentConvergesToWithinSpeakerGaussian) {
  const auto stats = DomainStats::Make(1.3, 0.6, 2);
  std::mt19937_64 rng(4);
  std::vector<Vector> enroll;
  for (int i = 0; i < 1000000; ++i) enroll.push_back(oracle::RandomVec(rng, 2));
  const auto m = build_enrollment_model(stats, "k", enroll);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = oracle::RandomVec(rng, 2, 1.5);
    const double limit = -std::log(2 * kPi * stats.sigma) -
                         (x - m.xbar).squaredNorm() / (2 * stats.sigma);
    EXPECT_NEAR(predictive_log_density(m, x, stats), limit, 1e-4);
  }
}

TEST(NlLogScore, HandEvaluated) {
  const auto stats = DomainStats::Make(1.0, 1.0, 2);
  const auto m = build_enrollment_model(stats, "k", std::vector<Vector>{V({2, 0})});
  const double predictive = -std::log(2 * kPi * 1.5) - 1.0 / (2 * 1.5);
  const double marginal = -std::log(4 * kPi) - 4.0 / 4.0;
  EXPECT_NEAR(nl_log_score(m, V({2, 0}), stats), predictive - marginal, 1e-14);
}

TEST(NlLogScore, VanishingBetweenVarianceGivesVanishingScores) {
  const double eps = 1e-6, sigma = 1.0;
  const auto stats = DomainStats::Make(eps, sigma, 3);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector> enroll;
    const int n = 1 + trial % 10;
    for (int i = 0; i < n; ++i) enroll.push_back(oracle::RandomVec(rng, 3));
    const Vector x = oracle::RandomVec(rng, 3);
    const auto m = build_enrollment_model(stats, "k", enroll);
    // |log det ratio| <= D eps / sigma; mean shift |m| <= n eps |xbar| / sigma;
    // quadratic difference bounded through both.
    const double d = 3.0;
    const double shift = n * eps / sigma * m.xbar.norm();
    const double v = m.pred_var, w = eps + sigma;
    const double bound = 0.5 * d * std::abs(std::log(v / w)) +
                         (2 * x.norm() * shift + shift * shift) / (2 * v) +
                         0.5 * x.squaredNorm() * std::abs(1 / v - 1 / w);
    const double score = nl_log_score(m, x, stats);
    EXPECT_LE(std::abs(score), bound + 1e-15);
    EXPECT_LT(std::abs(score), 1e-4);
  }
}

TEST(NlLogScore, DifferencesMatchTwoCovariancePlda) {
  std::mt19937_64 rng(31);
  const auto stats = DomainStats::Make(1.2, 0.4, oracle::RandomVec(rng, 8));
  double ref_score = 0.0, ref_llr = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vector> enroll;
    for (int i = 1 + trial % 3; i > 0; --i) enroll.push_back(oracle::RandomVec(rng, 8, 1.3));
    const Vector x = oracle::RandomVec(rng, 8, 1.3);
    const double score =
        nl_log_score(build_enrollment_model(stats, "k", enroll), x, stats);
    const double llr =
        oracle::TwoCovarianceLlr(enroll, x, stats.epsilon, stats.sigma, stats.center);
    if (trial == 0) {
      ref_score = score;
      ref_llr = llr;
      continue;
    }
    EXPECT_NEAR(score - ref_score, llr - ref_llr, 1e-8);
  }
}

TEST(NlLogScore, InvariantToCommonTranslation) {
  std::mt19937_64 rng(12);
  const auto stats = DomainStats::Make(0.9, 0.3, oracle::RandomVec(rng, 5));
  const Vector shift = oracle::RandomVec(rng, 5, 3.0);
  auto moved = stats;
  moved.center += shift;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector> enroll, enroll_moved;
    for (int i = 0; i < 3; ++i) {
      enroll.push_back(oracle::RandomVec(rng, 5));
      enroll_moved.push_back(enroll.back() + shift);
    }
    const Vector x = oracle::RandomVec(rng, 5);
    const double a = nl_log_score(build_enrollment_model(stats, "k", enroll), x, stats);
    const double b = nl_log_score(build_enrollment_model(moved, "k", enroll_moved),
                                  x + shift, moved);
    EXPECT_NEAR(a, b, 1e-10);
  }
}

TEST(DomainStats, ValidateRejectsBadValues) {
  EXPECT_THROW(DomainStats::Make(0.0, 1.0, 2), ModelError);
  EXPECT_THROW(DomainStats::Make(1.0, -1.0, 2), ModelError);
  EXPECT_THROW(DomainStats::Make(1.0, 1.0, 0), ModelError);
  EXPECT_THROW(DomainStats::Make(1.0, std::nan(""), 2), ModelError);
}

}  // namespace
}  // namespace nlscore
