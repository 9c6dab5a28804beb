// tests/oracles.hpp

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

#pragma once

// Independent reference computations used only by the tests. None of these
// call into the scoring code they are compared against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace nlscore::oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// log N(x; 0, cov) for a full covariance, via Cholesky.
inline double GaussianLogDensity(const Vec &x, const Mat &cov) {
  Eigen::LLT<Mat> llt(cov);
  const Vec sol = llt.solve(x);
  double logdet = 0.0;
  const Mat l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) +
                 logdet + x.dot(sol));
}

/// Two-covariance PLDA log-likelihood ratio of "test shares the speaker of
/// the enrollment samples" against "test is from an independent speaker",
/// with between covariance eps I and within covariance sigma I. Built from
/// the joint Gaussian of the stacked vectors; no closed-form shortcut.
inline double TwoCovarianceLlr(const std::vector<Vec> &enroll, const Vec &test,
                               double eps, double sigma, const Vec &center) {
  const Eigen::Index d = test.size();
  const Eigen::Index n = static_cast<Eigen::Index>(enroll.size());
  auto joint_cov = [&](Eigen::Index count) {
    Mat c = Mat::Zero(count * d, count * d);
    for (Eigen::Index a = 0; a < count; ++a)
      for (Eigen::Index b = 0; b < count; ++b)
        c.block(a * d, b * d, d, d) =
            Mat::Identity(d, d) * (eps + (a == b ? sigma : 0.0));
    return c;
  };
  Vec stacked(d * (n + 1)), enroll_only(d * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    stacked.segment(a * d, d) = enroll[static_cast<std::size_t>(a)] - center;
    enroll_only.segment(a * d, d) = enroll[static_cast<std::size_t>(a)] - center;
  }
  stacked.segment(n * d, d) = test - center;
  const double same = GaussianLogDensity(stacked, joint_cov(n + 1));
  const double diff = GaussianLogDensity(enroll_only, joint_cov(n)) +
                      GaussianLogDensity(test - center, joint_cov(1));
  return same - diff;
}

/// Posterior predictive log density by updating the Gaussian posterior of the
/// speaker mean one enrollment sample at a time (per dimension, since all
/// covariances are isotropic).
inline double SequentialPredictiveLogDensity(const std::vector<Vec> &enroll,
                                             const Vec &test, double eps,
                                             double sigma, const Vec &center) {
  const Eigen::Index d = test.size();
  Vec mean = Vec::Zero(d);
  double var = eps;
  for (const auto &x : enroll) {
    const Vec xc = x - center;
    const double gain = var / (var + sigma);
    mean = mean + gain * (xc - mean);
    var = var * sigma / (var + sigma);
  }
  const double pv = var + sigma;
  const Vec r = test - center - mean;
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * pv) -
         r.squaredNorm() / (2.0 * pv);
}

/// log of prod_d \int N(x_d; mu, sigma) N(mu; 0, eps) dmu, each 1-D integral
/// by the trapezoid rule on [-half_width, half_width].
inline double GridMarginalLogDensity(const Vec &x, double eps, double sigma,
                                     const Vec &center, int points = 200001,
                                     double half_width = 40.0) {
  double total = 0.0;
  const double h = 2.0 * half_width / (points - 1);
  auto normal = [](double v, double m, double var) {
    return std::exp(-(v - m) * (v - m) / (2.0 * var)) /
           std::sqrt(2.0 * std::numbers::pi * var);
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i) - center(i);
    double acc = 0.0;
    for (int k = 0; k < points; ++k) {
      const double mu = -half_width + h * k;
      const double w = (k == 0 || k == points - 1) ? 0.5 : 1.0;
      acc += w * normal(xi, mu, sigma) * normal(mu, 0.0, eps);
    }
    total += std::log(acc * h);
  }
  return total;
}

inline Vec NaiveAffine(const Mat &m, const Vec &b, const Vec &x) {
  Vec out(b.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) acc += m(i, j) * x(j);
    out(i) = acc + b(i);
  }
  return out;
}

/// Brute-force EER: candidate thresholds are all 2N scores (duplicates
/// included, then visited in ascending order), FAR/FRR counted from scratch
/// at each, with the same crossing and interpolation convention as the
/// library: FAR uses >=, FRR uses <, bracket at the first FRR >= FAR,
/// closing point (0, 1) above the top score.
struct EerOracleResult {
  double eer;
  double threshold;
};

inline EerOracleResult BruteForceEer(const std::vector<double> &target,
                                     const std::vector<double> &nontarget) {
  std::vector<double> cand(target);
  cand.insert(cand.end(), nontarget.begin(), nontarget.end());
  std::sort(cand.begin(), cand.end());
  auto far = [&](double t) {
    std::size_t c = 0;
    for (double s : nontarget) c += s >= t;
    return static_cast<double>(c) / static_cast<double>(nontarget.size());
  };
  auto frr = [&](double t) {
    std::size_t c = 0;
    for (double s : target) c += s < t;
    return static_cast<double>(c) / static_cast<double>(target.size());
  };
  double pf = far(cand[0]), pr = frr(cand[0]), pt = cand[0];
  for (std::size_t j = 1; j <= cand.size(); ++j) {
    const bool beyond = j == cand.size();
    if (!beyond && cand[j] == pt) continue;
    const double f = beyond ? 0.0 : far(cand[j]);
    const double r = beyond ? 1.0 : frr(cand[j]);
    if (r < f) {
      pf = f;
      pr = r;
      pt = cand[j];
      continue;
    }
    const double g0 = pf - pr, g1 = f - r;
    const double lambda = g0 / (g0 - g1);
    EerOracleResult res{pf + lambda * (f - pf), pt};
    if (!beyond)
      res.threshold = g1 == 0.0 ? 0.5 * (pt + cand[j]) : pt + lambda * (cand[j] - pt);
    return res;
  }
  return {0.5, pt};
}

/// Central finite difference of f at x along every coordinate.
inline Vec CentralDifference(const std::function<double(const Vec &)> &f,
                             const Vec &x, double step) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a(i) += step;
    b(i) -= step;
    g(i) = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

inline Vec RandomVec(std::mt19937_64 &rng, Eigen::Index d, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

}  // namespace nlscore::oracle
