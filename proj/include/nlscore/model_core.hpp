// nlscore/model_core.hpp

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

// Spherical two-level Gaussian model of one domain and the normalized
// likelihood (NL) score built on it.
//
//   speaker mean    mu ~ N(0, epsilon I)
//   utterance       x | mu ~ N(mu, sigma I)
//
// Vectors are centered by DomainStats::center before any density is
// evaluated. All log densities keep their normalization constants, so score
// differences are exact log-likelihood-ratio differences.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nlscore/dataset.hpp"

namespace nlscore {

struct StatsOptions {
  double min_variance = 1e-6;
  bool length_normalize = false;
};

struct DomainStats {
  std::size_t dim = 0;
  double epsilon = 1.0;  // between-speaker variance per dimension
  double sigma = 1.0;    // within-speaker variance per dimension
  Vector center;

  static DomainStats Make(double epsilon, double sigma, Vector center) {
    DomainStats s;
    s.dim = static_cast<std::size_t>(center.size());
    s.epsilon = epsilon;
    s.sigma = sigma;
    s.center = std::move(center);
    s.Validate();
    return s;
  }

  static DomainStats Make(double epsilon, double sigma, std::size_t dim) {
    return Make(epsilon, sigma, Vector::Zero(static_cast<Eigen::Index>(dim)));
  }

  void Validate() const {
    if (dim == 0) throw ModelError("DomainStats dim must be >= 1");
    if (!(std::isfinite(epsilon) && epsilon > 0.0))
      throw ModelError("DomainStats epsilon must be positive and finite");
    if (!(std::isfinite(sigma) && sigma > 0.0))
      throw ModelError("DomainStats sigma must be positive and finite");
    if (static_cast<std::size_t>(center.size()) != dim)
      throw ModelError("DomainStats center has wrong dimension");
    if (!center.allFinite())
      throw ModelError("DomainStats center has non-finite entries");
  }

  bool operator==(const DomainStats &o) const {
    return dim == o.dim && epsilon == o.epsilon && sigma == o.sigma &&
           center == o.center;
  }
};

/// Posterior-predictive distribution of one enrolled speaker:
/// N(pred_mean, pred_var I) in centered coordinates.
struct EnrollmentModel {
  std::string model_id;
  std::size_t n = 0;
  Vector xbar;       // mean of the centered enrollment samples
  Vector pred_mean;  // n eps / (n eps + sigma) * xbar
  double pred_var = 0.0;  // sigma + eps sigma / (n eps + sigma)
};

namespace internal {

inline void CheckDim(const DomainStats &stats, const Vector &x,
                     const char *what) {
  if (static_cast<std::size_t>(x.size()) != stats.dim)
    throw ModelError(std::string(what) + ": dimension " +
                     std::to_string(x.size()) + " does not match model dimension " +
                     std::to_string(stats.dim));
}

// log N(x; mean, var I) with all constants.
inline double SphericalLogDensity(const Vector &x, const Vector &mean,
                                  double var) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) -
         (x - mean).squaredNorm() / (2.0 * var);
}

}  // namespace internal

/// Estimates (epsilon, sigma, center) from labeled data of one domain.
///
/// center is the global mean. sigma is the pooled within-speaker variance
/// (N - K degrees of freedom) averaged over dimensions. epsilon is the
/// variance of the speaker means about the center, averaged over dimensions,
/// minus sigma / n_h where n_h is the harmonic mean of the per-speaker
/// counts. Both are floored at opts.min_variance.
inline DomainStats estimate_domain_stats(const LabeledDataset &input,
                                         const StatsOptions &opts = {}) {
  if (!(std::isfinite(opts.min_variance) && opts.min_variance > 0.0))
    throw EstimationError("min_variance must be positive and finite");
  if (input.empty()) throw EstimationError("empty dataset");
  const LabeledDataset normalized =
      opts.length_normalize ? LengthNormalize(input) : LabeledDataset();
  const LabeledDataset &data = opts.length_normalize ? normalized : input;

  const auto groups = data.BySpeaker();
  const std::size_t num_spk = groups.size();
  if (num_spk < 2)
    throw EstimationError("need at least 2 speakers, got " +
                          std::to_string(num_spk));

  const auto dim = static_cast<Eigen::Index>(data.dim());
  const double dimf = static_cast<double>(dim);
  Vector center = Vector::Zero(dim);
  for (const auto &r : data.records()) center += r.embedding;
  center /= static_cast<double>(data.size());

  double within = 0.0, between = 0.0, inv_count_sum = 0.0;
  std::size_t within_dof = 0;
  for (const auto &[spk, idx] : groups) {
    Vector mean = Vector::Zero(dim);
    for (std::size_t i : idx) mean += data[i].embedding;
    mean /= static_cast<double>(idx.size());
    for (std::size_t i : idx) within += (data[i].embedding - mean).squaredNorm();
    within_dof += idx.size() - 1;
    between += (mean - center).squaredNorm();
    inv_count_sum += 1.0 / static_cast<double>(idx.size());
  }
  if (within_dof == 0)
    throw EstimationError(
        "no speaker has 2 or more utterances; within-speaker variance is "
        "unidentifiable");

  const double harmonic_count = static_cast<double>(num_spk) / inv_count_sum;
  double sigma = within / (static_cast<double>(within_dof) * dimf);
  sigma = std::max(sigma, opts.min_variance);
  double epsilon = between / (static_cast<double>(num_spk) * dimf) -
                   sigma / harmonic_count;
  epsilon = std::max(epsilon, opts.min_variance);
  if (!(std::isfinite(sigma) && std::isfinite(epsilon) && sigma > 0.0 &&
        epsilon > 0.0))
    throw EstimationError("degenerate variance estimate");

  DomainStats s;
  s.dim = data.dim();
  s.epsilon = epsilon;
  s.sigma = sigma;
  s.center = std::move(center);
  return s;
}

/// Builds the posterior-predictive model of one speaker from raw
/// (uncentered) enrollment embeddings.
inline EnrollmentModel build_enrollment_model(
    const DomainStats &stats, std::string model_id,
    std::span<const Embedding> samples) {
  if (samples.empty())
    throw ModelError("enrollment model '" + model_id + "' has no samples");
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(stats.dim));
  for (const auto &x : samples) {
    internal::CheckDim(stats, x, "enrollment sample");
    sum += x - stats.center;
  }
  EnrollmentModel m;
  m.model_id = std::move(model_id);
  m.n = samples.size();
  m.xbar = sum / static_cast<double>(m.n);
  const double n_eps = static_cast<double>(m.n) * stats.epsilon;
  m.pred_mean = (n_eps / (n_eps + stats.sigma)) * m.xbar;
  m.pred_var = stats.sigma + stats.epsilon * stats.sigma / (n_eps + stats.sigma);
  return m;
}

inline EnrollmentModel build_enrollment_model(
    const DomainStats &stats, std::string model_id,
    const std::vector<Embedding> &samples) {
  return build_enrollment_model(stats, std::move(model_id),
                                std::span<const Embedding>(samples));
}

/// log p(x) = log N(x - center; 0, (epsilon + sigma) I).
inline double marginal_log_density(const DomainStats &stats, const Vector &x) {
  internal::CheckDim(stats, x, "marginal_log_density");
  const double var = stats.epsilon + stats.sigma;
  const double d = static_cast<double>(stats.dim);
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) -
         (x - stats.center).squaredNorm() / (2.0 * var);
}

/// log p_k(x) = log N(x - center; pred_mean, pred_var I).
inline double predictive_log_density(const EnrollmentModel &model,
                                     const Vector &x,
                                     const DomainStats &stats) {
  internal::CheckDim(stats, x, "predictive_log_density");
  if (static_cast<std::size_t>(model.pred_mean.size()) != stats.dim)
    throw ModelError("enrollment model '" + model.model_id +
                     "' does not match the stats dimension");
  return internal::SphericalLogDensity(x - stats.center, model.pred_mean,
                                       model.pred_var);
}

/// log NL(x | k) = log p_k(x) - log p(x).
inline double nl_log_score(const EnrollmentModel &model, const Vector &x,
                           const DomainStats &stats) {
  return predictive_log_density(model, x, stats) -
         marginal_log_density(stats, x);
}

}  // namespace nlscore
