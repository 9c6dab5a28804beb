// nlscore/adapt.hpp

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

// Scoring under enrollment/test domain mismatch.
//
// A test-domain vector xhat is mapped into enrollment coordinates by the
// affine transform x = M xhat + b. Three scorers share the prediction term
// log p_k(M xhat + b) computed under the enrollment-domain model and differ
// only in the normalization:
//
//   DSD  normalizes with the test-domain marginal of xhat,
//   DAT  normalizes with the enrollment-domain marginal of M xhat + b,
//   MDT  uses no transform; one set of stats is trained on pooled data with
//        a controlled fraction of speaker labels shared across domains.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nlscore/model_core.hpp"

namespace nlscore {

struct DomainTransform {
  Matrix m;
  Vector b;

  static DomainTransform Identity(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Matrix::Identity(d, d), Vector::Zero(d)};
  }

  std::size_t dim() const { return static_cast<std::size_t>(b.size()); }

  void Validate() const {
    if (m.rows() != m.cols())
      throw ModelError("transform matrix must be square");
    if (m.rows() != b.size())
      throw ModelError("transform offset dimension does not match matrix");
    if (b.size() == 0) throw ModelError("transform dimension must be >= 1");
    if (!m.allFinite() || !b.allFinite())
      throw ModelError("transform has non-finite entries");
  }

  bool operator==(const DomainTransform &o) const {
    return m == o.m && b == o.b;
  }
};

/// Returns M xhat + b.
inline Vector transform_apply(const DomainTransform &t, const Vector &xhat) {
  if (xhat.size() != t.b.size() || t.m.cols() != xhat.size())
    throw ModelError("transform_apply: vector dimension " +
                     std::to_string(xhat.size()) +
                     " does not match transform dimension " +
                     std::to_string(t.b.size()));
  return t.m * xhat + t.b;
}

/// log p_k(M xhat + b) under the enrollment-domain model; the transformed
/// vector is centered by enroll_stats.center.
inline double transformed_predictive_log_density(
    const DomainTransform &t, const EnrollmentModel &model, const Vector &xhat,
    const DomainStats &enroll_stats) {
  return predictive_log_density(model, transform_apply(t, xhat), enroll_stats);
}

inline double dsd_log_score(const DomainTransform &t,
                            const EnrollmentModel &model, const Vector &xhat,
                            const DomainStats &enroll_stats,
                            const DomainStats &test_stats) {
  return transformed_predictive_log_density(t, model, xhat, enroll_stats) -
         marginal_log_density(test_stats, xhat);
}

inline double dat_log_score(const DomainTransform &t,
                            const EnrollmentModel &model, const Vector &xhat,
                            const DomainStats &enroll_stats) {
  const Vector x = transform_apply(t, xhat);
  return predictive_log_density(model, x, enroll_stats) -
         marginal_log_density(enroll_stats, x);
}

// ---------------------------------------------------------------------------
// Maximum-likelihood training of the transform.

enum class TransformInit { kIdentity, kRandomOrthogonal };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t max_iters = 10000;
  std::optional<std::size_t> batch_size;  // nullopt: full batch
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double convergence_tol = 1e-7;
  TransformInit init = TransformInit::kIdentity;
  // Adds log|det M| per sample, which makes p_k(M xhat + b) |det M| a
  // normalized density of xhat. Without it the optimum of the objective is a
  // shrunken least-squares regression rather than the inverse channel.
  bool volume_term = true;

  void Validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be positive");
    if (max_iters == 0) throw ConfigError("max_iters must be positive");
    if (batch_size && *batch_size == 0)
      throw ConfigError("batch_size must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0))
      throw ConfigError("adam_beta1 must be in (0,1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw ConfigError("adam_beta2 must be in (0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!(convergence_tol > 0.0))
      throw ConfigError("convergence_tol must be positive");
  }
};

/// One term of the training objective: a test-domain vector paired with the
/// index of its speaker's enrollment model.
struct TrainSample {
  Vector xhat;
  std::size_t model = 0;
};

struct ObjectiveGradient {
  double value = 0.0;
  Matrix grad_m;
  Vector grad_b;
};

namespace internal {

// log|det M| and M^{-T}; returns -inf for singular matrices.
inline double LogAbsDet(const Matrix &m, Matrix *inv_transpose) {
  Eigen::PartialPivLU<Matrix> lu(m);
  double logdet = 0.0;
  const Matrix &packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double u = std::abs(packed(i, i));
    if (u == 0.0) return -std::numeric_limits<double>::infinity();
    logdet += std::log(u);
  }
  if (inv_transpose) *inv_transpose = lu.inverse().transpose();
  return logdet;
}

inline void CheckTransformFor(const DomainTransform &t,
                              const DomainStats &stats) {
  t.Validate();
  if (t.dim() != stats.dim)
    throw TrainError("transform dimension does not match enrollment stats");
}

}  // namespace internal

/// Sum over the batch of log p_k(M xhat + b) (+ log|det M| per sample when
/// volume_term is set), and its analytic gradient with respect to M and b.
inline ObjectiveGradient objective_and_gradient(
    const DomainTransform &t, std::span<const TrainSample> batch,
    std::span<const EnrollmentModel> enroll_models,
    const DomainStats &enroll_stats, bool volume_term = true) {
  internal::CheckTransformFor(t, enroll_stats);
  const auto d = static_cast<Eigen::Index>(t.dim());
  ObjectiveGradient out{0.0, Matrix::Zero(d, d), Vector::Zero(d)};
  if (batch.empty()) return out;

  for (const auto &s : batch) {
    if (s.model >= enroll_models.size())
      throw TrainError("training sample refers to a missing model");
    if (s.xhat.size() != d) throw TrainError("training sample dimension mismatch");
    if (!s.xhat.allFinite()) throw TrainError("non-finite training sample");
    const EnrollmentModel &model = enroll_models[s.model];
    const Vector r = t.m * s.xhat + t.b - enroll_stats.center - model.pred_mean;
    out.value += -0.5 * static_cast<double>(d) *
                     std::log(2.0 * std::numbers::pi * model.pred_var) -
                 r.squaredNorm() / (2.0 * model.pred_var);
    const Vector g = -r / model.pred_var;
    out.grad_m.noalias() += g * s.xhat.transpose();
    out.grad_b += g;
  }
  if (volume_term) {
    Matrix inv_t;
    const double logdet = internal::LogAbsDet(t.m, &inv_t);
    const double n = static_cast<double>(batch.size());
    out.value += n * logdet;
    if (std::isfinite(logdet)) out.grad_m += n * inv_t;
  }
  if (!std::isfinite(out.value) || !out.grad_m.allFinite() ||
      !out.grad_b.allFinite())
    throw TrainError("non-finite objective or gradient");
  return out;
}

/// The full-batch objective reduced to second-order sufficient statistics of
/// the training samples, so each evaluation costs O(D^3) regardless of the
/// number of samples. Agrees with objective_and_gradient() on the same batch.
class TransformObjective {
 public:
  TransformObjective(std::span<const TrainSample> batch,
                     std::span<const EnrollmentModel> enroll_models,
                     const DomainStats &enroll_stats, bool volume_term)
      : dim_(static_cast<Eigen::Index>(enroll_stats.dim)),
        volume_term_(volume_term),
        count_(static_cast<double>(batch.size())) {
    const Eigen::Index d = dim_;
    szz_ = Matrix::Zero(d + 1, d + 1);
    szt_ = Matrix::Zero(d + 1, d);
    Vector z(d + 1);
    for (const auto &s : batch) {
      if (s.model >= enroll_models.size())
        throw TrainError("training sample refers to a missing model");
      if (s.xhat.size() != d) throw TrainError("training sample dimension mismatch");
      if (!s.xhat.allFinite()) throw TrainError("non-finite training sample");
      const EnrollmentModel &model = enroll_models[s.model];
      const double w = 1.0 / model.pred_var;
      z.head(d) = s.xhat;
      z(d) = 1.0;
      const Vector target = enroll_stats.center + model.pred_mean;
      szz_.noalias() += w * z * z.transpose();
      szt_.noalias() += w * z * target.transpose();
      stt_ += w * target.squaredNorm();
      constant_ += -0.5 * static_cast<double>(d) *
                   std::log(2.0 * std::numbers::pi * model.pred_var);
    }
  }

  ObjectiveGradient Evaluate(const DomainTransform &t) const {
    const Eigen::Index d = dim_;
    Matrix a(d, d + 1);
    a.leftCols(d) = t.m;
    a.col(d) = t.b;
    const Matrix a_szz = a * szz_;
    const double quad = (a_szz.cwiseProduct(a)).sum() -
                        2.0 * (a.transpose().cwiseProduct(szt_)).sum() + stt_;
    const Matrix grad = -(a_szz - szt_.transpose());
    ObjectiveGradient out{constant_ - 0.5 * quad, grad.leftCols(d),
                          grad.col(d)};
    if (volume_term_ && count_ > 0.0) {
      Matrix inv_t;
      const double logdet = internal::LogAbsDet(t.m, &inv_t);
      out.value += count_ * logdet;
      if (std::isfinite(logdet)) out.grad_m += count_ * inv_t;
    }
    return out;
  }

 private:
  Eigen::Index dim_;
  bool volume_term_;
  double count_;
  Matrix szz_, szt_;
  double stt_ = 0.0;
  double constant_ = 0.0;
};

struct TrainReport {
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // objective before the first step and after each step
  std::size_t decreasing_steps = 0;  // steps that lowered the objective by more than 1e-6 (relative)
  std::vector<std::string> warnings;
};

/// Seeded random orthogonal matrix with determinant +1 (QR of a Gaussian
/// matrix with the sign convention that makes R's diagonal positive).
inline Matrix RandomRotation(std::size_t dim, std::mt19937_64 &rng) {
  const auto d = static_cast<Eigen::Index>(dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

/// Pairs every test-domain utterance of a speaker shared by both datasets
/// with that speaker's enrollment model, built once from all of the
/// speaker's enrollment-domain utterances. Speakers are visited in
/// lexicographic order.
inline void BuildTrainingBatch(const LabeledDataset &enroll_data,
                               const LabeledDataset &test_data,
                               const DomainStats &enroll_stats,
                               std::vector<EnrollmentModel> *models,
                               std::vector<TrainSample> *samples) {
  if (enroll_data.dim() != enroll_stats.dim || test_data.dim() != enroll_stats.dim)
    throw TrainError("dataset dimensions do not match enrollment stats");
  const auto enroll_groups = enroll_data.BySpeaker();
  const auto test_groups = test_data.BySpeaker();
  models->clear();
  samples->clear();
  for (const auto &[spk, test_idx] : test_groups) {
    auto it = enroll_groups.find(spk);
    if (it == enroll_groups.end()) continue;
    std::vector<Embedding> enroll;
    for (std::size_t i : it->second) enroll.push_back(enroll_data[i].embedding);
    const std::size_t model_index = models->size();
    models->push_back(build_enrollment_model(enroll_stats, spk, enroll));
    for (std::size_t i : test_idx)
      samples->push_back({test_data[i].embedding, model_index});
  }
  if (models->empty())
    throw TrainError("enrollment and test data share no speakers");
}

/// Maximum-likelihood estimate of (M, b) by Adam ascent on the objective
/// above. Deterministic given cfg (including cfg.seed).
inline DomainTransform train_transform(const LabeledDataset &enroll_data,
                                       const LabeledDataset &test_data,
                                       const DomainStats &enroll_stats,
                                       const TrainConfig &cfg,
                                       TrainReport *report = nullptr) {
  cfg.Validate();
  enroll_stats.Validate();
  std::vector<EnrollmentModel> models;
  std::vector<TrainSample> samples;
  BuildTrainingBatch(enroll_data, test_data, enroll_stats, &models, &samples);

  const std::size_t dim = enroll_stats.dim;
  const auto d = static_cast<Eigen::Index>(dim);
  std::mt19937_64 rng(cfg.seed);
  DomainTransform t = DomainTransform::Identity(dim);
  if (cfg.init == TransformInit::kRandomOrthogonal) t.m = RandomRotation(dim, rng);

  const TransformObjective full(samples, models, enroll_stats, cfg.volume_term);
  const bool minibatch = cfg.batch_size && *cfg.batch_size < samples.size();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<TrainSample> batch;

  TrainReport local;
  TrainReport &rep = report ? *report : local;
  rep = TrainReport{};

  Matrix mom1 = Matrix::Zero(d, d + 1), mom2 = Matrix::Zero(d, d + 1);
  Matrix params(d, d + 1);
  params.leftCols(d) = t.m;
  params.col(d) = t.b;

  double previous = full.Evaluate(t).value;
  if (!std::isfinite(previous))
    throw TrainError("non-finite objective at iteration 0");
  rep.objective.push_back(previous);
  const double start = previous;

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    ObjectiveGradient g;
    if (minibatch) {
      batch.clear();
      for (std::size_t k = 0; k < *cfg.batch_size; ++k) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        batch.push_back(samples[order[cursor++]]);
      }
      g = objective_and_gradient(t, batch, models, enroll_stats,
                                 cfg.volume_term);
    } else {
      g = full.Evaluate(t);
    }
    Matrix grad(d, d + 1);
    grad.leftCols(d) = g.grad_m;
    grad.col(d) = g.grad_b;
    if (!grad.allFinite())
      throw TrainError("non-finite gradient at iteration " + std::to_string(iter));

    const double it = static_cast<double>(iter);
    mom1 = cfg.adam_beta1 * mom1 + (1.0 - cfg.adam_beta1) * grad;
    mom2 = cfg.adam_beta2 * mom2 +
           (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
    const double corr1 = 1.0 - std::pow(cfg.adam_beta1, it);
    const double corr2 = 1.0 - std::pow(cfg.adam_beta2, it);
    params.array() += cfg.learning_rate * (mom1.array() / corr1) /
                      ((mom2.array() / corr2).sqrt() + cfg.adam_eps);
    t.m = params.leftCols(d);
    t.b = params.col(d);

    const double current = full.Evaluate(t).value;
    if (!std::isfinite(current))
      throw TrainError("non-finite objective at iteration " + std::to_string(iter));
    rep.objective.push_back(current);
    rep.iterations = iter;
    const double scale = std::max(std::abs(previous), 1.0);
    if (current < previous - 1e-6 * scale) ++rep.decreasing_steps;
    if (iter == 50 && cfg.init == TransformInit::kIdentity && current <= start)
      rep.warnings.push_back(
          "objective did not improve during the first 50 iterations");
    const double change = std::abs(current - previous) / scale;
    previous = current;
    if (change < cfg.convergence_tol) {
      rep.converged = true;
      break;
    }
  }
  if (!minibatch && rep.iterations > 0 &&
      rep.decreasing_steps * 100 > rep.iterations)
    rep.warnings.push_back("objective decreased on " +
                           std::to_string(rep.decreasing_steps) + " of " +
                           std::to_string(rep.iterations) + " steps");
  return t;
}

// ---------------------------------------------------------------------------
// Multi-domain training with controlled label sharing.

struct LabelMixConfig {
  double proportion_independent = 1.0;
  std::uint64_t seed = 0;

  void Validate() const {
    if (!(proportion_independent >= 0.0 && proportion_independent <= 1.0))
      throw ConfigError("proportion_independent must lie in [0,1]");
  }
};

/// Speakers (lexicographic order, then a seeded shuffle, then a prefix of
/// round(p K) speakers) that keep one label across domains.
inline std::set<std::string> SelectSharedSpeakers(const LabeledDataset &pooled,
                                                  const LabelMixConfig &mix) {
  mix.Validate();
  const std::set<std::string> speakers = pooled.Speakers();
  std::vector<std::string> order(speakers.begin(), speakers.end());
  std::mt19937_64 rng(mix.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto keep = static_cast<std::size_t>(
      std::llround(mix.proportion_independent * static_cast<double>(order.size())));
  return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep)};
}

/// Relabels speakers outside the shared subset as "<spk>::<domain>".
inline LabeledDataset RelabelForMixing(const LabeledDataset &pooled,
                                       const LabelMixConfig &mix) {
  const auto shared = SelectSharedSpeakers(pooled, mix);
  LabeledDataset out(pooled.dim());
  for (auto r : pooled.records()) {
    if (!shared.count(r.spk_id)) r.spk_id += "::" + r.domain_id;
    out.Add(std::move(r));
  }
  return out;
}

inline DomainStats mdt_estimate(const LabeledDataset &pooled,
                                const LabelMixConfig &mix,
                                const StatsOptions &opts = {}) {
  if (pooled.Domains().size() < 2)
    throw EstimationError("label mixing needs at least 2 domains");
  if (pooled.Speakers().size() < 2)
    throw EstimationError("label mixing needs at least 2 speakers");
  return estimate_domain_stats(RelabelForMixing(pooled, mix), opts);
}

}  // namespace nlscore
