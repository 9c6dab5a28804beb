// nlscore/eval.hpp

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

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nlscore/adapt.hpp"

namespace nlscore {

enum class TrialLabel { kTarget, kNontarget, kUnknown };

inline std::string_view LabelName(TrialLabel l) {
  switch (l) {
    case TrialLabel::kTarget: return "target";
    case TrialLabel::kNontarget: return "nontarget";
    default: return "unknown";
  }
}

inline std::optional<TrialLabel> ParseLabel(std::string_view s) {
  if (s == "target") return TrialLabel::kTarget;
  if (s == "nontarget") return TrialLabel::kNontarget;
  if (s == "unknown") return TrialLabel::kUnknown;
  return std::nullopt;
}

struct Trial {
  std::string model_id;
  std::string test_utt_id;
  TrialLabel label = TrialLabel::kUnknown;
  bool operator==(const Trial &) const = default;
};

using TrialSet = std::vector<Trial>;

struct ScoreRecord {
  std::string model_id;
  std::string test_utt_id;
  double score = 0.0;
  TrialLabel label = TrialLabel::kUnknown;
  bool operator==(const ScoreRecord &) const = default;
};

struct EerResult {
  double eer = 0.0;  // fraction in [0,1]
  double threshold = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

/// One model per enrollment speaker (model_id = spk_id). Target trials are all
/// test utterances of the same speaker; nontarget trials are the other
/// speakers' test utterances, subsampled per model to max_nontarget_per_model
/// with a seeded draw when a limit is given. Trials are grouped by model in
/// lexicographic order, targets first, each group in test-file order.
inline TrialSet make_trials(const LabeledDataset &enroll_data,
                            const LabeledDataset &test_data,
                            std::optional<std::size_t> max_nontarget_per_model,
                            std::uint64_t seed,
                            std::vector<std::string> *warnings = nullptr) {
  if (max_nontarget_per_model && *max_nontarget_per_model == 0)
    throw EvalError("max_nontarget_per_model must be positive");
  const auto enroll_groups = enroll_data.BySpeaker();
  const auto test_groups = test_data.BySpeaker();
  std::mt19937_64 rng(seed);
  TrialSet out;
  for (const auto &[spk, enroll_idx] : enroll_groups) {
    auto it = test_groups.find(spk);
    if (it == test_groups.end()) {
      if (warnings)
        warnings->push_back("speaker '" + spk +
                            "' has no test utterances; skipped");
      continue;
    }
    for (std::size_t i : it->second)
      if (enroll_data.Contains(test_data[i].utt_id))
        throw EvalError("test utterance '" + test_data[i].utt_id +
                        "' is also in the enrollment set of model '" + spk +
                        "'");
    for (std::size_t i : it->second)
      out.push_back({spk, test_data[i].utt_id, TrialLabel::kTarget});

    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < test_data.size(); ++i)
      if (test_data[i].spk_id != spk) others.push_back(i);
    if (max_nontarget_per_model && others.size() > *max_nontarget_per_model) {
      // Partial Fisher-Yates, then restore file order.
      const std::size_t keep = *max_nontarget_per_model;
      for (std::size_t k = 0; k < keep; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
        std::swap(others[k], others[pick(rng)]);
      }
      others.resize(keep);
      std::sort(others.begin(), others.end());
    }
    for (std::size_t i : others)
      out.push_back({spk, test_data[i].utt_id, TrialLabel::kNontarget});
  }
  if (out.empty()) throw EvalError("empty trial set");
  return out;
}

enum class ScoringMethod { kNL, kMDT, kDAT, kDSD, kCosine };

inline std::string_view MethodName(ScoringMethod m) {
  switch (m) {
    case ScoringMethod::kNL: return "NL";
    case ScoringMethod::kMDT: return "MDT";
    case ScoringMethod::kDAT: return "DAT";
    case ScoringMethod::kDSD: return "DSD";
    default: return "COSINE";
  }
}

inline std::optional<ScoringMethod> ParseMethod(std::string_view s) {
  std::string lower(s);
  for (auto &c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "nl") return ScoringMethod::kNL;
  if (lower == "mdt") return ScoringMethod::kMDT;
  if (lower == "dat") return ScoringMethod::kDAT;
  if (lower == "dsd") return ScoringMethod::kDSD;
  if (lower == "cosine") return ScoringMethod::kCosine;
  return std::nullopt;
}

/// What a scoring method may need. `stats` is the model the enrollment side
/// is scored under: enrollment-domain stats for NL/DAT/DSD, the pooled
/// label-mixed stats for MDT, and the centering for COSINE.
struct ScoringArtifacts {
  std::optional<DomainStats> stats;
  std::optional<DomainStats> test_stats;  // DSD normalization
  std::optional<DomainTransform> transform;  // DAT, DSD
};

/// Scores every trial. Enrollment models are built from all enrollment
/// utterances of the trial's speaker. Output order equals trial order.
inline std::vector<ScoreRecord> score_trials(const TrialSet &trials,
                                             ScoringMethod method,
                                             const LabeledDataset &enroll_data,
                                             const LabeledDataset &test_data,
                                             const ScoringArtifacts &art) {
  std::string missing;
  auto require = [&](bool present, const char *artifact) {
    if (!present) missing += (missing.empty() ? "'" : ", '") + std::string(artifact) + "'";
  };
  require(art.stats.has_value(), "stats");
  if (method == ScoringMethod::kDSD)
    require(art.test_stats.has_value(), "test-stats");
  if (method == ScoringMethod::kDAT || method == ScoringMethod::kDSD)
    require(art.transform.has_value(), "transform");
  if (!missing.empty())
    throw EvalError("method " + std::string(MethodName(method)) +
                    " requires missing artifact " + missing);

  const DomainStats &stats = *art.stats;
  stats.Validate();
  if (enroll_data.dim() != stats.dim || test_data.dim() != stats.dim)
    throw EvalError("embedding dimension does not match the stats dimension");
  if (art.test_stats) {
    art.test_stats->Validate();
    if (art.test_stats->dim != stats.dim)
      throw EvalError("test-stats dimension does not match stats");
  }
  if (art.transform) {
    art.transform->Validate();
    if (art.transform->dim() != stats.dim)
      throw EvalError("transform dimension does not match stats");
  }

  std::unordered_map<std::string, EnrollmentModel> models;
  for (const auto &[spk, idx] : enroll_data.BySpeaker()) {
    std::vector<Embedding> samples;
    samples.reserve(idx.size());
    for (std::size_t i : idx) samples.push_back(enroll_data[i].embedding);
    models.emplace(spk, build_enrollment_model(stats, spk, samples));
  }
  std::unordered_map<std::string, std::size_t> test_index;
  for (std::size_t i = 0; i < test_data.size(); ++i)
    test_index.emplace(test_data[i].utt_id, i);

  std::vector<ScoreRecord> out;
  out.reserve(trials.size());
  for (const auto &trial : trials) {
    auto m = models.find(trial.model_id);
    if (m == models.end())
      throw EvalError("trial refers to unknown model '" + trial.model_id + "'");
    auto x = test_index.find(trial.test_utt_id);
    if (x == test_index.end())
      throw EvalError("trial refers to unknown test utterance '" +
                      trial.test_utt_id + "'");
    const EnrollmentModel &model = m->second;
    const Vector &xhat = test_data[x->second].embedding;
    double score = 0.0;
    switch (method) {
      case ScoringMethod::kNL:
      case ScoringMethod::kMDT:
        score = nl_log_score(model, xhat, stats);
        break;
      case ScoringMethod::kDAT:
        score = dat_log_score(*art.transform, model, xhat, stats);
        break;
      case ScoringMethod::kDSD:
        score = dsd_log_score(*art.transform, model, xhat, stats,
                              *art.test_stats);
        break;
      case ScoringMethod::kCosine: {
        const Vector y = xhat - stats.center;
        const double denom = y.norm() * model.xbar.norm();
        score = denom > 0.0 ? y.dot(model.xbar) / denom : 0.0;
        break;
      }
    }
    if (!std::isfinite(score))
      throw EvalError("non-finite score for trial " + trial.model_id + " " +
                      trial.test_utt_id);
    out.push_back({trial.model_id, trial.test_utt_id, score, trial.label});
  }
  return out;
}

/// Equal error rate with FAR(t) = #{nontarget >= t} / N_n and
/// FRR(t) = #{target < t} / N_t evaluated at every distinct score t.
///
/// The crossing is bracketed by the last threshold with FRR < FAR and the
/// first with FRR >= FAR; the EER and threshold are linearly interpolated on
/// the FAR - FRR gap between them. When the crossing lands exactly on a
/// score, FAR and FRR are equal on the whole half-open interval
/// (t_prev, t] and the threshold reported is its midpoint. If FRR stays
/// below FAR up to the highest score, the bracket closes at the point
/// (FAR, FRR) = (0, 1) just above it.
inline EerResult compute_eer(const std::vector<ScoreRecord> &records) {
  std::vector<double> target, nontarget;
  for (const auto &r : records) {
    if (r.label == TrialLabel::kTarget) target.push_back(r.score);
    else if (r.label == TrialLabel::kNontarget) nontarget.push_back(r.score);
    else
      throw EvalError("unlabeled trial " + r.model_id + " " + r.test_utt_id);
    if (!std::isfinite(r.score)) throw EvalError("non-finite score");
  }
  if (target.empty()) throw EvalError("no target trials");
  if (nontarget.empty()) throw EvalError("no nontarget trials");
  std::sort(target.begin(), target.end());
  std::sort(nontarget.begin(), nontarget.end());
  std::vector<double> thresholds(target);
  thresholds.insert(thresholds.end(), nontarget.begin(), nontarget.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double nt = static_cast<double>(target.size());
  const double nn = static_cast<double>(nontarget.size());
  auto far_at = [&](double t) {
    const auto ge = nontarget.end() -
                    std::lower_bound(nontarget.begin(), nontarget.end(), t);
    return static_cast<double>(ge) / nn;
  };
  auto frr_at = [&](double t) {
    const auto lt = std::lower_bound(target.begin(), target.end(), t) -
                    target.begin();
    return static_cast<double>(lt) / nt;
  };

  EerResult res;
  res.n_target = target.size();
  res.n_nontarget = nontarget.size();
  double prev_far = far_at(thresholds[0]), prev_frr = frr_at(thresholds[0]);
  // FRR(t_0) = 0 < FAR(t_0) = 1 always holds, so the bracket starts at t_0.
  for (std::size_t j = 1; j <= thresholds.size(); ++j) {
    const bool beyond = j == thresholds.size();
    const double far = beyond ? 0.0 : far_at(thresholds[j]);
    const double frr = beyond ? 1.0 : frr_at(thresholds[j]);
    if (frr < far) {
      prev_far = far;
      prev_frr = frr;
      continue;
    }
    const double gap_prev = prev_far - prev_frr;  // > 0
    const double gap = far - frr;                 // <= 0
    const double lambda = gap_prev / (gap_prev - gap);
    res.eer = prev_far + lambda * (far - prev_far);
    const double t_prev = thresholds[j - 1];
    if (beyond) {
      res.threshold = t_prev;
    } else if (gap == 0.0) {
      res.threshold = 0.5 * (t_prev + thresholds[j]);
    } else {
      res.threshold = t_prev + lambda * (thresholds[j] - t_prev);
    }
    return res;
  }
  return res;  // unreachable: the point beyond the last score always closes
}

}  // namespace nlscore
