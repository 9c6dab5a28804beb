// nlscore/experiments.hpp

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

// Cross-domain experiment drivers.
//
// Speakers present in every domain are split (seeded) into evaluation and
// training speakers. Training speakers provide the stats, the label-mixed
// pooled stats and the transform; evaluation speakers provide the trials:
// each evaluation speaker's utterances in a domain are split (seeded) into
// n_enroll_utts enrollment utterances and the rest for test. A case "A-B"
// enrolls on domain A and tests on domain B.

#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nlscore/eval.hpp"
#include "nlscore/io.hpp"

namespace nlscore {

struct ExperimentConfig {
  std::size_t n_eval_speakers = 60;
  std::size_t n_enroll_utts = 3;
  std::optional<std::size_t> max_nontarget_per_model;  // nullopt: all
  std::uint64_t seed = 0;
  TrainConfig train;
  StatsOptions stats;
  double mdt_proportion = 1.0;  // label sharing used for MDT in method tables

  void Validate() const {
    if (n_eval_speakers < 2) throw ConfigError("need at least 2 evaluation speakers");
    if (n_enroll_utts < 1) throw ConfigError("need at least 1 enrollment utterance");
    if (!(mdt_proportion >= 0.0 && mdt_proportion <= 1.0))
      throw ConfigError("mdt proportion must lie in [0,1]");
    train.Validate();
  }
};

/// Per-domain data after the speaker and enrollment/test splits.
struct ExperimentSplit {
  std::vector<std::string> domains;
  std::vector<std::string> train_speakers;  // seeded order; prefixes are nested subsets
  std::map<std::string, LabeledDataset> train;   // all training-speaker data
  std::map<std::string, LabeledDataset> enroll;  // evaluation enrollment part
  std::map<std::string, LabeledDataset> test;    // evaluation test part
};

inline ExperimentSplit SplitExperiment(const std::vector<LabeledDataset> &per_domain,
                                       const ExperimentConfig &cfg) {
  cfg.Validate();
  std::vector<LabeledDataset> parts;
  for (const auto &ds : per_domain)
    for (const auto &dom : ds.Domains()) parts.push_back(ds.OnlyDomain(dom));
  ExperimentSplit split;
  std::map<std::string, const LabeledDataset *> by_domain;
  for (const auto &p : parts) {
    const std::string dom = *p.Domains().begin();
    if (by_domain.count(dom)) throw ConfigError("domain '" + dom + "' given twice");
    by_domain[dom] = &p;
  }
  if (by_domain.size() < 2) throw ConfigError("experiments need at least 2 domains");
  const std::size_t dim = by_domain.begin()->second->dim();

  std::set<std::string> common;
  bool first = true;
  for (const auto &[dom, ds] : by_domain) {
    if (ds->dim() != dim) throw ConfigError("domains differ in dimension");
    split.domains.push_back(dom);
    const auto spk = ds->Speakers();
    if (first) common = spk;
    else {
      std::set<std::string> keep;
      for (const auto &s : common)
        if (spk.count(s)) keep.insert(s);
      common.swap(keep);
    }
    first = false;
  }
  if (common.size() < cfg.n_eval_speakers + 2)
    throw ConfigError("only " + std::to_string(common.size()) +
                      " speakers are present in every domain; need " +
                      std::to_string(cfg.n_eval_speakers) +
                      " for evaluation plus at least 2 for training");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::string> order(common.begin(), common.end());
  std::shuffle(order.begin(), order.end(), rng);
  const std::set<std::string> eval_spk(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(cfg.n_eval_speakers));
  split.train_speakers.assign(order.begin() + static_cast<std::ptrdiff_t>(cfg.n_eval_speakers),
                              order.end());
  const std::set<std::string> train_spk(split.train_speakers.begin(),
                                        split.train_speakers.end());

  for (const auto &[dom, ds] : by_domain) {
    split.train.emplace(dom, ds->OnlySpeakers(train_spk));
    LabeledDataset enroll(dim), test(dim);
    for (const auto &[spk, idx] : ds->BySpeaker()) {
      if (!eval_spk.count(spk)) continue;
      if (idx.size() <= cfg.n_enroll_utts)
        throw ConfigError("speaker '" + spk + "' has too few utterances in domain '" +
                          dom + "' for the enrollment split");
      std::vector<std::size_t> shuffled(idx);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::vector<bool> is_enroll(ds->size(), false);
      for (std::size_t k = 0; k < cfg.n_enroll_utts; ++k) is_enroll[shuffled[k]] = true;
      for (std::size_t i : idx) (is_enroll[i] ? enroll : test).Add((*ds)[i]);
    }
    split.enroll.emplace(dom, std::move(enroll));
    split.test.emplace(dom, std::move(test));
  }
  return split;
}

struct ResultRow {
  std::string case_name;  // "A-B"
  std::string method;     // NL, BASE, MDT, DAT, DSD, COSINE
  std::size_t n_speakers = 0;  // training speakers used
  std::optional<double> proportion;
  double eer_percent = 0.0;
  bool operator==(const ResultRow &) const = default;
};

struct ResultTable {
  std::string title;
  std::vector<ResultRow> rows;
};

/// Scores one enrollment/test case with every requested method, training the
/// artifacts from the first n_train training speakers.
inline std::vector<ResultRow> RunCase(const ExperimentSplit &split,
                                      const std::string &enroll_dom,
                                      const std::string &test_dom,
                                      std::size_t n_train,
                                      const std::vector<ScoringMethod> &methods,
                                      const ExperimentConfig &cfg) {
  if (n_train > split.train_speakers.size() || n_train < 2)
    throw ConfigError("cannot train on " + std::to_string(n_train) +
                      " speakers; " + std::to_string(split.train_speakers.size()) +
                      " available");
  const std::set<std::string> subset(split.train_speakers.begin(),
                                     split.train_speakers.begin() + static_cast<std::ptrdiff_t>(n_train));
  const LabeledDataset enroll_train = split.train.at(enroll_dom).OnlySpeakers(subset);
  const LabeledDataset test_train = split.train.at(test_dom).OnlySpeakers(subset);
  const LabeledDataset &enroll_eval = split.enroll.at(enroll_dom);
  const LabeledDataset &test_eval = split.test.at(test_dom);
  const std::string case_name = enroll_dom + "-" + test_dom;

  const TrialSet trials =
      make_trials(enroll_eval, test_eval, cfg.max_nontarget_per_model, cfg.seed);
  const DomainStats enroll_stats = estimate_domain_stats(enroll_train, cfg.stats);

  std::optional<DomainStats> test_stats, mdt_stats;
  std::optional<DomainTransform> transform;
  std::vector<ResultRow> rows;
  for (ScoringMethod m : methods) {
    ScoringArtifacts art;
    art.stats = enroll_stats;
    std::optional<double> proportion;
    switch (m) {
      case ScoringMethod::kMDT: {
        if (!mdt_stats) {
          const LabeledDataset pooled = Concatenate({&enroll_train, &test_train});
          mdt_stats = mdt_estimate(pooled, {cfg.mdt_proportion, cfg.seed}, cfg.stats);
        }
        art.stats = *mdt_stats;
        proportion = cfg.mdt_proportion;
        break;
      }
      case ScoringMethod::kDSD:
      case ScoringMethod::kDAT:
        if (!transform) {
          TrainConfig tc = cfg.train;
          transform = train_transform(enroll_train, test_train, enroll_stats, tc);
        }
        if (!test_stats) test_stats = estimate_domain_stats(test_train, cfg.stats);
        art.transform = transform;
        art.test_stats = test_stats;
        break;
      default:
        break;
    }
    const auto scores = score_trials(trials, m, enroll_eval, test_eval, art);
    rows.push_back({case_name, std::string(MethodName(m)), n_train, proportion,
                    100.0 * compute_eer(scores).eer});
  }
  return rows;
}

/// Every ordered domain pair: mismatched pairs get one row per method,
/// matched pairs one NL row (the floor reference).
inline ResultTable run_table2_experiment(const std::vector<LabeledDataset> &per_domain,
                                         const std::vector<ScoringMethod> &methods,
                                         const ExperimentConfig &cfg) {
  const ExperimentSplit split = SplitExperiment(per_domain, cfg);
  ResultTable table{"EER(%) by method, enrollment domain - test domain", {}};
  const std::size_t n_train = split.train_speakers.size();
  for (const auto &a : split.domains)
    for (const auto &b : split.domains) {
      const auto rows = a == b ? RunCase(split, a, b, n_train, {ScoringMethod::kNL}, cfg)
                               : RunCase(split, a, b, n_train, methods, cfg);
      table.rows.insert(table.rows.end(), rows.begin(), rows.end());
    }
  return table;
}

/// Label-proportion sweep for MDT. Every case also gets a BASE row: NL
/// scoring with stats trained on enrollment-domain data only.
inline ResultTable run_table1_sweep(const std::vector<LabeledDataset> &per_domain,
                                    const std::vector<double> &proportions,
                                    const ExperimentConfig &cfg) {
  for (double p : proportions)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("proportions must lie in [0,1]");
  const ExperimentSplit split = SplitExperiment(per_domain, cfg);
  ResultTable table{"EER(%) of MDT by proportion of domain-independent labels", {}};
  const std::size_t n_train = split.train_speakers.size();
  for (const auto &a : split.domains)
    for (const auto &b : split.domains) {
      auto base = RunCase(split, a, b, n_train, {ScoringMethod::kNL}, cfg);
      base.front().method = "BASE";
      table.rows.push_back(base.front());
      if (a == b) continue;
      for (double p : proportions) {
        ExperimentConfig c = cfg;
        c.mdt_proportion = p;
        const auto rows = RunCase(split, a, b, n_train, {ScoringMethod::kMDT}, c);
        table.rows.push_back(rows.front());
      }
    }
  return table;
}

/// Data-amount sweep over nested training-speaker subsets, mismatched cases
/// only.
inline ResultTable run_table3_sweep(const std::vector<LabeledDataset> &per_domain,
                                    const std::vector<std::size_t> &speaker_counts,
                                    const std::vector<ScoringMethod> &methods,
                                    const ExperimentConfig &cfg) {
  const ExperimentSplit split = SplitExperiment(per_domain, cfg);
  for (std::size_t c : speaker_counts)
    if (c > split.train_speakers.size() || c < 2)
      throw ConfigError("speaker count " + std::to_string(c) + " outside [2, " +
                        std::to_string(split.train_speakers.size()) + "]");
  ResultTable table{"EER(%) by method and number of training speakers", {}};
  for (const auto &a : split.domains)
    for (const auto &b : split.domains) {
      if (a == b) continue;
      for (std::size_t c : speaker_counts) {
        const auto rows = RunCase(split, a, b, c, methods, cfg);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
      }
    }
  return table;
}

// ---------------------------------------------------------------------------
// Reporting

inline std::string FormatProportion(const std::optional<double> &p) {
  return p ? FormatDouble(*p) : std::string("-");
}

/// Machine-readable rows: "case method n_speakers proportion eer_percent".
inline void WriteResultRows(std::ostream &os, const ResultTable &table) {
  os << "case method n_speakers proportion eer_percent\n";
  for (const auto &r : table.rows)
    os << r.case_name << ' ' << r.method << ' ' << r.n_speakers << ' '
       << FormatProportion(r.proportion) << ' ' << FormatDouble(r.eer_percent)
       << '\n';
}

/// Aligned text grid. Row keys and column keys are derived from each row by
/// the two callbacks; cells without a value print "-".
template <typename RowKey, typename ColKey>
void RenderGrid(std::ostream &os, const ResultTable &table, RowKey row_key,
                ColKey col_key, const std::string &corner) {
  std::vector<std::string> rows, cols;
  std::map<std::pair<std::string, std::string>, double> cells;
  auto remember = [](std::vector<std::string> &v, const std::string &k) {
    if (std::find(v.begin(), v.end(), k) == v.end()) v.push_back(k);
  };
  for (const auto &r : table.rows) {
    const std::string rk = row_key(r), ck = col_key(r);
    remember(rows, rk);
    remember(cols, ck);
    cells[{rk, ck}] = r.eer_percent;
  }
  std::size_t first_width = corner.size();
  for (const auto &r : rows) first_width = std::max(first_width, r.size());
  std::size_t width = 8;
  for (const auto &c : cols) width = std::max(width, c.size());
  os << table.title << "\n";
  os << std::left << std::setw(static_cast<int>(first_width)) << corner;
  for (const auto &c : cols) os << "  " << std::right << std::setw(static_cast<int>(width)) << c;
  os << "\n";
  for (const auto &r : rows) {
    os << std::left << std::setw(static_cast<int>(first_width)) << r;
    for (const auto &c : cols) {
      auto it = cells.find({r, c});
      std::ostringstream cell;
      if (it == cells.end()) cell << "-";
      else cell << std::fixed << std::setprecision(3) << it->second;
      os << "  " << std::right << std::setw(static_cast<int>(width)) << cell.str();
    }
    os << "\n";
  }
}

inline void RenderTable2(std::ostream &os, const ResultTable &t) {
  RenderGrid(
      os, t, [](const ResultRow &r) { return r.case_name; },
      [](const ResultRow &r) { return r.method == "NL" ? std::string("NL(floor)") : r.method; },
      "case");
}

inline void RenderTable1(std::ostream &os, const ResultTable &t) {
  RenderGrid(
      os, t, [](const ResultRow &r) { return r.case_name; },
      [](const ResultRow &r) {
        if (!r.proportion) return r.method;
        std::ostringstream s;
        s << std::llround(100.0 * *r.proportion) << "%";
        return s.str();
      },
      "case");
}

inline void RenderTable3(std::ostream &os, const ResultTable &t) {
  RenderGrid(
      os, t, [](const ResultRow &r) { return r.method + " " + r.case_name; },
      [](const ResultRow &r) { return std::to_string(r.n_speakers); },
      "method case");
}

}  // namespace nlscore
