// nlscore/cli.hpp

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

// Command-line driver. Exit codes: 0 success, 1 usage error, 2 data,
// estimation, training or evaluation error. Diagnostics go to `err` as a
// single line "<ErrorClass>: <message>".

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nlscore/experiments.hpp"
#include "nlscore/io.hpp"
#include "nlscore/simulate.hpp"

namespace nlscore {

namespace cli_detail {

struct WorldFlags {
  WorldConfig cfg;
  std::optional<std::uint64_t> rotation_seed;
  std::string domains = "A,B";

  void Attach(CLI::App *app) {
    app->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
    app->add_option("--speakers", cfg.n_speakers, "Number of speakers")->capture_default_str();
    app->add_option("--utts", cfg.n_utts_per_domain, "Utterances per speaker and domain")
        ->capture_default_str();
    app->add_option("--epsilon", cfg.epsilon_true, "Between-speaker variance")->capture_default_str();
    app->add_option("--sigma", cfg.sigma_true, "Within-speaker variance")->capture_default_str();
    app->add_option("--scale", cfg.channel_scale, "Channel scale s in G = s Q")->capture_default_str();
    app->add_option("--shift", cfg.channel_shift_norm, "Channel shift norm |d|")->capture_default_str();
    app->add_option("--domains", domains, "Comma-separated domain ids; the first is canonical")
        ->capture_default_str();
    app->add_option("--rotation-seed", rotation_seed, "Seed of the channel rotations (default: --seed)");
    app->add_flag("--identity-rotation", cfg.identity_rotation, "Use Q = I for every channel");
  }

  WorldConfig Resolve(std::uint64_t seed) const {
    WorldConfig c = cfg;
    c.sample_seed = seed;
    c.rotation_seed = rotation_seed.value_or(seed);
    c.domains.clear();
    std::string cur;
    for (char ch : domains + ",") {
      if (ch == ',') {
        c.domains.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    return c;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::optional<std::size_t> batch_size;
  std::string init = "identity";
  bool no_volume = false;

  void Attach(CLI::App *app) {
    app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--max-iters", cfg.max_iters, "Maximum Adam iterations")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Minibatch size (default: full batch)");
    app->add_option("--tol", cfg.convergence_tol, "Relative objective change tolerance")
        ->capture_default_str();
    app->add_option("--beta1", cfg.adam_beta1)->capture_default_str();
    app->add_option("--beta2", cfg.adam_beta2)->capture_default_str();
    app->add_option("--adam-eps", cfg.adam_eps)->capture_default_str();
    app->add_option("--init", init, "identity | random-orthogonal")
        ->check(CLI::IsMember({"identity", "random-orthogonal"}))
        ->capture_default_str();
    app->add_flag("--no-volume-term", no_volume, "Drop the log|det M| term from the objective");
  }

  TrainConfig Resolve(std::uint64_t seed) const {
    TrainConfig c = cfg;
    c.seed = seed;
    c.batch_size = batch_size;
    c.init = init == "identity" ? TransformInit::kIdentity : TransformInit::kRandomOrthogonal;
    c.volume_term = !no_volume;
    return c;
  }
};

struct StatsFlags {
  StatsOptions opts;
  void Attach(CLI::App *app) {
    app->add_option("--min-variance", opts.min_variance, "Variance floor")->capture_default_str();
    app->add_flag("--length-normalize", opts.length_normalize,
                  "Scale embeddings to unit length before estimation");
  }
};

inline LabeledDataset LoadPooled(const std::vector<std::string> &paths) {
  std::vector<LabeledDataset> parts;
  for (const auto &p : paths) parts.push_back(parse_embedding_file(p));
  std::vector<const LabeledDataset *> ptrs;
  for (const auto &p : parts) ptrs.push_back(&p);
  return Concatenate(ptrs);
}

inline std::vector<ScoringMethod> ParseMethods(const std::vector<std::string> &names) {
  std::vector<ScoringMethod> out;
  for (const auto &n : names) {
    auto m = ParseMethod(n);
    if (!m) throw CLI::ValidationError("--methods", "unknown method '" + n + "'");
    out.push_back(*m);
  }
  return out;
}

}  // namespace cli_detail

/// Runs one CLI invocation. Results go to `out` or to files named by flags.
inline int cli_dispatch(int argc, const char *const *argv, std::ostream &out,
                        std::ostream &err) {
  using namespace cli_detail;
  CLI::App app{"Normalized-likelihood speaker verification scoring under domain mismatch"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App *sub, bool required) {
    auto *opt = sub->add_option("--seed", seed, "Random seed");
    if (required) opt->required();
  };

  // simulate
  WorldFlags sim_world;
  std::string sim_out;
  auto *sim = app.add_subcommand("simulate", "Generate a synthetic cross-domain world");
  sim_world.Attach(sim);
  add_seed(sim, true);
  sim->add_option("--out-dir", sim_out, "Output directory")->required();

  // estimate-stats
  std::vector<std::string> est_in;
  std::string est_out;
  StatsFlags est_flags;
  auto *est = app.add_subcommand("estimate-stats", "Estimate (epsilon, sigma, center) of one domain");
  est->add_option("--input", est_in, "Embedding file(s), pooled")->required();
  est->add_option("--out", est_out, "Output stats file")->required();
  est_flags.Attach(est);

  // train-mdt
  std::vector<std::string> mdt_in;
  std::string mdt_out;
  double mdt_prop = 1.0;
  StatsFlags mdt_flags;
  auto *mdt = app.add_subcommand("train-mdt", "Estimate pooled stats with controlled label sharing");
  mdt->add_option("--input", mdt_in, "Embedding file(s) covering >= 2 domains")->required();
  mdt->add_option("--proportion", mdt_prop, "Fraction of speakers sharing labels across domains")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  mdt->add_option("--out", mdt_out, "Output stats file")->required();
  add_seed(mdt, true);
  mdt_flags.Attach(mdt);

  // train-transform
  std::string tt_enroll, tt_test, tt_stats, tt_out;
  TrainFlags tt_flags;
  auto *tt = app.add_subcommand("train-transform", "ML training of the test-to-enrollment transform");
  tt->add_option("--enroll", tt_enroll, "Enrollment-domain embeddings")->required();
  tt->add_option("--test", tt_test, "Test-domain embeddings (same speakers)")->required();
  tt->add_option("--enroll-stats", tt_stats, "Enrollment-domain stats file")->required();
  tt->add_option("--out", tt_out, "Output transform file")->required();
  add_seed(tt, true);
  tt_flags.Attach(tt);

  // score
  std::string sc_method, sc_enroll, sc_test, sc_out, sc_trials, sc_write_trials;
  std::optional<std::string> sc_stats, sc_test_stats, sc_transform;
  std::optional<std::size_t> sc_max_nontarget;
  bool sc_length_norm = false;
  auto *sc = app.add_subcommand("score", "Score enrollment/test trials");
  sc->add_option("--method", sc_method, "nl | mdt | dat | dsd | cosine")
      ->required()
      ->check(CLI::IsMember({"nl", "mdt", "dat", "dsd", "cosine"}, CLI::ignore_case));
  sc->add_option("--enroll", sc_enroll, "Enrollment embeddings (one model per speaker)")->required();
  sc->add_option("--test", sc_test, "Test embeddings")->required();
  sc->add_option("--stats", sc_stats, "Stats the enrollment side is scored under");
  sc->add_option("--test-stats", sc_test_stats, "Test-domain stats (dsd)");
  sc->add_option("--transform", sc_transform, "Transform file (dat, dsd)");
  sc->add_option("--trials", sc_trials, "Trial list; generated from the data when absent");
  sc->add_option("--max-nontarget", sc_max_nontarget, "Nontarget trials per model when generating");
  sc->add_option("--write-trials", sc_write_trials, "Also write the generated trial list here");
  sc->add_flag("--length-normalize", sc_length_norm, "Scale embeddings to unit length first");
  sc->add_option("--out", sc_out, "Output score file")->required();
  add_seed(sc, false);

  // evaluate
  std::vector<std::string> ev_in;
  auto *ev = app.add_subcommand("evaluate", "Equal error rate of a score file");
  ev->add_option("--scores", ev_in, "Score file(s), pooled")->required();

  // table1 / table2 / table3
  struct TableFlags {
    WorldFlags world;
    TrainFlags train;
    StatsFlags stats;
    std::vector<std::string> inputs;
    std::string out;
    std::size_t eval_speakers = 60;
    std::size_t enroll_utts = 3;
    std::optional<std::size_t> max_nontarget;
    double mdt_proportion = 1.0;
  };
  TableFlags t1f, t2f, t3f;
  std::vector<double> t1_props = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> t2_methods = {"mdt", "dat", "dsd"}, t3_methods = {"mdt", "dat", "dsd"};
  std::vector<std::size_t> t3_counts = {20, 50, 100, 200};
  auto attach_table = [&](CLI::App *sub, TableFlags &f) {
    f.world.Attach(sub);
    f.train.Attach(sub);
    f.stats.Attach(sub);
    add_seed(sub, true);
    sub->add_option("--input", f.inputs, "Embedding files instead of a simulated world");
    sub->add_option("--out", f.out, "Machine-readable result rows")->required();
    sub->add_option("--eval-speakers", f.eval_speakers, "Held-out evaluation speakers")
        ->capture_default_str();
    sub->add_option("--enroll-utts", f.enroll_utts, "Enrollment utterances per model")
        ->capture_default_str();
    sub->add_option("--max-nontarget", f.max_nontarget, "Nontarget trials per model");
  };
  auto *t1 = app.add_subcommand("table1", "MDT label-proportion sweep");
  attach_table(t1, t1f);
  t1->add_option("--proportions", t1_props, "Proportions of shared labels")
      ->check(CLI::Range(0.0, 1.0));
  auto *t2 = app.add_subcommand("table2", "Method comparison over all domain pairs");
  attach_table(t2, t2f);
  t2->add_option("--methods", t2_methods, "Methods to compare");
  t2->add_option("--mdt-proportion", t2f.mdt_proportion, "Label sharing for MDT")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  auto *t3 = app.add_subcommand("table3", "Method comparison over training-speaker counts");
  attach_table(t3, t3f);
  t3->add_option("--methods", t3_methods, "Methods to compare");
  t3->add_option("--counts", t3_counts, "Training speaker counts (nested subsets)");
  t3->add_option("--mdt-proportion", t3f.mdt_proportion, "Label sharing for MDT")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "UsageError: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return 1;
  }

  auto experiment_config = [&](const TableFlags &f) {
    ExperimentConfig c;
    c.seed = *seed;
    c.n_eval_speakers = f.eval_speakers;
    c.n_enroll_utts = f.enroll_utts;
    c.max_nontarget_per_model = f.max_nontarget;
    c.train = f.train.Resolve(*seed);
    c.stats = f.stats.opts;
    c.mdt_proportion = f.mdt_proportion;
    return c;
  };
  auto table_data = [&](const TableFlags &f) {
    if (!f.inputs.empty()) return std::vector<LabeledDataset>{LoadPooled(f.inputs)};
    return generate_world(f.world.Resolve(*seed)).data;
  };
  auto emit_table = [&](const ResultTable &table, const std::string &path,
                        void (*render)(std::ostream &, const ResultTable &)) {
    render(out, table);
    auto os = internal::OpenOut(path);
    WriteResultRows(os, table);
  };

  try {
    if (*sim) {
      const WorldConfig wc = sim_world.Resolve(*seed);
      const World w = generate_world(wc);
      std::filesystem::create_directories(sim_out);
      const std::filesystem::path dir(sim_out);
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        const DomainTruth &t = w.truth.domains[i];
        WriteEmbeddingFile((dir / (t.domain + ".emb")).string(), w.data[i]);
        WriteStatsFile((dir / (t.domain + ".truth.stats")).string(), t.stats);
        WriteTransformFile((dir / (t.domain + ".truth.transform")).string(), t.inverse);
      }
    } else if (*est) {
      WriteStatsFile(est_out, estimate_domain_stats(LoadPooled(est_in), est_flags.opts));
    } else if (*mdt) {
      WriteStatsFile(mdt_out,
                     mdt_estimate(LoadPooled(mdt_in), {mdt_prop, *seed}, mdt_flags.opts));
    } else if (*tt) {
      TrainReport rep;
      const DomainTransform t =
          train_transform(parse_embedding_file(tt_enroll), parse_embedding_file(tt_test),
                          ReadStatsFile(tt_stats), tt_flags.Resolve(*seed), &rep);
      for (const auto &w : rep.warnings) err << "warning: " << w << "\n";
      err << "train-transform: " << rep.iterations << " iterations, "
          << (rep.converged ? "converged" : "not converged") << ", objective "
          << FormatDouble(rep.objective.back()) << "\n";
      WriteTransformFile(tt_out, t);
    } else if (*sc) {
      const ScoringMethod method = *ParseMethod(sc_method);
      LabeledDataset enroll = parse_embedding_file(sc_enroll);
      LabeledDataset test = parse_embedding_file(sc_test);
      if (sc_length_norm) {
        enroll = LengthNormalize(enroll);
        test = LengthNormalize(test);
      }
      ScoringArtifacts art;
      if (sc_stats) art.stats = ReadStatsFile(*sc_stats);
      if (sc_test_stats) art.test_stats = ReadStatsFile(*sc_test_stats);
      if (sc_transform) art.transform = ReadTransformFile(*sc_transform);
      TrialSet trials;
      if (!sc_trials.empty()) {
        auto is = internal::OpenIn(sc_trials);
        trials = ReadTrials(is, sc_trials);
      } else {
        if (!seed) {
          err << "UsageError: --seed is required when --trials is not given\n";
          return 1;
        }
        std::vector<std::string> warnings;
        trials = make_trials(enroll, test, sc_max_nontarget, *seed, &warnings);
        for (const auto &w : warnings) err << "warning: " << w << "\n";
        if (!sc_write_trials.empty()) {
          auto os = internal::OpenOut(sc_write_trials);
          WriteTrials(os, trials);
        }
      }
      WriteScoreFile(sc_out, score_trials(trials, method, enroll, test, art));
    } else if (*ev) {
      std::vector<ScoreRecord> all;
      for (const auto &p : ev_in) {
        auto part = ReadScoreFile(p);
        all.insert(all.end(), part.begin(), part.end());
      }
      const EerResult r = compute_eer(all);
      out << "EER " << FormatDouble(100.0 * r.eer) << " %\n"
          << "threshold " << FormatDouble(r.threshold) << "\n"
          << "targets " << r.n_target << "\n"
          << "nontargets " << r.n_nontarget << "\n";
    } else if (*t1) {
      const ExperimentConfig c = experiment_config(t1f);
      emit_table(run_table1_sweep(table_data(t1f), t1_props, c), t1f.out, RenderTable1);
    } else if (*t2) {
      const ExperimentConfig c = experiment_config(t2f);
      emit_table(run_table2_experiment(table_data(t2f), ParseMethods(t2_methods), c), t2f.out,
                 RenderTable2);
    } else if (*t3) {
      const ExperimentConfig c = experiment_config(t3f);
      emit_table(run_table3_sweep(table_data(t3f), t3_counts, ParseMethods(t3_methods), c),
                 t3f.out, RenderTable3);
    }
  } catch (const CLI::ValidationError &e) {
    err << "UsageError: " << e.what() << "\n";
    return 1;
  } catch (const Error &e) {
    err << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "IOError: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace nlscore
