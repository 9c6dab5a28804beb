// nlscore/simulate.hpp

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

// Synthetic cross-domain world with known ground truth.
//
// Speaker means are drawn from N(0, epsilon I). The first domain is the
// canonical one: x = mu + e, e ~ N(0, sigma I). Every other domain redraws the
// within-speaker noise and passes the result through a channel
// xhat = G x + d with G = s Q, Q a seeded rotation, so that the channel
// domain is again spherical with stats (s^2 epsilon, s^2 sigma, center d).

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "nlscore/adapt.hpp"

namespace nlscore {

struct WorldConfig {
  std::size_t dim = 16;
  std::size_t n_speakers = 260;
  std::size_t n_utts_per_domain = 20;
  double epsilon_true = 1.0;
  double sigma_true = 0.5;
  double channel_scale = 1.5;
  double channel_shift_norm = 1.0;
  std::uint64_t rotation_seed = 0;
  std::uint64_t sample_seed = 0;
  std::vector<std::string> domains = {"A", "B"};
  bool identity_rotation = false;  // Q = I for every channel domain

  void Validate() const {
    if (dim == 0) throw ConfigError("world dim must be >= 1");
    if (n_speakers < 2) throw ConfigError("world needs at least 2 speakers");
    if (n_utts_per_domain < 1)
      throw ConfigError("world needs at least 1 utterance per domain");
    if (!(epsilon_true > 0.0 && std::isfinite(epsilon_true)))
      throw ConfigError("epsilon_true must be positive");
    if (!(sigma_true > 0.0 && std::isfinite(sigma_true)))
      throw ConfigError("sigma_true must be positive");
    if (!(channel_scale > 0.0 && std::isfinite(channel_scale)))
      throw ConfigError("channel_scale must be positive");
    if (!(channel_shift_norm >= 0.0 && std::isfinite(channel_shift_norm)))
      throw ConfigError("channel_shift_norm must be non-negative");
    if (domains.empty()) throw ConfigError("world needs at least one domain");
    for (std::size_t i = 0; i < domains.size(); ++i) {
      if (domains[i].empty() ||
          domains[i].find_first_of(" \t\r\n") != std::string::npos)
        throw ConfigError("domain ids must be non-empty without whitespace");
      for (std::size_t j = 0; j < i; ++j)
        if (domains[i] == domains[j])
          throw ConfigError("duplicate domain id '" + domains[i] + "'");
    }
  }
};

struct DomainTruth {
  std::string domain;
  Matrix channel;         // G
  Vector shift;           // d
  DomainTransform inverse;  // M* = G^{-1}, b* = -G^{-1} d
  DomainStats stats;      // implied stats of this domain
};

struct WorldTruth {
  std::vector<DomainTruth> domains;  // same order as WorldConfig::domains
  std::vector<Vector> speaker_means;
};

struct World {
  std::vector<LabeledDataset> data;  // one dataset per domain, config order
  WorldTruth truth;

  const LabeledDataset &Domain(const std::string &id) const {
    for (std::size_t i = 0; i < truth.domains.size(); ++i)
      if (truth.domains[i].domain == id) return data[i];
    throw ConfigError("unknown domain '" + id + "'");
  }
};

inline std::string SpeakerId(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%05zu", k);
  return buf;
}

inline World generate_world(const WorldConfig &cfg) {
  cfg.Validate();
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  std::mt19937_64 rot_rng(cfg.rotation_seed);
  std::mt19937_64 rng(cfg.sample_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  World w;
  for (std::size_t j = 0; j < cfg.domains.size(); ++j) {
    DomainTruth t;
    t.domain = cfg.domains[j];
    if (j == 0) {
      t.channel = Matrix::Identity(d, d);
      t.shift = Vector::Zero(d);
      t.stats = DomainStats::Make(cfg.epsilon_true, cfg.sigma_true, cfg.dim);
    } else {
      const Matrix q = cfg.identity_rotation ? Matrix::Identity(d, d)
                                             : RandomRotation(cfg.dim, rot_rng);
      Vector dir(d);
      for (Eigen::Index i = 0; i < d; ++i) dir(i) = normal(rot_rng);
      t.channel = cfg.channel_scale * q;
      t.shift = cfg.channel_shift_norm * dir / dir.norm();
      const double s2 = cfg.channel_scale * cfg.channel_scale;
      t.stats = DomainStats::Make(s2 * cfg.epsilon_true,
                                  s2 * cfg.sigma_true,
                                  t.shift);
    }
    // G^{-1} = Q^T / s exactly for a scaled rotation.
    const double s = j == 0 ? 1.0 : cfg.channel_scale;
    t.inverse.m = t.channel.transpose() / (s * s);
    t.inverse.b = -(t.inverse.m * t.shift);
    w.truth.domains.push_back(std::move(t));
  }

  const double sd_between = std::sqrt(cfg.epsilon_true);
  const double sd_within = std::sqrt(cfg.sigma_true);
  w.truth.speaker_means.reserve(cfg.n_speakers);
  for (std::size_t k = 0; k < cfg.n_speakers; ++k) {
    Vector mu(d);
    for (Eigen::Index i = 0; i < d; ++i) mu(i) = sd_between * normal(rng);
    w.truth.speaker_means.push_back(std::move(mu));
  }

  for (const auto &dt : w.truth.domains) {
    LabeledDataset ds(cfg.dim);
    for (std::size_t k = 0; k < cfg.n_speakers; ++k) {
      const std::string spk = SpeakerId(k);
      for (std::size_t u = 0; u < cfg.n_utts_per_domain; ++u) {
        Vector x(d);
        for (Eigen::Index i = 0; i < d; ++i)
          x(i) = w.truth.speaker_means[k](i) + sd_within * normal(rng);
        Vector xhat = dt.channel * x + dt.shift;
        char utt[64];
        std::snprintf(utt, sizeof(utt), "%s-%s-u%03zu", dt.domain.c_str(),
                      spk.c_str(), u);
        ds.Add(utt, spk, dt.domain, std::move(xhat));
      }
    }
    w.data.push_back(std::move(ds));
  }
  return w;
}

}  // namespace nlscore
