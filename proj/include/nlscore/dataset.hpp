// nlscore/dataset.hpp

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

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nlscore/error.hpp"

namespace nlscore {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// An embedding is a plain dense vector; finiteness is checked where data
/// enters the library (dataset construction and file parsing).
using Embedding = Vector;

inline bool AllFinite(const Vector &v) { return v.allFinite(); }

struct Record {
  std::string utt_id;
  std::string spk_id;
  std::string domain_id;
  Embedding embedding;
};

/// Embeddings tagged with utterance, speaker and domain ids.
///
/// Utterance ids are unique and every embedding has dimension dim(). Records
/// keep insertion order, which is what the file writers emit.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ModelError("dataset dimension must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Record> &records() const { return records_; }
  const Record &operator[](std::size_t i) const { return records_[i]; }

  void Add(Record r) {
    if (dim_ == 0) throw ModelError("dataset dimension must be >= 1");
    if (static_cast<std::size_t>(r.embedding.size()) != dim_)
      throw ModelError("utterance '" + r.utt_id + "' has dimension " +
                       std::to_string(r.embedding.size()) + ", expected " +
                       std::to_string(dim_));
    if (!AllFinite(r.embedding))
      throw ModelError("utterance '" + r.utt_id + "' has non-finite entries");
    if (r.utt_id.empty() || r.spk_id.empty() || r.domain_id.empty())
      throw ModelError("record ids must be non-empty");
    if (!utt_ids_.insert(r.utt_id).second)
      throw ModelError("duplicate utterance id '" + r.utt_id + "'");
    records_.push_back(std::move(r));
  }

  void Add(std::string utt, std::string spk, std::string domain,
           Embedding e) {
    Add(Record{std::move(utt), std::move(spk), std::move(domain),
               std::move(e)});
  }

  bool Contains(const std::string &utt_id) const {
    return utt_ids_.count(utt_id) != 0;
  }

  /// Record indices grouped by speaker, speakers in lexicographic order.
  std::map<std::string, std::vector<std::size_t>> BySpeaker() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
      out[records_[i].spk_id].push_back(i);
    return out;
  }

  std::set<std::string> Speakers() const {
    std::set<std::string> out;
    for (const auto &r : records_) out.insert(r.spk_id);
    return out;
  }

  std::set<std::string> Domains() const {
    std::set<std::string> out;
    for (const auto &r : records_) out.insert(r.domain_id);
    return out;
  }

  template <typename Pred>
  LabeledDataset Filter(Pred &&keep) const {
    LabeledDataset out(dim_);
    for (const auto &r : records_)
      if (keep(r)) out.Add(r);
    return out;
  }

  LabeledDataset OnlyDomain(const std::string &domain) const {
    return Filter([&](const Record &r) { return r.domain_id == domain; });
  }

  LabeledDataset OnlySpeakers(const std::set<std::string> &spk) const {
    return Filter([&](const Record &r) { return spk.count(r.spk_id) != 0; });
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Record> records_;
  std::unordered_set<std::string> utt_ids_;
};

/// Concatenates datasets of equal dimension. Utterance ids must stay unique.
inline LabeledDataset Concatenate(const std::vector<const LabeledDataset *> &parts) {
  if (parts.empty()) throw ModelError("nothing to concatenate");
  LabeledDataset out(parts.front()->dim());
  for (const auto *p : parts) {
    if (p->dim() != out.dim())
      throw ModelError("cannot concatenate datasets of different dimension");
    for (const auto &r : p->records()) out.Add(r);
  }
  return out;
}

/// Scales every embedding to unit Euclidean norm. Zero vectors are left alone.
inline LabeledDataset LengthNormalize(const LabeledDataset &data) {
  LabeledDataset out(data.dim());
  for (auto r : data.records()) {
    const double n = r.embedding.norm();
    if (n > 0.0) r.embedding /= n;
    out.Add(std::move(r));
  }
  return out;
}

}  // namespace nlscore
