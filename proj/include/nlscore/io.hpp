// nlscore/io.hpp

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

// Plain-text file formats. Floats are written with 17 significant digits via
// std::to_chars and read with std::from_chars, so every format round-trips
// exactly and neither direction depends on the C locale.
//
//   embeddings   "#dim D", then "utt spk domain v1 ... vD" per line
//   stats        "dim D" / "epsilon e" / "sigma s" / "center c1 ... cD"
//   transform    "dim D", D rows of M, one row of b
//   trials       "model_id test_utt_id label"
//   scores       "model_id test_utt_id score label"
//
// Lines starting with '#' are comments (except the "#dim" header of an
// embedding file); blank lines are ignored.

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nlscore/eval.hpp"

namespace nlscore {

inline std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace internal {

inline std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool IsSkippable(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

class LineReader {
 public:
  LineReader(std::istream &is, std::string source)
      : is_(is), source_(std::move(source)) {}

  // Next non-comment line, split into fields; false at end of input.
  bool Next(std::vector<std::string_view> *fields) {
    while (std::getline(is_, line_)) {
      ++lineno_;
      if (IsSkippable(line_)) continue;
      *fields = SplitFields(line_);
      return true;
    }
    return false;
  }

  // Like Next() but returns raw lines, comments included.
  bool NextRaw(std::string_view *line) {
    if (!std::getline(is_, line_)) return false;
    ++lineno_;
    *line = line_;
    return true;
  }

  [[noreturn]] void Fail(const std::string &msg) const {
    throw ParseError(source_ + ":" + std::to_string(lineno_) + ": " + msg);
  }

  double ParseDouble(std::string_view s) const {
    double v = 0.0;
    const char *first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      Fail("cannot parse number '" + std::string(s) + "'");
    if (!std::isfinite(v)) Fail("non-finite number '" + std::string(s) + "'");
    return v;
  }

  std::size_t ParseCount(std::string_view s) const {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0)
      Fail("expected a positive integer, got '" + std::string(s) + "'");
    return v;
  }

 private:
  std::istream &is_;
  std::string source_;
  std::string line_;
  std::size_t lineno_ = 0;
};

inline std::ifstream OpenIn(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path + ": cannot open for reading");
  return is;
}

inline std::ofstream OpenOut(const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path + ": cannot open for writing");
  return os;
}

inline void WriteRow(std::ostream &os, const Vector &v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    os << (i ? " " : "") << FormatDouble(v(i));
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Embeddings

inline LabeledDataset ReadEmbeddings(std::istream &is,
                                     const std::string &source = "<stream>") {
  internal::LineReader reader(is, source);
  std::string_view raw;
  std::size_t dim = 0;
  while (reader.NextRaw(&raw)) {
    const auto fields = internal::SplitFields(raw);
    if (fields.empty()) continue;
    if (fields[0] == "#dim") {
      if (fields.size() != 2) reader.Fail("malformed '#dim' header");
      dim = reader.ParseCount(fields[1]);
      break;
    }
    if (fields[0].front() == '#') continue;
    reader.Fail("missing '#dim <D>' header before the first record");
  }
  if (dim == 0) reader.Fail("missing '#dim <D>' header");

  LabeledDataset out(dim);
  std::vector<std::string_view> fields;
  while (reader.Next(&fields)) {
    if (fields.size() != dim + 3)
      reader.Fail("expected utt spk domain and " + std::to_string(dim) +
                  " values, got " + std::to_string(fields.size()) + " fields");
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i)
      v(static_cast<Eigen::Index>(i)) = reader.ParseDouble(fields[3 + i]);
    const std::string utt(fields[0]);
    if (out.Contains(utt)) reader.Fail("duplicate utterance id '" + utt + "'");
    out.Add(utt, std::string(fields[1]), std::string(fields[2]), std::move(v));
  }
  return out;
}

inline LabeledDataset parse_embedding_file(const std::string &path) {
  auto is = internal::OpenIn(path);
  return ReadEmbeddings(is, path);
}

inline void WriteEmbeddings(std::ostream &os, const LabeledDataset &data) {
  os << "#dim " << data.dim() << "\n";
  for (const auto &r : data.records()) {
    os << r.utt_id << ' ' << r.spk_id << ' ' << r.domain_id << ' ';
    internal::WriteRow(os, r.embedding);
    os << '\n';
  }
}

inline void WriteEmbeddingFile(const std::string &path,
                               const LabeledDataset &data) {
  auto os = internal::OpenOut(path);
  WriteEmbeddings(os, data);
}

// ---------------------------------------------------------------------------
// DomainStats

inline void WriteStats(std::ostream &os, const DomainStats &s) {
  os << "dim " << s.dim << "\n";
  os << "epsilon " << FormatDouble(s.epsilon) << "\n";
  os << "sigma " << FormatDouble(s.sigma) << "\n";
  os << "center ";
  internal::WriteRow(os, s.center);
  os << "\n";
}

inline DomainStats ReadStats(std::istream &is,
                             const std::string &source = "<stream>") {
  internal::LineReader reader(is, source);
  std::vector<std::string_view> f;
  DomainStats s;
  bool have_eps = false, have_sigma = false, have_center = false;
  while (reader.Next(&f)) {
    const std::string_view key = f[0];
    if (key == "dim") {
      if (f.size() != 2) reader.Fail("malformed 'dim' line");
      s.dim = reader.ParseCount(f[1]);
    } else if (key == "epsilon" || key == "sigma") {
      if (f.size() != 2) reader.Fail("malformed '" + std::string(key) + "' line");
      const double v = reader.ParseDouble(f[1]);
      if (!(v > 0.0)) reader.Fail(std::string(key) + " must be positive");
      (key == "epsilon" ? s.epsilon : s.sigma) = v;
      (key == "epsilon" ? have_eps : have_sigma) = true;
    } else if (key == "center") {
      if (s.dim == 0) reader.Fail("'center' before 'dim'");
      if (f.size() != s.dim + 1)
        reader.Fail("center needs " + std::to_string(s.dim) + " values");
      s.center.resize(static_cast<Eigen::Index>(s.dim));
      for (std::size_t i = 0; i < s.dim; ++i)
        s.center(static_cast<Eigen::Index>(i)) = reader.ParseDouble(f[i + 1]);
      have_center = true;
    } else {
      reader.Fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (s.dim == 0 || !have_eps || !have_sigma || !have_center)
    throw ParseError(source + ": incomplete stats file (need dim, epsilon, "
                              "sigma, center)");
  return s;
}

inline DomainStats ReadStatsFile(const std::string &path) {
  auto is = internal::OpenIn(path);
  return ReadStats(is, path);
}

inline void WriteStatsFile(const std::string &path, const DomainStats &s) {
  auto os = internal::OpenOut(path);
  WriteStats(os, s);
}

// ---------------------------------------------------------------------------
// DomainTransform

inline void WriteTransform(std::ostream &os, const DomainTransform &t) {
  os << "dim " << t.dim() << "\n";
  for (Eigen::Index i = 0; i < t.m.rows(); ++i) {
    internal::WriteRow(os, t.m.row(i).transpose());
    os << "\n";
  }
  internal::WriteRow(os, t.b);
  os << "\n";
}

inline DomainTransform ReadTransform(std::istream &is,
                                     const std::string &source = "<stream>") {
  internal::LineReader reader(is, source);
  std::vector<std::string_view> f;
  if (!reader.Next(&f) || f.size() != 2 || f[0] != "dim")
    reader.Fail("expected 'dim <D>'");
  const std::size_t dim = reader.ParseCount(f[1]);
  const auto d = static_cast<Eigen::Index>(dim);
  DomainTransform t{Matrix(d, d), Vector(d)};
  for (Eigen::Index row = 0; row <= d; ++row) {
    if (!reader.Next(&f))
      reader.Fail("transform ends early: expected " + std::to_string(dim + 1) +
                  " rows after 'dim'");
    if (f.size() != dim)
      reader.Fail("transform row needs " + std::to_string(dim) + " values");
    for (Eigen::Index c = 0; c < d; ++c) {
      const double v = reader.ParseDouble(f[static_cast<std::size_t>(c)]);
      if (row < d) t.m(row, c) = v;
      else t.b(c) = v;
    }
  }
  if (reader.Next(&f)) reader.Fail("unexpected trailing data in transform");
  return t;
}

inline DomainTransform ReadTransformFile(const std::string &path) {
  auto is = internal::OpenIn(path);
  return ReadTransform(is, path);
}

inline void WriteTransformFile(const std::string &path,
                               const DomainTransform &t) {
  auto os = internal::OpenOut(path);
  WriteTransform(os, t);
}

// ---------------------------------------------------------------------------
// Trials and scores

inline void WriteTrials(std::ostream &os, const TrialSet &trials) {
  for (const auto &t : trials)
    os << t.model_id << ' ' << t.test_utt_id << ' ' << LabelName(t.label) << '\n';
}

inline TrialSet ReadTrials(std::istream &is,
                           const std::string &source = "<stream>") {
  internal::LineReader reader(is, source);
  std::vector<std::string_view> f;
  TrialSet out;
  while (reader.Next(&f)) {
    if (f.size() != 2 && f.size() != 3)
      reader.Fail("expected 'model_id test_utt_id [label]'");
    Trial t{std::string(f[0]), std::string(f[1]), TrialLabel::kUnknown};
    if (f.size() == 3) {
      auto label = ParseLabel(f[2]);
      if (!label) reader.Fail("unknown label '" + std::string(f[2]) + "'");
      t.label = *label;
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline void WriteScores(std::ostream &os,
                        const std::vector<ScoreRecord> &records) {
  for (const auto &r : records)
    os << r.model_id << ' ' << r.test_utt_id << ' ' << FormatDouble(r.score)
       << ' ' << LabelName(r.label) << '\n';
}

inline std::vector<ScoreRecord> ReadScores(std::istream &is,
                                           const std::string &source = "<stream>") {
  internal::LineReader reader(is, source);
  std::vector<std::string_view> f;
  std::vector<ScoreRecord> out;
  while (reader.Next(&f)) {
    if (f.size() != 4) reader.Fail("expected 'model_id test_utt_id score label'");
    auto label = ParseLabel(f[3]);
    if (!label) reader.Fail("unknown label '" + std::string(f[3]) + "'");
    out.push_back({std::string(f[0]), std::string(f[1]),
                   reader.ParseDouble(f[2]), *label});
  }
  return out;
}

inline std::vector<ScoreRecord> ReadScoreFile(const std::string &path) {
  auto is = internal::OpenIn(path);
  return ReadScores(is, path);
}

inline void WriteScoreFile(const std::string &path,
                           const std::vector<ScoreRecord> &records) {
  auto os = internal::OpenOut(path);
  WriteScores(os, records);
}

}  // namespace nlscore
