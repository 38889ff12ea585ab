// Copyright 2026 The accdat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ACCDAT_WER_H_
#define ACCDAT_WER_H_

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace accdat {

/// Levenshtein distance with unit insert/delete/substitute costs.
template <typename T>
std::size_t edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1);
  std::vector<std::size_t> cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

template <typename T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return edit_distance(std::span<const T>(ref), std::span<const T>(hyp));
}

enum class Weighting { kUtterance, kWord };

struct AccentResult {
  int accent_id = 0;
  std::string name;
  std::size_t utterance_count = 0;
  std::size_t total_ref_words = 0;
  std::size_t total_edits = 0;
  double wer = 0.0;  // total_edits / total_ref_words
};

/// A named group of accents whose per-accent WERs are averaged.
struct AccentSubset {
  std::string name;
  std::vector<int> accents;
};

/// Per-accent word error rates plus weighted averages over subsets.
struct EvalReport {
  std::string label;
  Weighting weighting = Weighting::kUtterance;
  std::vector<AccentResult> accents;  // sorted by accent_id
  std::vector<AccentSubset> subsets;
  std::map<std::string, double> averages;

  const AccentResult* find(int accent_id) const;
};

/// Weighted mean of the per-accent WERs of `accents` that appear in
/// `results`: utterance counts or reference word counts as weights.
/// Returns nullopt when none of them appear.
std::optional<double> weighted_average(std::span<const AccentResult> results,
                                       std::span<const int> accents, Weighting weighting);

struct ScoredUtterance {
  std::vector<std::string> ref;
  std::vector<std::string> hyp;
  int accent_id = 0;
};

/// Aggregates scored utterances into an EvalReport. Throws InvalidArgument
/// when the references contain no words at all.
EvalReport wer_aggregate(std::span<const ScoredUtterance> pairs,
                         std::span<const AccentSubset> subsets,
                         Weighting weighting = Weighting::kUtterance,
                         const std::map<int, std::string>& accent_names = {});

/// "unseen" = every accent except 0, "all" = every accent.
std::vector<AccentSubset> default_subsets(std::span<const int> accent_ids);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Fixed-width text table, one row per report: per-accent WER then each
/// weighted average, in percent. Accents are the union over all reports.
std::string render_report_table(std::span<const EvalReport> reports);

}  // namespace accdat

#endif  // ACCDAT_WER_H_
