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

#include "accdat/wer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "accdat/error.h"

namespace accdat {

const AccentResult* EvalReport::find(int accent_id) const {
  for (const auto& a : accents) {
    if (a.accent_id == accent_id) return &a;
  }
  return nullptr;
}

std::optional<double> weighted_average(std::span<const AccentResult> results,
                                       std::span<const int> accents, Weighting weighting) {
  double num = 0.0;
  double den = 0.0;
  for (int id : accents) {
    for (const auto& r : results) {
      if (r.accent_id != id) continue;
      const double w = weighting == Weighting::kUtterance
                           ? static_cast<double>(r.utterance_count)
                           : static_cast<double>(r.total_ref_words);
      num += r.wer * w;
      den += w;
    }
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

EvalReport wer_aggregate(std::span<const ScoredUtterance> pairs,
                         std::span<const AccentSubset> subsets, Weighting weighting,
                         const std::map<int, std::string>& accent_names) {
  std::map<int, AccentResult> by_accent;
  std::size_t total_words = 0;
  for (const auto& p : pairs) {
    auto& r = by_accent[p.accent_id];
    r.accent_id = p.accent_id;
    r.utterance_count += 1;
    r.total_ref_words += p.ref.size();
    r.total_edits += edit_distance(p.ref, p.hyp);
    total_words += p.ref.size();
  }
  if (total_words == 0) throw InvalidArgument("wer_aggregate: empty reference corpus");

  EvalReport report;
  report.weighting = weighting;
  for (auto& [id, r] : by_accent) {
    if (r.total_ref_words == 0) {
      throw InvalidArgument("wer_aggregate: accent " + std::to_string(id) +
                            " has no reference words");
    }
    r.wer = static_cast<double>(r.total_edits) / static_cast<double>(r.total_ref_words);
    auto name = accent_names.find(id);
    r.name = name != accent_names.end() ? name->second : "accent" + std::to_string(id);
    report.accents.push_back(r);
  }
  report.subsets.assign(subsets.begin(), subsets.end());
  for (const auto& s : report.subsets) {
    auto avg = weighted_average(report.accents, s.accents, weighting);
    report.averages[s.name] = avg ? *avg : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::vector<AccentSubset> default_subsets(std::span<const int> accent_ids) {
  AccentSubset unseen{"unseen", {}};
  AccentSubset all{"all", {}};
  for (int id : accent_ids) {
    if (id != 0) unseen.accents.push_back(id);
    all.accents.push_back(id);
  }
  return {unseen, all};
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["weighting"] = report.weighting == Weighting::kUtterance ? "utterance" : "word";
  j["accents"] = nlohmann::json::array();
  for (const auto& a : report.accents) {
    j["accents"].push_back({{"accent_id", a.accent_id},
                            {"name", a.name},
                            {"utterance_count", a.utterance_count},
                            {"total_ref_words", a.total_ref_words},
                            {"total_edits", a.total_edits},
                            {"wer", a.wer}});
  }
  j["weighted_averages"] = nlohmann::json::array();
  for (const auto& s : report.subsets) {
    const double v = report.averages.at(s.name);
    nlohmann::json entry{{"subset", s.name}, {"accents", s.accents}};
    entry["wer"] = std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
    j["weighted_averages"].push_back(entry);
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.label = j.at("label").get<std::string>();
    const auto w = j.at("weighting").get<std::string>();
    if (w != "utterance" && w != "word") throw DataError("report: unknown weighting '" + w + "'");
    r.weighting = w == "utterance" ? Weighting::kUtterance : Weighting::kWord;
    for (const auto& a : j.at("accents")) {
      AccentResult ar;
      ar.accent_id = a.at("accent_id").get<int>();
      ar.name = a.at("name").get<std::string>();
      ar.utterance_count = a.at("utterance_count").get<std::size_t>();
      ar.total_ref_words = a.at("total_ref_words").get<std::size_t>();
      ar.total_edits = a.at("total_edits").get<std::size_t>();
      ar.wer = a.at("wer").get<double>();
      r.accents.push_back(ar);
    }
    for (const auto& s : j.at("weighted_averages")) {
      AccentSubset sub{s.at("subset").get<std::string>(), s.at("accents").get<std::vector<int>>()};
      r.averages[sub.name] = s.at("wer").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : s.at("wer").get<double>();
      r.subsets.push_back(std::move(sub));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: malformed document: ") + e.what());
  }
}

std::string render_report_table(std::span<const EvalReport> reports) {
  std::map<int, std::string> accents;
  std::vector<std::string> subsets;
  for (const auto& r : reports) {
    for (const auto& a : r.accents) {
      auto& name = accents[a.accent_id];
      if (name.empty()) name = a.name.empty() ? "accent" + std::to_string(a.accent_id) : a.name;
    }
    for (const auto& s : r.subsets) {
      if (std::find(subsets.begin(), subsets.end(), s.name) == subsets.end()) subsets.push_back(s.name);
    }
  }
  std::vector<std::string> header{"regime"};
  for (const auto& [id, name] : accents) header.push_back(name);
  for (const auto& s : subsets) header.push_back("avg " + s);

  auto pct = [](double v) {
    if (std::isnan(v)) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> rows{header};
  for (const auto& r : reports) {
    std::vector<std::string> row{r.label};
    for (const auto& [id, name] : accents) {
      const AccentResult* a = r.find(id);
      row.push_back(a ? pct(a->wer) : "-");
    }
    for (const auto& s : subsets) {
      auto it = r.averages.find(s);
      row.push_back(it == r.averages.end() ? "-" : pct(it->second));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const std::string& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      out += c == 0 ? cell + pad : "  " + pad + cell;
    }
    out += "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c == 0 ? 0 : 2);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

}  // namespace accdat
