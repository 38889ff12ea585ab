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

#include <doctest.h>

#include <cmath>
#include <string>

#include "accdat/error.h"
#include "accdat/wer.h"
#include "test_support.h"

using namespace accdat;

namespace {

std::vector<char> chars(const std::string& s) { return {s.begin(), s.end()}; }

// Independent oracle: the utterance-weighted mean written out directly.
double weighted(const std::vector<std::size_t>& n, const std::vector<double>& w, std::size_t from) {
  double num = 0, den = 0;
  for (std::size_t a = from; a < n.size(); ++a) {
    num += static_cast<double>(n[a]) * w[a];
    den += static_cast<double>(n[a]);
  }
  return num / den;
}

}  // namespace

TEST_CASE("edit distance examples") {
  CHECK(edit_distance(chars("abc"), chars("abc")) == 0);
  CHECK(edit_distance(chars(""), chars("abcd")) == 4);
  CHECK(edit_distance(chars("kitten"), chars("sitting")) == 3);
  CHECK(edit_distance(chars("flaw"), chars("lawn")) == 2);
}

TEST_CASE("wer_aggregate: perfect hypotheses give zero") {
  const std::vector<ScoredUtterance> pairs = {{{"a", "b"}, {"a", "b"}, 0}, {{"c"}, {"c"}, 0}};
  const auto report = wer_aggregate(pairs, {});
  REQUIRE(report.accents.size() == 1);
  CHECK(report.accents[0].wer == 0.0);
}

TEST_CASE("wer_aggregate: deletions only give 100%") {
  const std::vector<ScoredUtterance> pairs = {{{"a", "b"}, {"a", "b"}, 0}, {{"c", "d"}, {}, 1}};
  const int ids[] = {0, 1};
  const auto report = wer_aggregate(pairs, default_subsets(ids));
  CHECK(report.find(0)->wer == 0.0);
  CHECK(report.find(1)->wer == 1.0);
  CHECK(report.averages.at("unseen") == 1.0);
  CHECK(report.averages.at("all") == doctest::Approx(0.5));
}

TEST_CASE("wer_aggregate: word weighting uses reference word counts") {
  const std::vector<ScoredUtterance> pairs = {
      {{"a"}, {"b"}, 0}, {{"a", "b", "c"}, {"a", "b", "c"}, 1}};
  const int ids[] = {0, 1};
  const auto by_word = wer_aggregate(pairs, default_subsets(ids), Weighting::kWord);
  CHECK(by_word.averages.at("all") == doctest::Approx(0.25));
  const auto by_utt = wer_aggregate(pairs, default_subsets(ids), Weighting::kUtterance);
  CHECK(by_utt.averages.at("all") == doctest::Approx(0.5));
}

TEST_CASE("wer_aggregate: empty references are rejected") {
  const std::vector<ScoredUtterance> pairs = {{{}, {"a"}, 0}};
  CHECK_THROWS_AS(wer_aggregate(pairs, {}), InvalidArgument);
}

TEST_CASE("wer_aggregate: published baseline row") {
  const auto pairs = testing::utterances_with_wers(testing::kTableCounts, testing::kTableBaseline);
  const int ids[] = {0, 1, 2, 3, 4, 5, 6};
  const auto report = wer_aggregate(pairs, default_subsets(ids));
  for (std::size_t a = 0; a < 7; ++a) {
    CHECK(report.accents[a].utterance_count == testing::kTableCounts[a]);
    CHECK(100 * report.accents[a].wer == doctest::Approx(testing::kTableBaseline[a]).epsilon(1e-12));
  }
  const double all = 100 * report.averages.at("all");
  const double unseen = 100 * report.averages.at("unseen");
  CHECK(std::abs(all - 19.92) <= 0.02);
  CHECK(std::abs(unseen - 25.68) <= 0.02);
  CHECK(all == doctest::Approx(weighted(testing::kTableCounts, testing::kTableBaseline, 0)));
  CHECK(unseen == doctest::Approx(weighted(testing::kTableCounts, testing::kTableBaseline, 1)));
}

TEST_CASE("wer_aggregate: published best row") {
  const auto pairs = testing::utterances_with_wers(testing::kTableCounts, testing::kTableBest);
  const int ids[] = {0, 1, 2, 3, 4, 5, 6};
  const auto report = wer_aggregate(pairs, default_subsets(ids));
  CHECK(std::abs(100 * report.averages.at("all") - 13.28) <= 0.02);
  CHECK(std::abs(100 * report.averages.at("unseen") - 19.29) <= 0.02);
}

TEST_CASE("weighted_average: absent accents") {
  const AccentResult r[] = {{0, "US", 3, 6, 1, 1.0 / 6}};
  const int missing[] = {5};
  CHECK_FALSE(weighted_average(r, missing, Weighting::kUtterance).has_value());
}

TEST_CASE("report json round trip and table layout") {
  const std::vector<ScoredUtterance> pairs = {
      {{"a", "b"}, {"a"}, 0}, {{"c"}, {"d"}, 1}, {{"e", "f"}, {"e", "f"}, 2}};
  const int ids[] = {0, 1, 2};
  auto report = wer_aggregate(pairs, default_subsets(ids), Weighting::kUtterance,
                              {{0, "US"}, {1, "England"}, {2, "Indian"}});
  report.label = "baseline";
  const auto back = report_from_json(report_to_json(report));
  CHECK(report_to_json(back) == report_to_json(report));
  CHECK(back.averages == report.averages);

  const EvalReport rows[] = {report, back};
  const std::string table = render_report_table(rows);
  CHECK(table.find("US") != std::string::npos);
  CHECK(table.find("avg unseen") != std::string::npos);
  CHECK(table.find("50.00") != std::string::npos);
  CHECK_THROWS_AS(report_from_json(nlohmann::json{{"label", 3}}), DataError);
}
