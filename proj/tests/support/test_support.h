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

#ifndef ACCDAT_TEST_SUPPORT_H_
#define ACCDAT_TEST_SUPPORT_H_

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <system_error>

#include <nlohmann/json.hpp>

#include "accdat/rng.h"
#include "accdat/tensor.h"
#include "accdat/wer.h"

namespace accdat::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "accdat") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream(path) << j.dump(2) << "\n";
}

/// Seconds-scale experiment: three accents, a few dozen utterances each.
inline nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "corpus": {"base_utterances": 60, "accent_counts": [40, 12, 10],
               "accent_names": ["US", "England", "Indian"],
               "vocab_size": 12, "shared_words": 4},
    "train": {"pretrain_epochs": 2, "epochs": 2, "batch_size": 8,
              "disc_pretrain": {"max_epochs": 3}}
  })");
}

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Random [T, V+1] matrix of per-row normalized log-probabilities.
inline Tensor<double> random_log_probs(std::size_t frames, std::size_t classes, Rng& rng) {
  Tensor<double> t = random_tensor({frames, classes}, rng, 1.5);
  for (std::size_t r = 0; r < frames; ++r) {
    double m = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) m = std::max(m, t.at(r, c));
    double z = 0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(t.at(r, c) - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) t.at(r, c) -= lse;
  }
  return t;
}

/// Per-accent test-set utterance counts of the seven-accent results table.
inline const std::vector<std::size_t> kTableCounts = {41330, 15321, 6384, 5904, 1681, 1087, 379};
/// Per-accent WERs (percent) of its baseline row.
inline const std::vector<double> kTableBaseline = {15.64, 17.81, 38.46, 26.09, 51.15, 19.20, 27.86};
/// Per-accent WERs (percent) of its best row (CTC retuning, then accpt_dat).
inline const std::vector<double> kTableBest = {8.81, 14.01, 25.64, 20.71, 42.08, 13.85, 18.09};

/// Scored utterances reproducing the given per-accent WERs and utterance
/// counts exactly: each accent carries 100000 reference words spread evenly
/// over its utterances, and wer * 1000 substituted words.
inline std::vector<ScoredUtterance> utterances_with_wers(const std::vector<std::size_t>& counts,
                                                         const std::vector<double>& wer_percent) {
  constexpr std::size_t kWords = 100000;
  std::vector<ScoredUtterance> out;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    const std::size_t n = counts[a];
    auto edits = static_cast<std::size_t>(std::llround(wer_percent[a] * 1000.0));
    // Words and substitutions are spread evenly so every utterance stays short.
    for (std::size_t i = 0; i < n; ++i) {
      ScoredUtterance u;
      u.accent_id = static_cast<int>(a);
      u.ref.assign(kWords / n + (i < kWords % n ? 1 : 0), "w");
      u.hyp = u.ref;
      for (std::size_t e = 0; e < u.hyp.size() && edits > 0; ++e, --edits) u.hyp[e] = "x";
      out.push_back(std::move(u));
    }
  }
  return out;
}

}  // namespace accdat::testing

#endif  // ACCDAT_TEST_SUPPORT_H_
