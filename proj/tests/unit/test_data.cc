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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "accdat/data.h"
#include "accdat/digest.h"
#include "accdat/error.h"
#include "accdat/experiment.h"
#include "test_support.h"

using namespace accdat;

namespace {

CorpusConfig small_corpus(std::vector<int> counts, double noise = 0.1) {
  CorpusSettings s;
  s.accent_counts = std::move(counts);
  s.accent_names.resize(s.accent_counts.size());
  for (std::size_t i = 0; i < s.accent_names.size(); ++i) s.accent_names[i] = "a" + std::to_string(i);
  s.noise = noise;
  return new_corpus_config(s);
}

std::vector<Utterance> make_utts(std::size_t n, int accent, const std::string& prefix) {
  std::vector<Utterance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = prefix + std::to_string(i);
    out[i].accent_id = accent;
  }
  return out;
}

}  // namespace

TEST_CASE("alphabet encode/decode") {
  const Alphabet a(8);
  const auto labels = a.encode({"abc", "gd"});
  CHECK(labels == LabelSequence{1, 2, 3, 0, 7, 4});
  CHECK(a.decode(labels) == std::vector<std::string>{"abc", "gd"});
  CHECK(a.decode({0, 1, 0, 0, 2, 0}) == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(a.label('z'), DataError);
  CHECK_THROWS_AS(Alphabet(1), ConfigError);
}

TEST_CASE("feature files round trip and reject truncation") {
  testing::TempDir dir;
  Rng rng(1);
  Tensor<float> f = testing::random_tensor({4, 9}, rng).cast<float>();
  write_features(dir / "x.ft", f);
  CHECK(bitwise_equal(read_features(dir / "x.ft"), f));
  const auto h = read_feature_header(dir / "x.ft");
  CHECK(h.channels == 4);
  CHECK(h.frames == 9);
  const std::string bytes = testing::slurp(dir / "x.ft");
  std::ofstream(dir / "y.ft", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(read_features(dir / "y.ft"), FormatError);
  std::ofstream(dir / "z.ft", std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(read_features(dir / "z.ft"), FormatError);
}

TEST_CASE("manifest: empty file, unannotated record, round trip") {
  testing::TempDir dir;
  std::ofstream(dir / "empty.jsonl").close();
  CHECK(load_manifest(dir / "empty.jsonl").empty());

  Utterance a;
  a.id = "u0";
  a.features_path = "feats/u0.ft";
  a.features = Tensor<float>({16, 5}, 0.25f);
  a.text = std::vector<std::string>{"ab", "c"};
  a.accent_id = 0;
  Utterance b = a;
  b.id = "u1";
  b.features_path = "feats/u1.ft";
  b.text.reset();
  b.accent_id = 3;
  std::filesystem::create_directories(dir / "feats");
  write_features(dir / a.features_path, a.features);
  write_features(dir / b.features_path, b.features);
  write_manifest(dir / "m.jsonl", {a, b});
  const auto back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "u0");
  CHECK(back[0].annotated());
  CHECK(*back[0].text == *a.text);
  CHECK(bitwise_equal(back[0].features, a.features));
  CHECK_FALSE(back[1].annotated());
  CHECK(back[1].accent_id == 3);
  write_manifest(dir / "m2.jsonl", back);
  CHECK(testing::slurp(dir / "m.jsonl") == testing::slurp(dir / "m2.jsonl"));
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl", Alphabet(), 8), DataError);
}

TEST_CASE("manifest: malformed line names the line") {
  testing::TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  try {
    load_manifest(dir / "bad.jsonl");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("accent 0 transform is the identity") {
  const auto cfg = small_corpus({5, 5}, 0.0);
  const auto transforms = make_accent_transforms(cfg);
  Rng rng(2);
  const Tensor<float> x = testing::random_tensor({16, 12}, rng).cast<float>();
  CHECK(bitwise_equal(transforms[0].apply(x), x));
  CHECK_FALSE(bitwise_equal(transforms[1].apply(x), x));
  CHECK(std::isfinite(transforms[1].condition_number()));
}

TEST_CASE("generator is deterministic and writes identical bytes") {
  const auto cfg = small_corpus({6, 4});
  testing::TempDir a, b;
  generate_corpus(cfg, a.path());
  generate_corpus(cfg, b.path());
  CHECK(directory_digest(a.path()) == directory_digest(b.path()));
  auto other = cfg;
  other.seed += 1;
  testing::TempDir c;
  generate_corpus(other, c.path());
  CHECK(directory_digest(a.path()) != directory_digest(c.path()));
}

TEST_CASE("accents are linearly separable on mean-pooled raw features") {
  // Oracle: a logistic-regression probe trained here, scored on held-out data.
  const auto utts = generate_utterances(small_corpus({200, 200}, 0.1));
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& u : utts) {
    std::vector<double> m(u.features.dim(0), 0.0);
    for (std::size_t c = 0; c < m.size(); ++c) {
      for (std::size_t t = 0; t < u.frames(); ++t) m[c] += u.features.at(c, t);
      m[c] /= static_cast<double>(u.frames());
    }
    x.push_back(std::move(m));
    y.push_back(u.accent_id);
  }
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = order.size() * 7 / 10;
  const std::size_t dim = x[0].size();
  std::vector<double> w(dim + 1, 0.0);
  for (int epoch = 0; epoch < 500; ++epoch) {
    std::vector<double> g(dim + 1, 0.0);
    for (std::size_t k = 0; k < n_train; ++k) {
      const auto& xi = x[order[k]];
      double z = w[dim];
      for (std::size_t d = 0; d < dim; ++d) z += w[d] * xi[d];
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[order[k]];
      for (std::size_t d = 0; d < dim; ++d) g[d] += err * xi[d];
      g[dim] += err;
    }
    for (std::size_t d = 0; d <= dim; ++d) w[d] -= 0.5 * g[d] / static_cast<double>(n_train);
  }
  std::size_t correct = 0;
  for (std::size_t k = n_train; k < order.size(); ++k) {
    const auto& xi = x[order[k]];
    double z = w[dim];
    for (std::size_t d = 0; d < dim; ++d) z += w[d] * xi[d];
    correct += (z > 0) == (y[order[k]] == 1);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(order.size() - n_train) >= 0.95);
}

TEST_CASE("split_corpus: exact ratios, partition, determinism") {
  auto utts = make_utts(100, 0, "a");
  auto s = split_corpus(utts, {}, 5);
  CHECK(s.train.size() == 70);
  CHECK(s.test.size() == 20);
  CHECK(s.validation.size() == 10);
  auto ten = split_corpus(make_utts(10, 0, "b"), {}, 5);
  CHECK(ten.train.size() == 7);
  CHECK(ten.test.size() == 2);
  CHECK(ten.validation.size() == 1);

  auto mixed = make_utts(23, 0, "c");
  for (auto& u : make_utts(11, 1, "d")) mixed.push_back(u);
  for (auto& u : make_utts(2, 2, "e")) mixed.push_back(u);
  const auto m = split_corpus(mixed, {}, 9);
  std::multiset<std::string> ids;
  for (const auto* part : {&m.train, &m.test, &m.validation}) {
    for (const auto& u : *part) ids.insert(u.id);
  }
  CHECK(ids.size() == mixed.size());
  CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == mixed.size());
  const auto count = [](const std::vector<Utterance>& v, int accent) {
    return std::count_if(v.begin(), v.end(), [&](const Utterance& u) { return u.accent_id == accent; });
  };
  CHECK(count(m.train, 2) == 2);  // fewer than 3 utterances: all train
  CHECK(std::abs(count(m.test, 1) - 0.2 * 11) <= 1.0);
  const auto again = split_corpus(mixed, {}, 9);
  for (std::size_t i = 0; i < m.test.size(); ++i) CHECK(m.test[i].id == again.test[i].id);
  CHECK_THROWS_AS(split_corpus(mixed, {0.5, 0.5, 0.5}, 9), ConfigError);
}

TEST_CASE("make_batches: composition and determinism") {
  const auto s = make_utts(12, 0, "s");
  const auto u = make_utts(20, 1, "u");
  const auto batches = make_batches(s, u, 8, 0.5, 4);
  CHECK(batches.size() == 5);  // larger stream (20) consumed once in slices of 4
  for (const auto& b : batches) {
    REQUIRE(b.size() == 8);
    CHECK(std::count_if(b.begin(), b.end(), [](const BatchItem& i) { return i.annotated; }) == 4);
    for (const auto& item : b) CHECK((item.utterance->accent_id == 0) == item.annotated);
  }
  const auto again = make_batches(s, u, 8, 0.5, 4);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    for (std::size_t j = 0; j < 8; ++j) CHECK(batches[i][j].utterance == again[i][j].utterance);
  }

  const auto ctc_only = make_batches(s, {}, 4, 1.0, 4);
  CHECK(ctc_only.size() == 3);
  for (const auto& b : ctc_only) {
    for (const auto& item : b) {
      CHECK(item.annotated);
      CHECK(item.utterance->accent_id == 0);
    }
  }
  CHECK_THROWS_AS(make_batches(s, u, 1, 0.5, 4), ConfigError);
  CHECK_THROWS_AS(make_batches(s, u, 8, 1.5, 4), ConfigError);
}

TEST_CASE("without_text drops the transcription") {
  Utterance u;
  u.text = std::vector<std::string>{"ab"};
  u.labels = LabelSequence{1, 2};
  const auto v = without_text(u);
  CHECK_FALSE(v.annotated());
  CHECK_FALSE(v.text.has_value());
}
