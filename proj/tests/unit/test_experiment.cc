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

#include <string>

#include "accdat/digest.h"
#include "accdat/error.h"
#include "accdat/experiment.h"
#include "test_support.h"

using namespace accdat;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config: minimal document fills defaults and echoes back") {
  const auto cfg = parse_experiment_config(json::object());
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.corpus.accent_counts.size() == 7);
  CHECK(cfg.model.input_channels == cfg.corpus.feature_dim);
  CHECK(cfg.model.num_labels() == cfg.corpus.alphabet_size);
  const json echo = experiment_config_to_json(cfg);
  CHECK(experiment_config_to_json(parse_experiment_config(echo)) == echo);
  CHECK(config_digest(parse_experiment_config(echo)) == config_digest(cfg));
}

TEST_CASE("config: shipped files parse, and the default file matches the defaults") {
  const std::filesystem::path dir = ACCDAT_TEST_CONFIG_DIR;
  CHECK(config_digest(parse_config(dir / "default.json")) ==
        config_digest(parse_experiment_config(json::object())));
  CHECK(parse_config(dir / "mini.json").model.encoder_blocks.size() == 4);
  const auto q = parse_config(dir / "quartznet15x5.json");
  CHECK(q.model.encoder_blocks.size() == 8);
  CHECK(q.model.input_channels == 64);
  const auto g = parse_config(dir / "grid.json");
  CHECK(g.train.disc_pretrain.lr.has_value());
}

TEST_CASE("config: errors name the JSON path") {
  CHECK(config_error({{"train", {{"batch_size", -4}}}}).rfind("train.batch_size", 0) == 0);
  CHECK(config_error({{"train", {{"momentum_x", 1}}}}).find("train.momentum_x") != std::string::npos);
  CHECK(config_error({{"train", {{"lambda_schedule", {{"gamma", 0}}}}}}) ==
        "train.lambda_schedule.gamma: must be > 0");
  CHECK(config_error({{"train", {{"epochs", "many"}}}}).find("train.epochs") != std::string::npos);
  CHECK(config_error({{"bogus", 1}}).find("bogus") != std::string::npos);
  CHECK(config_error({{"model", {{"preset", "huge"}}}}).find("model.preset") != std::string::npos);
  CHECK(config_error({{"corpus", {{"accent_counts", {5, 0}}}}}).find("corpus.accent_counts[1]") !=
        std::string::npos);
  CHECK(config_error({{"train", {{"optimizer", {{"lr", 0}}}}}}).find("train.optimizer.lr") !=
        std::string::npos);
}

TEST_CASE("config: digest changes with any setting") {
  const auto a = parse_experiment_config(json::object());
  const auto b = parse_experiment_config({{"train", {{"seed", 2}}}});
  CHECK(config_digest(a) != config_digest(b));
  CHECK(config_digest(a).size() == 64);
}

TEST_CASE("experiment data: generation is deterministic and loads back") {
  const auto cfg = parse_experiment_config(testing::small_config());
  testing::TempDir a, b;
  generate_experiment_data(cfg, a.path());
  generate_experiment_data(cfg, b.path());
  CHECK(directory_digest(a.path()) == directory_digest(b.path()));
  CHECK(std::filesystem::exists(a / "new/train.jsonl"));
  CHECK(std::filesystem::exists(a / "base/test.jsonl"));
  CHECK(std::filesystem::exists(a / "config.json"));

  const auto data = load_experiment_data(cfg, a.path());
  for (const auto& u : data.base.all) CHECK(u.accent_id == 0);
  std::size_t accents_seen = 0;
  for (int id = 0; id < 3; ++id) {
    accents_seen += std::any_of(data.next.all.begin(), data.next.all.end(),
                                [&](const Utterance& u) { return u.accent_id == id; });
  }
  CHECK(accents_seen == 3);
  CHECK(data.next.all.size() == 62);
  CHECK(data.next.splits.train.size() + data.next.splits.test.size() +
            data.next.splits.validation.size() == 62);

  const auto base_data = regime_data(data, Regime::kPretrainBase);
  const auto new_data = regime_data(data, Regime::kDat);
  CHECK(base_data.train.size() == data.base.splits.train.size());
  CHECK(new_data.train.size() == data.next.splits.train.size());
}
