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

#include "accdat/data.h"

#include <spdlog/spdlog.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "accdat/digest.h"
#include "accdat/error.h"
#include "accdat/rng.h"

namespace accdat {
namespace {

constexpr std::array<char, 4> kFeatureMagic = {'A', 'C', 'F', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Fisher-Yates with our own index draw; std::shuffle's sequence is
// implementation-defined.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Prototype vectors for every label plus silence (last row), shared by all
// domains, and the new-domain per-symbol perturbation.
struct Prototypes {
  std::vector<std::vector<double>> base;
  std::vector<std::vector<double>> shift;
};

Prototypes make_prototypes(const CorpusConfig& config) {
  Rng rng(derive_seed({config.seed, 0x70726f746fULL}));
  Prototypes p;
  const std::size_t rows = static_cast<std::size_t>(config.alphabet_size) + 1;
  p.base.assign(rows, std::vector<double>(static_cast<std::size_t>(config.feature_dim)));
  p.shift = p.base;
  for (auto& row : p.base) {
    for (auto& v : row) v = normal(rng);
  }
  for (auto& row : p.shift) {
    for (auto& v : row) v = normal(rng);
  }
  return p;
}

}  // namespace

// --- Alphabet ----------------------------------------------------------------

Alphabet::Alphabet(int size) : size_(size) {
  if (size < 2 || size > 27) {
    throw ConfigError("alphabet size must be in [2, 27], got " + std::to_string(size));
  }
}

char Alphabet::symbol(int label) const {
  if (label < 0 || label >= size_) throw InvalidArgument("label out of alphabet: " + std::to_string(label));
  return label == 0 ? ' ' : static_cast<char>('a' + label - 1);
}

int Alphabet::label(char symbol) const {
  if (symbol == ' ') return 0;
  const int l = symbol - 'a' + 1;
  if (l < 1 || l >= size_) {
    throw DataError(std::string("symbol '") + symbol + "' is not in the alphabet");
  }
  return l;
}

LabelSequence Alphabet::encode(const std::vector<std::string>& words) const {
  LabelSequence out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w) out.push_back(0);
    for (char c : words[w]) out.push_back(label(c));
  }
  return out;
}

std::vector<std::string> Alphabet::decode(const LabelSequence& labels) const {
  std::vector<std::string> words;
  std::string cur;
  for (int l : labels) {
    if (l == 0) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(symbol(l));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Utterance without_text(const Utterance& u) {
  Utterance out = u;
  out.text.reset();
  out.labels.reset();
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

// --- feature files -------------------------------------------------------------

void write_features(const std::filesystem::path& path, const Tensor<float>& features) {
  if (features.rank() != 2) {
    throw InvalidArgument("write_features: expected [F, T], got " + shape_string(features.shape()));
  }
  const std::size_t channels = features.dim(0);
  const std::size_t frames = features.dim(1);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kFeatureMagic.data(), 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::uint32_t bits;
      const float v = features.at(c, t);
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

FeatureHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  unsigned char buf[16];
  in.read(reinterpret_cast<char*>(buf), 16);
  if (in.gcount() != 16 || std::memcmp(buf, kFeatureMagic.data(), 4) != 0) {
    throw FormatError(path.string() + ": not an ACFT feature file");
  }
  FeatureHeader h{get_u32(buf + 4), get_u32(buf + 8), get_u32(buf + 12)};
  if (h.version != 1) {
    throw FormatError(path.string() + ": unsupported feature file version " +
                      std::to_string(h.version));
  }
  return h;
}

Tensor<float> read_features(const std::filesystem::path& path) {
  const FeatureHeader h = read_feature_header(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(16);
  const std::size_t count = static_cast<std::size_t>(h.channels) * h.frames;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(path.string() + ": truncated feature payload");
  }
  Tensor<float> out(Shape{h.channels, h.frames});
  for (std::size_t t = 0; t < h.frames; ++t) {
    for (std::size_t c = 0; c < h.channels; ++c) {
      const std::uint32_t bits = get_u32(raw.data() + 4 * (t * h.channels + c));
      float v;
      std::memcpy(&v, &bits, 4);
      out.at(c, t) = v;
    }
  }
  return out;
}

// --- manifests -------------------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const std::vector<Utterance>& utterances) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& u : utterances) {
    nlohmann::json j;
    j["id"] = u.id;
    j["features"] = u.features_path;
    j["text"] = u.text ? nlohmann::json(join_words(*u.text)) : nlohmann::json(nullptr);
    j["accent"] = u.accent_id;
    j["frames"] = u.frames();
    out << j.dump() << '\n';
  }
}

std::vector<Utterance> load_manifest(const std::filesystem::path& path, const Alphabet& alphabet,
                                     std::optional<std::size_t> expected_channels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base_dir = path.parent_path();
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    Utterance u;
    std::size_t frames = 0;
    try {
      const auto j = nlohmann::json::parse(line);
      u.id = j.at("id").get<std::string>();
      u.features_path = j.at("features").get<std::string>();
      const auto& text = j.at("text");
      if (!text.is_null()) u.text = split_words(text.get<std::string>());
      const int accent = j.at("accent").get<int>();
      if (accent < 0) throw FormatError("accent must be >= 0");
      u.accent_id = accent;
      frames = j.at("frames").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "parse error: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
    const auto feat_path = base_dir / u.features_path;
    const FeatureHeader h = read_feature_header(feat_path);
    if (h.frames != frames) {
      throw DataError(where + "feature file has " + std::to_string(h.frames) +
                      " frames, manifest declares " + std::to_string(frames));
    }
    if (expected_channels && h.channels != *expected_channels) {
      throw DataError(where + "feature file has " + std::to_string(h.channels) +
                      " channels, expected " + std::to_string(*expected_channels));
    }
    u.features = read_features(feat_path);
    if (u.text) {
      try {
        u.labels = alphabet.encode(*u.text);
      } catch (const DataError& e) {
        throw DataError(where + e.what());
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

// --- synthetic corpus --------------------------------------------------------------

std::string domain_name(Domain d) { return d == Domain::kBase ? "base" : "new"; }

Tensor<float> AccentTransform::apply(const Tensor<float>& features) const {
  const std::size_t channels = features.dim(0);
  const std::size_t frames = features.dim(1);
  if (mixing.dim(0) != channels) {
    throw InvalidArgument("accent transform is " + std::to_string(mixing.dim(0)) +
                          "-dimensional, features have " + std::to_string(channels) + " channels");
  }
  Tensor<float> mixed(Shape{channels, frames});
  for (std::size_t o = 0; o < channels; ++o) {
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = bias[o];
      for (std::size_t i = 0; i < channels; ++i) {
        acc += mixing.at(o, i) * static_cast<double>(features.at(i, t));
      }
      mixed.at(o, t) = static_cast<float>(acc);
    }
  }
  const std::size_t out_frames =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frames * stretch)));
  if (out_frames == frames) return mixed;
  Tensor<float> out(Shape{channels, out_frames});
  for (std::size_t j = 0; j < out_frames; ++j) {
    const double pos = out_frames == 1 ? 0.0
                                       : static_cast<double>(j) * static_cast<double>(frames - 1) /
                                             static_cast<double>(out_frames - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), frames - 1);
    const std::size_t hi = std::min(lo + 1, frames - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t c = 0; c < channels; ++c) {
      out.at(c, j) = static_cast<float>((1.0 - frac) * mixed.at(c, lo) + frac * mixed.at(c, hi));
    }
  }
  return out;
}

double AccentTransform::condition_number() const {
  const auto n = static_cast<Eigen::Index>(mixing.dim(0));
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) a(r, c) = mixing.at(r, c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

void validate_corpus_config(const CorpusConfig& c) {
  const Alphabet alphabet(c.alphabet_size);
  if (c.feature_dim < 1) throw ConfigError("corpus.feature_dim: must be >= 1");
  if (c.frames_per_symbol < 1) throw ConfigError("corpus.frames_per_symbol: must be >= 1");
  if (c.silence_frames < 0) throw ConfigError("corpus.silence_frames: must be >= 0");
  if (c.min_words < 1 || c.max_words < c.min_words) {
    throw ConfigError("corpus.words_per_utterance: need 1 <= min <= max");
  }
  if (c.vocabulary.empty()) throw ConfigError("corpus: vocabulary is empty");
  if (c.accent_counts.empty()) throw ConfigError("corpus.accent_counts: accent 0 must be present");
  for (std::size_t i = 0; i < c.accent_counts.size(); ++i) {
    if (c.accent_counts[i] <= 0) {
      throw ConfigError("corpus.accent_counts[" + std::to_string(i) + "]: must be > 0");
    }
  }
  if (c.noise < 0) throw ConfigError("corpus.noise: must be >= 0");
  if (c.max_stretch < 1.0) throw ConfigError("corpus.max_stretch: must be >= 1");
  for (const auto& w : c.vocabulary) alphabet.encode({w});
}

Vocabularies make_vocabularies(std::uint64_t seed, int alphabet_size, int vocab_size,
                               int shared_words) {
  if (vocab_size < 1 || shared_words < 0 || shared_words > vocab_size) {
    throw ConfigError("corpus: need 0 <= shared_words <= vocab_size and vocab_size >= 1");
  }
  const int letters = alphabet_size - 1;
  Rng rng(derive_seed({seed, 0x766f636162ULL}));
  const std::size_t needed = static_cast<std::size_t>(2 * vocab_size - shared_words);
  std::vector<std::string> pool;
  std::set<std::string> seen;
  for (std::size_t attempts = 0; pool.size() < needed; ++attempts) {
    if (attempts > 100000) throw ConfigError("corpus: alphabet too small for the vocabulary size");
    const std::size_t len = 2 + uniform_index(rng, 3);
    std::string w;
    while (w.size() < len) {
      const char c = static_cast<char>('a' + uniform_index(rng, static_cast<std::size_t>(letters)));
      if (!w.empty() && w.back() == c) continue;
      w.push_back(c);
    }
    if (seen.insert(w).second) pool.push_back(w);
  }
  Vocabularies v;
  v.base.assign(pool.begin(), pool.begin() + vocab_size);
  v.next.assign(pool.begin() + (vocab_size - shared_words), pool.end());
  return v;
}

std::vector<AccentTransform> make_accent_transforms(const CorpusConfig& config) {
  const std::size_t f = static_cast<std::size_t>(config.feature_dim);
  std::vector<AccentTransform> out;
  for (std::size_t a = 0; a < config.accent_counts.size(); ++a) {
    AccentTransform t;
    t.accent_id = static_cast<int>(a);
    t.noise = config.noise;
    t.mixing = Tensor<double>(Shape{f, f});
    t.bias.assign(f, 0.0);
    for (std::size_t i = 0; i < f; ++i) t.mixing.at(i, i) = 1.0;
    if (a > 0) {
      Rng rng(derive_seed({config.seed, 0x616363656e74ULL, a}));
      Tensor<double> perturb(Shape{f, f});
      for (auto& v : perturb.data()) v = normal(rng) / std::sqrt(static_cast<double>(f));
      for (auto& v : t.bias) v = config.accent_bias * normal(rng);
      t.stretch = 1.0 + (config.max_stretch - 1.0) * uniform01(rng);
      double scale = config.accent_mixing;
      for (int tries = 0;; ++tries) {
        for (std::size_t i = 0; i < f * f; ++i) {
          t.mixing[i] = (i % (f + 1) == 0 ? 1.0 : 0.0) + scale * perturb[i];
        }
        if (t.condition_number() <= 10.0 || tries > 50) break;
        scale *= 0.8;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

Tensor<float> render_base_features(const CorpusConfig& config, const LabelSequence& labels,
                                   std::uint64_t utterance_seed) {
  static thread_local std::map<std::pair<std::uint64_t, std::pair<int, int>>, Prototypes> cache;
  const auto key = std::make_pair(config.seed, std::make_pair(config.alphabet_size, config.feature_dim));
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, make_prototypes(config)).first;
  const Prototypes& protos = it->second;

  const std::size_t f = static_cast<std::size_t>(config.feature_dim);
  const std::size_t d = static_cast<std::size_t>(config.frames_per_symbol);
  const std::size_t sil = static_cast<std::size_t>(config.silence_frames);
  const std::size_t frames = 2 * sil + labels.size() * d;
  const double shift = config.domain == Domain::kNew ? config.domain_shift : 0.0;
  const std::size_t silence = static_cast<std::size_t>(config.alphabet_size);

  Rng rng(utterance_seed);
  Tensor<float> out(Shape{f, frames});
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t row = silence;
    if (t >= sil && t < sil + labels.size() * d) row = static_cast<std::size_t>(labels[(t - sil) / d]);
    for (std::size_t c = 0; c < f; ++c) {
      const double v = protos.base[row][c] + shift * protos.shift[row][c] + config.noise * normal(rng);
      out.at(c, t) = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<Utterance> generate_utterances(const CorpusConfig& config) {
  validate_corpus_config(config);
  const Alphabet alphabet(config.alphabet_size);
  const auto transforms = make_accent_transforms(config);
  std::vector<Utterance> out;
  for (std::size_t a = 0; a < config.accent_counts.size(); ++a) {
    for (int i = 0; i < config.accent_counts[a]; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s-a%zu-%05d", domain_name(config.domain).c_str(), a, i);
      Utterance u;
      u.id = id;
      u.accent_id = static_cast<int>(a);
      u.features_path = "feats/" + u.id + ".ft";
      Rng rng(derive_seed({config.seed, stable_hash64(u.id)}));
      const std::size_t n_words =
          static_cast<std::size_t>(config.min_words) +
          uniform_index(rng, static_cast<std::size_t>(config.max_words - config.min_words + 1));
      std::vector<std::string> words;
      for (std::size_t w = 0; w < n_words; ++w) {
        words.push_back(config.vocabulary[uniform_index(rng, config.vocabulary.size())]);
      }
      u.labels = alphabet.encode(words);
      u.text = std::move(words);
      const Tensor<float> base = render_base_features(config, *u.labels, rng());
      u.features = transforms[a].apply(base);
      out.push_back(std::move(u));
    }
  }
  return out;
}

std::vector<Utterance> generate_corpus(const CorpusConfig& config,
                                       const std::filesystem::path& out_dir) {
  auto utterances = generate_utterances(config);
  std::filesystem::create_directories(out_dir / "feats");
  for (const auto& u : utterances) write_features(out_dir / u.features_path, u.features);
  write_manifest(out_dir / "manifest.jsonl", utterances);
  return utterances;
}

// --- splits and batches --------------------------------------------------------------

CorpusSplits split_corpus(const std::vector<Utterance>& utterances, const SplitRatios& ratios,
                          std::uint64_t seed) {
  const double total = ratios.train + ratios.test + ratios.validation;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.test < 0 ||
      ratios.validation < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::map<int, std::vector<std::size_t>> by_accent;
  for (std::size_t i = 0; i < utterances.size(); ++i) by_accent[utterances[i].accent_id].push_back(i);

  // 0 = train, 1 = test, 2 = validation
  std::vector<int> assignment(utterances.size(), 0);
  for (auto& [accent, idx] : by_accent) {
    if (idx.size() < 3) {
      spdlog::warn("split_corpus: accent {} has only {} utterances; all go to train", accent,
                   idx.size());
      continue;
    }
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(accent)}));
    std::vector<std::size_t> order = idx;
    shuffle_in_place(order, rng);
    const auto n = static_cast<double>(order.size());
    const std::size_t n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
    const std::size_t n_val = static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9));
    for (std::size_t k = 0; k < n_test; ++k) assignment[order[k]] = 1;
    for (std::size_t k = n_test; k < n_test + n_val; ++k) assignment[order[k]] = 2;
  }
  CorpusSplits s;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    (assignment[i] == 0 ? s.train : assignment[i] == 1 ? s.test : s.validation)
        .push_back(utterances[i]);
  }
  return s;
}

namespace {

class CyclingStream {
 public:
  CyclingStream(std::size_t size, Rng& rng) : size_(size), rng_(rng) { refill(); }
  std::size_t next() {
    if (pos_ == order_.size()) refill();
    return order_[pos_++];
  }

 private:
  void refill() {
    order_.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
    shuffle_in_place(order_, rng_);
    pos_ = 0;
  }
  std::size_t size_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Batch> make_batches(const std::vector<Utterance>& annotated,
                                const std::vector<Utterance>& unannotated,
                                std::size_t batch_size, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("train.rho: must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (batch_size < 2 && rho > 0.0 && rho < 1.0) {
    throw ConfigError("train.batch_size: mixed batches (0 < rho < 1) need batch_size >= 2");
  }
  const std::size_t n_s = static_cast<std::size_t>(std::lround(rho * static_cast<double>(batch_size)));
  const std::size_t n_u = batch_size - n_s;
  if (n_s > 0 && annotated.empty()) throw ConfigError("make_batches: no annotated utterances");
  if (n_u > 0 && unannotated.empty()) throw ConfigError("make_batches: no unannotated utterances");

  std::size_t n_batches = 0;
  if (n_s > 0) n_batches = std::max(n_batches, (annotated.size() + n_s - 1) / n_s);
  if (n_u > 0) n_batches = std::max(n_batches, (unannotated.size() + n_u - 1) / n_u);

  Rng rng(seed);
  std::optional<CyclingStream> s_stream;
  std::optional<CyclingStream> u_stream;
  if (n_s > 0) s_stream.emplace(annotated.size(), rng);
  if (n_u > 0) u_stream.emplace(unannotated.size(), rng);

  std::vector<Batch> batches;
  batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    Batch batch;
    for (std::size_t i = 0; i < n_s; ++i) batch.push_back({&annotated[s_stream->next()], true});
    for (std::size_t i = 0; i < n_u; ++i) batch.push_back({&unannotated[u_stream->next()], false});
    shuffle_in_place(batch, rng);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace accdat
