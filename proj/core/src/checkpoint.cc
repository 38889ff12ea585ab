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

#include "accdat/checkpoint.h"

#include <algorithm>
#include <bit>
#include <optional>
#include <span>
#include <cstring>
#include <fstream>
#include <sstream>

#include "accdat/digest.h"
#include "accdat/error.h"

namespace accdat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename S>
constexpr const char* dtype_of() {
  return sizeof(S) == 4 ? "f32" : "f64";
}

template <typename T>
void append_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

struct Writer {
  std::string blob;
  json index = json::array();

  template <typename T>
  void add(const std::string& name, const std::string& group, const Shape& shape,
           std::span<const T> values, std::optional<bool> trainable = std::nullopt) {
    json entry{{"name", name},
               {"group", group},
               {"dtype", sizeof(T) == 4 ? "f32" : "f64"},
               {"shape", shape},
               {"byte_offset", blob.size()}};
    if (trainable) entry["trainable"] = *trainable;
    index.push_back(std::move(entry));
    for (T v : values) append_le(blob, v);
  }
};

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json parse_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

json optimizer_to_json(const OptimizerConfig& c, std::uint64_t steps) {
  return json{{"kind", optimizer_kind_name(c.kind)},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay},
              {"steps", steps}};
}

// One stored tensor, decoded into the requested precision.
template <typename S>
Tensor<S> decode_tensor(const std::string& blob, const json& entry, const std::string& where) {
  const std::string dtype = entry.at("dtype").get<std::string>();
  const Shape shape = entry.at("shape").get<Shape>();
  const auto offset = entry.at("byte_offset").get<std::uint64_t>();
  const std::size_t n = shape_numel(shape);
  const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
  if (width == 0) throw FormatError(where + ": unknown dtype '" + dtype + "'");
  if (offset > blob.size() || n * width > blob.size() - offset) {
    throw FormatError(where + ": tensor '" + entry.at("name").get<std::string>() +
                      "' extends past the end of params.bin (truncated file?)");
  }
  std::vector<S> values(n);
  const char* p = blob.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = width == 4 ? static_cast<S>(read_le<float>(p + 4 * i))
                           : static_cast<S>(read_le<double>(p + 8 * i));
  }
  return Tensor<S>(shape, std::move(values));
}

}  // namespace

template <typename S>
void save_checkpoint(const fs::path& dir, const Checkpoint<S>& ck) {
  Writer w;
  const std::pair<const char*, const ParameterSet<S>*> groups[] = {
      {"encoder", &ck.params.encoder},
      {"decoder", &ck.params.decoder},
      {"discriminator", &ck.params.discriminator}};
  for (const auto& [group, set] : groups) {
    for (const auto& p : *set) {
      w.add<S>(p.name, group, p.value.shape(), p.value.data(), p.trainable);
    }
  }
  json bn = json::object();
  for (const auto& [name, state] : ck.params.batch_norm) {
    w.add<S>(name + ".running_mean", "batch_norm.mean", state.running_mean.shape(),
             state.running_mean.data());
    w.add<S>(name + ".running_var", "batch_norm.var", state.running_var.shape(),
             state.running_var.data());
    bn[name] = state.batches_tracked;
  }
  for (const auto& [name, m] : ck.optimizer.first_moment) {
    w.add<S>(name, "optimizer.first_moment", m.shape(), m.data());
  }
  for (const auto& [name, v] : ck.optimizer.second_moment) {
    const double one[1] = {v};
    w.add<double>(name, "optimizer.second_moment", Shape{}, std::span<const double>(one));
  }

  json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["dtype"] = dtype_of<S>();
  meta["regime"] = ck.regime;
  meta["lineage"] = ck.lineage;
  meta["config_digest"] = ck.config_digest;
  meta["progress"] = json{{"step", ck.progress.step},
                          {"epoch", ck.progress.epoch},
                          {"step_in_epoch", ck.progress.step_in_epoch},
                          {"phase", ck.progress.phase}};
  meta["rng_state"] = ck.rng_state;
  meta["model_config"] = model_config_to_json(ck.params.config);
  meta["optimizer"] = optimizer_to_json(ck.optimizer.config, ck.optimizer.steps);
  meta["batch_norm"] = bn;
  meta["metrics"] = ck.metrics;
  meta["accumulators"] = ck.accumulators;
  const std::string index_text = w.index.dump(1) + "\n";
  meta["params_digest"] = sha256_hex(w.blob);
  meta["index_digest"] = sha256_hex(index_text);

  fs::create_directories(dir);
  write_file(dir / "params.bin", w.blob);
  write_file(dir / "index.json", index_text);
  write_file(dir / "meta.json", meta.dump(1) + "\n");
}

std::string checkpoint_dtype(const fs::path& dir) {
  const json meta = parse_json(dir / "meta.json");
  if (!meta.contains("dtype") || !meta["dtype"].is_string()) {
    throw FormatError((dir / "meta.json").string() + ": missing dtype");
  }
  return meta["dtype"].get<std::string>();
}

template <typename S>
Checkpoint<S> load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint not found: " + dir.string());
  const std::string where = dir.string();
  const json meta = parse_json(dir / "meta.json");
  const std::string index_text = read_file(dir / "index.json");
  const std::string blob = read_file(dir / "params.bin");
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw FormatError(where + ": checkpoint format version " + std::to_string(version) +
                        " is not supported (expected " +
                        std::to_string(kCheckpointFormatVersion) + ")");
    }
    if (sha256_hex(blob) != meta.at("params_digest").get<std::string>()) {
      throw FormatError(where + ": params.bin digest mismatch (truncated or modified file)");
    }
    if (sha256_hex(index_text) != meta.at("index_digest").get<std::string>()) {
      throw FormatError(where + ": index.json digest mismatch");
    }
    const json index = json::parse(index_text);

    Checkpoint<S> ck;
    ck.regime = meta.at("regime").get<std::string>();
    ck.lineage = meta.at("lineage").get<std::vector<std::string>>();
    ck.config_digest = meta.at("config_digest").get<std::string>();
    const json& prog = meta.at("progress");
    ck.progress.step = prog.at("step").get<std::uint64_t>();
    ck.progress.epoch = prog.at("epoch").get<std::uint64_t>();
    ck.progress.step_in_epoch = prog.at("step_in_epoch").get<std::uint64_t>();
    ck.progress.phase = prog.at("phase").get<std::string>();
    ck.rng_state = meta.at("rng_state").get<std::string>();
    deserialize_rng(ck.rng_state);  // validates
    ck.params.config = model_config_from_json(meta.at("model_config"), "model_config");
    const json& opt = meta.at("optimizer");
    ck.optimizer.config.kind = parse_optimizer_kind(opt.at("kind").get<std::string>());
    ck.optimizer.config.lr = opt.at("lr").get<double>();
    ck.optimizer.config.beta1 = opt.at("beta1").get<double>();
    ck.optimizer.config.beta2 = opt.at("beta2").get<double>();
    ck.optimizer.config.eps = opt.at("eps").get<double>();
    ck.optimizer.config.weight_decay = opt.at("weight_decay").get<double>();
    ck.optimizer.steps = opt.at("steps").get<std::uint64_t>();
    ck.metrics = meta.at("metrics");
    ck.accumulators = meta.at("accumulators");

    for (const auto& item : meta.at("batch_norm").items()) {
      const std::string name = item.key();
      BatchNormState<S> state;
      state.batches_tracked = item.value().template get<std::uint64_t>();
      ck.params.batch_norm.emplace(name, std::move(state));
    }
    for (const json& entry : index) {
      const std::string name = entry.at("name").get<std::string>();
      const std::string group = entry.at("group").get<std::string>();
      if (group == "optimizer.second_moment") {
        ck.optimizer.second_moment[name] = decode_tensor<double>(blob, entry, where).item();
        continue;
      }
      Tensor<S> t = decode_tensor<S>(blob, entry, where);
      const bool trainable = entry.value("trainable", true);
      if (group == "encoder") {
        ck.params.encoder.add(name, std::move(t), trainable);
      } else if (group == "decoder") {
        ck.params.decoder.add(name, std::move(t), trainable);
      } else if (group == "discriminator") {
        ck.params.discriminator.add(name, std::move(t), trainable);
      } else if (group == "batch_norm.mean" || group == "batch_norm.var") {
        const bool mean = group == "batch_norm.mean";
        const std::string suffix = mean ? ".running_mean" : ".running_var";
        const std::string layer = name.substr(0, name.size() - suffix.size());
        auto it = ck.params.batch_norm.find(layer);
        if (it == ck.params.batch_norm.end()) {
          throw FormatError(where + ": batch-norm tensor '" + name + "' has no metadata");
        }
        (mean ? it->second.running_mean : it->second.running_var) = std::move(t);
      } else if (group == "optimizer.first_moment") {
        ck.optimizer.first_moment.emplace(name, std::move(t));
      } else {
        throw FormatError(where + ": unknown tensor group '" + group + "'");
      }
    }
    validate_model_config(ck.params.config);
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed checkpoint metadata (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw FormatError(where + ": invalid checkpoint model config (" + e.what() + ")");
  }
}

template void save_checkpoint<float>(const fs::path&, const Checkpoint<float>&);
template void save_checkpoint<double>(const fs::path&, const Checkpoint<double>&);
template Checkpoint<float> load_checkpoint<float>(const fs::path&);
template Checkpoint<double> load_checkpoint<double>(const fs::path&);

}  // namespace accdat
