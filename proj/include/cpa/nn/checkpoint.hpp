// Copyright 2026 The CPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CPA_NN_CHECKPOINT_HPP_
#define CPA_NN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/nn/models.hpp"

// On-disk layout of a checkpoint directory:
//
//   model.json   {"schema": "cpa.checkpoint.v1",
//                 "components": {name: {"layers": [...],
//                                       "params": [{"name", "rows", "cols",
//                                                   "offset"}]}},
//                 "metadata": {...}}
//   weights.bin  every parameter as little-endian float64, row-major, at
//                the element offsets listed in model.json.

namespace cpa::nn {

inline constexpr const char* kCheckpointSchema = "cpa.checkpoint.v1";

struct Checkpoint {
  std::map<std::string, Sequential> components;
  nlohmann::json metadata = nlohmann::json::object();
};

inline void save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc = {{"schema", kCheckpointSchema}, {"metadata", ckpt.metadata}};
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw IoError("cannot write " + (dir / "weights.bin").string());
  std::uint64_t offset = 0;
  for (auto& [name, net] : ckpt.components) {
    nlohmann::json params = nlohmann::json::array();
    for (Parameter* p : net.parameters()) {
      params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()},
                        {"offset", offset}});
      blob.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double)));
      offset += static_cast<std::uint64_t>(p->value.size());
    }
    doc["components"][name] = {{"layers", net.describe()}, {"params", params}};
  }
  if (!blob) throw IoError("failed writing weights blob");
  std::ofstream meta(dir / "model.json");
  if (!meta) throw IoError("cannot write " + (dir / "model.json").string());
  meta << doc.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "model.json");
  if (!meta) throw IoError("cannot open " + (dir / "model.json").string());
  const nlohmann::json doc = nlohmann::json::parse(meta);
  if (doc.value("schema", "") != kCheckpointSchema) {
    throw IoError("unsupported checkpoint schema: " + doc.value("schema", std::string("<none>")));
  }
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw IoError("cannot open " + (dir / "weights.bin").string());

  Checkpoint ckpt;
  ckpt.metadata = doc.value("metadata", nlohmann::json::object());
  for (const auto& [name, comp] : doc.at("components").items()) {
    Sequential net = Sequential::from_json(comp.at("layers"));
    auto params = net.parameters();
    const auto& stored = comp.at("params");
    if (stored.size() != params.size()) throw IoError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto rows = stored[i].at("rows").get<Eigen::Index>();
      const auto cols = stored[i].at("cols").get<Eigen::Index>();
      if (rows != params[i]->value.rows() || cols != params[i]->value.cols()) {
        throw IoError("checkpoint parameter shape mismatch in " + name);
      }
      blob.seekg(static_cast<std::streamoff>(stored[i].at("offset").get<std::uint64_t>() *
                                             sizeof(double)));
      blob.read(reinterpret_cast<char*>(params[i]->value.data()),
                static_cast<std::streamsize>(params[i]->value.size() * sizeof(double)));
      if (!blob) throw IoError("truncated weights blob");
    }
    ckpt.components.emplace(name, std::move(net));
  }
  return ckpt;
}

inline void save_classifier(Classifier& model, const std::filesystem::path& dir,
                            nlohmann::json extra = nlohmann::json::object()) {
  Checkpoint ckpt;
  ckpt.components.emplace("encoder", model.encoder.net());
  ckpt.components.emplace("head", model.head.net());
  extra["arch"] = model.encoder.arch();
  extra["trained"] = model.trained;
  extra["frozen"] = model.encoder.frozen();
  ckpt.metadata = std::move(extra);
  save_checkpoint(ckpt, dir);
}

inline Classifier load_classifier(const std::filesystem::path& dir) {
  Checkpoint ckpt = load_checkpoint(dir);
  if (!ckpt.components.count("encoder") || !ckpt.components.count("head")) {
    throw IoError("checkpoint lacks encoder/head components");
  }
  Classifier model;
  model.encoder = Encoder(ckpt.metadata.at("arch").get<ArchSpec>(),
                          std::move(ckpt.components.at("encoder")));
  if (ckpt.metadata.value("frozen", false)) model.encoder.freeze();
  model.head = LinearHead(std::move(ckpt.components.at("head")));
  model.trained = ckpt.metadata.value("trained", false);
  return model;
}

}  // namespace cpa::nn

#endif  // CPA_NN_CHECKPOINT_HPP_
