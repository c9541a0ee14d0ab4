#pragma once

// Model checkpoints as JSON. Doubles are written in shortest round-trip form,
// so save -> load -> save reproduces the same bytes.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "am3/errors.hpp"
#include "am3/model.hpp"

namespace am3 {

inline constexpr const char* kCheckpointFormat = "am3-checkpoint-v1";

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["visual_dim"] = c.visual_dim;
  j["word_dim"] = c.word_dim;
  j["proto_dim"] = c.proto_dim;
  j["encoder_hidden"] = c.encoder_hidden;
  j["semantic_hidden"] = c.semantic_hidden;
  j["mixer_hidden"] = c.mixer_hidden;
  j["dropout_keep"] = c.dropout_keep;
  j["conditioning_mode"] = to_string(c.mode);
  j["distance"] = to_string(c.distance);
  j["prototype_rule"] = to_string(c.rule);
  j["lambda_fixed"] = c.lambda_fixed ? nlohmann::json(*c.lambda_fixed) : nlohmann::json(nullptr);
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.visual_dim = j.at("visual_dim").get<std::size_t>();
  c.word_dim = j.at("word_dim").get<std::size_t>();
  c.proto_dim = j.at("proto_dim").get<std::size_t>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
  c.semantic_hidden = j.at("semantic_hidden").get<std::size_t>();
  c.mixer_hidden = j.at("mixer_hidden").get<std::size_t>();
  c.dropout_keep = j.at("dropout_keep").get<double>();
  c.mode = parse_conditioning_mode(j.at("conditioning_mode").get<std::string>());
  c.distance = parse_distance_kind(j.at("distance").get<std::string>());
  c.rule = parse_prototype_rule(j.at("prototype_rule").get<std::string>());
  if (!j.at("lambda_fixed").is_null()) c.lambda_fixed = j.at("lambda_fixed").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline std::string serialize_checkpoint(const Am3Model& model) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = config_to_json(model.config());
  nlohmann::json sections = nlohmann::json::object();
  for (const auto& [name, param] : model.named_parameters()) {
    const std::string section = name.substr(0, 1);
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = param->value.shape();
    entry["values"] = param->value.storage();
    sections[section].push_back(std::move(entry));
  }
  j["parameters"] = std::move(sections);
  return j.dump(1) + "\n";
}

inline Am3Model deserialize_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat) throw ParseError("unsupported checkpoint format");
    Am3Model model(config_from_json(j.at("config")));
    for (auto& np : model.named_parameters()) {
      const auto& section = j.at("parameters").at(np.name.substr(0, 1));
      const nlohmann::json* entry = nullptr;
      for (const auto& e : section) {
        if (e.at("name") == np.name) entry = &e;
      }
      if (!entry) throw ParseError("checkpoint lacks parameter " + np.name);
      Tensor value(entry->at("shape").get<Shape>(), entry->at("values").get<std::vector<double>>());
      if (value.shape() != np.param->value.shape()) {
        throw DimensionError("parameter " + np.name + " has shape " + shape_string(value.shape()) +
                             ", configuration implies " + shape_string(np.param->value.shape()));
      }
      *np.param = Parameter(std::move(value));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Am3Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(model);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Am3Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace am3
