#include "spg/config.hpp"

#include "spg/core/errors.hpp"

#include <fstream>

namespace spg {

nlohmann::json eval_options_to_json(const EvalOptions& o) {
  const std::string protocol = o.protocol1 && o.protocol2 ? "both" : o.protocol1 ? "1" : "2";
  return {{"protocol", protocol}, {"root_relative", o.root_relative}, {"bone_samples", o.bone_samples}};
}

EvalOptions eval_options_from_json(const nlohmann::json& j) {
  EvalOptions o;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "protocol") {
        const std::string p = value.is_string() ? value.get<std::string>() : std::to_string(value.get<int>());
        if (p == "1") o = {true, false, o.root_relative, o.bone_samples};
        else if (p == "2") o = {false, true, o.root_relative, o.bone_samples};
        else if (p == "both") o = {true, true, o.root_relative, o.bone_samples};
        else throw ConfigError("eval.protocol must be 1, 2 or both, got '" + p + "'");
      } else if (key == "root_relative") {
        o.root_relative = value.get<bool>();
      } else if (key == "bone_samples") {
        o.bone_samples = value.get<std::size_t>();
        if (o.bone_samples < 2) throw ConfigError("eval.bone_samples must be >= 2");
      } else {
        throw ConfigError("unknown key eval." + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  return o;
}

nlohmann::json ToolConfig::to_json() const {
  return {{"generator", generator.to_json()}, {"encoder", train.encoder.to_json()}, {"train", train.to_json()},
          {"loss", train.loss.to_json()},      {"eval", eval_options_to_json(eval)}, {"ablation", ablation.to_json()}};
}

ToolConfig ToolConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ToolConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw ConfigError("config section " + key + " must be an object");
    if (key == "generator") c.generator = GeneratorConfig::from_json(value);
    else if (key == "encoder" || key == "train" || key == "loss" || key == "eval" || key == "ablation") continue;
    else throw ConfigError("unknown config section " + key);
  }
  // Train first: it resets loss and encoder to defaults.
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("loss")) c.train.loss = LossWeights::from_json(j.at("loss"));
  if (j.contains("encoder")) c.train.encoder = EncoderConfig::from_json(j.at("encoder"));
  if (j.contains("eval")) c.eval = eval_options_from_json(j.at("eval"));
  if (j.contains("ablation")) c.ablation = AblationOptions::from_json(j.at("ablation"));
  return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string part = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) throw ConfigError("override '" + assignment + "' descends into a non-object");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  *node = value.is_discarded() ? nlohmann::json(text) : value;
}

ToolConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          const nlohmann::json& base) {
  nlohmann::json j = base.is_object() ? base : nlohmann::json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot read config file " + file->string());
    const nlohmann::json loaded = nlohmann::json::parse(in, nullptr, false);
    if (loaded.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
    j.merge_patch(loaded);
  }
  for (const auto& o : overrides) apply_override(j, o);
  ToolConfig c = ToolConfig::from_json(j);
  c.generator.validate();
  c.train.validate();
  return c;
}

}  // namespace spg
