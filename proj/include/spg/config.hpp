#pragma once

#include "spg/ablation.hpp"
#include "spg/dataset.hpp"
#include "spg/evaluator.hpp"
#include "spg/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spg {

nlohmann::json eval_options_to_json(const EvalOptions& o);
/// Keys: protocol ("1", "2" or "both"), root_relative, bone_samples.
EvalOptions eval_options_from_json(const nlohmann::json& j);

/// Every tunable of the toolkit, one JSON section per module:
/// generator, encoder, train, loss, eval, ablation.
struct ToolConfig {
  GeneratorConfig generator;
  TrainConfig train;  // train.loss and train.encoder hold the loss and encoder sections
  EvalOptions eval;
  AblationOptions ablation;

  nlohmann::json to_json() const;
  /// Missing sections and keys keep their defaults; unknown ones throw ConfigError.
  static ToolConfig from_json(const nlohmann::json& j);
};

/// Applies "section.key=value" (dots descend into objects). The value is parsed
/// as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Defaults, then `base` sections, then the optional config file, then overrides in order.
ToolConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          const nlohmann::json& base = nlohmann::json::object());

}  // namespace spg
