#pragma once

#include "spg/evaluator.hpp"
#include "spg/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spg {

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> windows{9, 27, 81};
  bool loss_variants = true;
  bool window_sweep = true;

  void validate() const;
  nlohmann::json to_json() const;
  static AblationOptions from_json(const nlohmann::json& j);
};

struct AblationRow {
  std::string group;  // "loss" or "window"
  std::string name;   // "Baseline", "Baseline*", "SPGNet", or "J=27"
  LossWeights weights;
  int window = 0;
  // One entry per seed, in seed order.
  std::vector<double> mpjpe_mm, pmpjpe_mm, bone_deviation_m;

  double mean_mpjpe() const;
  double mean_pmpjpe() const;
  double mean_bone_deviation() const;
  nlohmann::json to_json() const;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  BoneLengthReport bones;  // full objective, first seed
  std::string bones_clip;
  nlohmann::json config;

  /// nullptr if absent.
  const AblationRow* find(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Trains every (variant, seed) pair from `base` on the dataset's training
/// subjects and evaluates on its test subjects. Loss variants: Baseline uses
/// only the pose term, Baseline* adds the kinematic term, SPGNet is the full
/// base objective. The window sweep trains the full objective at each window.
/// Runs are distributed over worker_threads(); results do not depend on it.
AblationReport ablation_suite(const Dataset& data, const TrainConfig& base, const AblationOptions& options = {});

}  // namespace spg
