#pragma once

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spg {

struct GradcheckOptions {
  std::size_t points = 100;  // random inputs per op
  std::uint64_t seed = 0;
  double step = 1e-6;        // central-difference step
  std::string inject_fault;  // op whose analytic gradient is deliberately corrupted (test hook)
};

struct GradcheckResult {
  std::string op;
  std::size_t points = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t worst_point = 0;

  bool passed() const { return points > 0 && max_relative_error < tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  double seconds = 0.0;

  bool passed() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Names of the checked operations, in report order.
const std::vector<std::string>& gradcheck_ops();

/// Compares reverse-mode gradients with central differences for the projector,
/// the four loss terms and a tiny encoder. The error at a point is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8) over every
/// differentiated input of that point. Throws ConfigError for an unknown
/// inject_fault name.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace spg
