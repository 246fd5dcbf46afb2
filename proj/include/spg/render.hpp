#pragma once

#include "spg/camera.hpp"
#include "spg/skeleton.hpp"

#include <string>

namespace spg {

struct RenderLayers {
  Pose2D input;       // 2D input, pixels
  Pose2D prediction;  // re-projected prediction
  Pose2D truth;       // projected ground truth
  std::string title;
  std::string prediction_label = "prediction";
};

/// SVG of the three skeletons overlaid on a width x height canvas, one <line>
/// per bone per layer: input solid, prediction dashed, ground truth dotted.
/// Byte-identical for identical inputs.
std::string render_svg(const RenderLayers& layers, const Skeleton& skel, int width, int height);

}  // namespace spg
