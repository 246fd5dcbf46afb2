#pragma once

#include "spg/core/diff_tensor.hpp"
#include "spg/skeleton.hpp"

#include <Eigen/Core>

#include "json.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace spg {

/// Pinhole intrinsics with a three-term radial and two-term tangential lens model.
struct CameraIntrinsics {
  Eigen::Vector2d focal{1000.0, 1000.0};      // f_c, pixels
  Eigen::Vector2d center{500.0, 500.0};       // c_e, pixels
  Eigen::Vector3d radial = Eigen::Vector3d::Zero();      // d_r
  Eigen::Vector2d tangential = Eigen::Vector2d::Zero();  // d_t
  int width = 1000;
  int height = 1000;

  /// Throws ContractError unless focal lengths and image size are positive.
  void validate() const;

  /// Intrinsics that image the x-mirrored scene as the x-mirrored picture
  /// (principal point reflected about the image center, first tangential term negated).
  CameraIntrinsics mirrored() const;

  nlohmann::json to_json() const;
  static CameraIntrinsics from_json(const nlohmann::json& j);

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Differentiable forward projection.
///
///   n      = clamp(xy / z, -1, 1)
///   r      = n_x^2 + n_y^2
///   radial = 1 + d_r . (r, r^2, r^3)
///   tan    = d_t . n
///   pixels = f_c * (n * (radial + tan) + d_t * r) + c_e
///
/// `xy` has shape [..., M, 2] and `z` [..., M, 1]; every z must be positive.
DiffTensor project(const DiffTensor& xy, const DiffTensor& z, const CameraIntrinsics& cam);

/// Batched variant: the leading axis of xy/z indexes `cams`.
DiffTensor project(const DiffTensor& xy, const DiffTensor& z, std::span<const CameraIntrinsics> cams);

/// [T, M, 3] camera-space poses -> [T, M, 2] pixels.
DiffTensor project_sequence(const DiffTensor& poses, const CameraIntrinsics& cam);
PoseSequence2D project_sequence(const PoseSequence3D& poses, const CameraIntrinsics& cam);
Pose2D project_pose(const Pose3D& pose, const CameraIntrinsics& cam);

/// Deterministic intrinsics. Presets: "random" (focal in [900, 1200] px, principal
/// point within 20 px of the center, d_r in [-0.3, 0.3]^3, d_t in [-0.01, 0.01]^2,
/// 1000x1000 image) and "ideal" (no distortion, f = 1000, c = 500).
CameraIntrinsics sample_camera(std::uint64_t seed, std::string_view preset = "random");

/// Maps pixel coordinates to the encoder's input range, preserving aspect:
/// x' = 2(x - w/2)/w, y' = 2(y - h/2)/w.
Pose2D normalize_screen(const Pose2D& pixels, int width, int height);

}  // namespace spg
