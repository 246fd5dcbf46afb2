#pragma once

#include "spg/camera.hpp"
#include "spg/core/diff_tensor.hpp"
#include "spg/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spg {

struct WindowOptions {
  int window = 27;  // J, odd
  int stride = 1;
  bool augment_flip = false;
};

/// One training sample: the window centered on `frame` of `clip`, plus the
/// window centered on its neighbor frame for the kinematic pair.
struct WindowRef {
  std::size_t clip = 0;
  std::size_t frame = 0;
  std::size_t neighbor = 0;
  bool flipped = false;
};

/// Batch tensors, P = 2 windows per sample ordered (earlier frame, later frame).
struct WindowBatch {
  DiffTensor inputs;    // [B * P, J, M, 2] normalized screen coordinates
  DiffTensor targets;   // [B, P, M, 3] camera-space meters
  DiffTensor pixels;    // [B, P, M, 2] 2D input in pixels
  std::vector<CameraIntrinsics> cameras;  // B, mirrored for flipped samples
  std::size_t size() const { return cameras.size(); }
};

/// Sliding windows over a set of clips with replicate padding at clip edges.
///
/// Flipped samples mirror the scene about the camera's x = 0 plane: the 3D
/// target negates x, the 2D input is mirrored about the image's vertical center
/// line, joints are relabeled through the skeleton's flip map, and the camera is
/// replaced by its mirrored() counterpart so the projection stays exact.
class WindowSet {
 public:
  WindowSet(std::vector<const MotionClip*> clips, const Skeleton& skel, WindowOptions options);

  std::size_t size() const { return refs_.size(); }
  const std::vector<WindowRef>& refs() const { return refs_; }
  std::size_t skipped_clips() const { return skipped_; }
  const WindowOptions& options() const { return options_; }

  /// Sample order for an epoch; a pure function of the seed.
  std::vector<std::size_t> shuffled(std::uint64_t seed) const;

  WindowBatch assemble(std::span<const std::size_t> indices) const;

  /// The normalized window [J, M, 2] centered on `frame`, optionally flipped.
  DiffTensor window(std::size_t clip, std::size_t frame, bool flipped) const;
  /// The (possibly flipped) 3D target of a frame.
  Pose3D target(std::size_t clip, std::size_t frame, bool flipped) const;

 private:
  std::vector<const MotionClip*> clips_;
  const Skeleton* skel_;
  WindowOptions options_;
  std::vector<WindowRef> refs_;
  std::size_t skipped_ = 0;
  // Per clip, normalized 2D frames flattened [T, M, 2], plain and flipped.
  std::vector<Eigen::VectorXd> normalized_, normalized_flipped_;
};

/// Mirrors a camera-space pose about x = 0 with flip-map relabeling.
Pose3D mirror_pose(const Pose3D& pose, const Skeleton& skel);
/// Mirrors pixels about the vertical center line of a `width`-pixel image.
Pose2D mirror_pixels(const Pose2D& pixels, const Skeleton& skel, int width);

}  // namespace spg
