#pragma once

#include "spg/camera.hpp"
#include "spg/core/diff_tensor.hpp"
#include "spg/skeleton.hpp"

#include "json.hpp"

#include <span>

namespace spg {

struct LossWeights {
  double pose3d = 1.0;
  double depth = 1.0;
  double kinematic = 0.01;
  double reproj = 0.001;

  /// Throws ConfigError on negative weights or when all are zero.
  void validate() const;

  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double pose3d_mpjpe = 0.0;  // meters, over the (x, y) split
  double depth_wmpjpe = 0.0;  // dimensionless
  double kinematic = 0.0;     // meters
  double reproj_mpjpe = 0.0;  // pixels
  double total = 0.0;
  DiffTensor objective;  // differentiable total
};

/// Mean per-joint Euclidean distance over tensors of shape [..., M, D].
DiffTensor mpjpe(const DiffTensor& pred, const DiffTensor& gt);

/// Mean of |pred_z - gt_z| / gt_z. Throws DomainError if any gt_z <= 0.
DiffTensor weighted_mpjpe_depth(const DiffTensor& pred_z, const DiffTensor& gt_z);

/// Bone-length drift between two frames on `skel`: (1/2M) times the sum, over
/// every joint and each of its tree neighbors, of the absolute change in distance.
DiffTensor kinematic_constraint(const DiffTensor& prev, const DiffTensor& curr, const Skeleton& skel);

/// The same drift averaged over the T-1 consecutive pairs of a [..., T, M, 3]
/// sequence (and over any leading batch axes). A single frame gives 0.
DiffTensor kinematic_sequence(const DiffTensor& poses, const Skeleton& skel);

/// mpjpe between the projection of `pred3d` [..., M, 3] and `input2d` [..., M, 2], in pixels.
DiffTensor reprojection_mpjpe(const DiffTensor& pred3d, const CameraIntrinsics& cam, const DiffTensor& input2d);
/// Batched form: the leading axis indexes `cams`.
DiffTensor reprojection_mpjpe(const DiffTensor& pred3d, std::span<const CameraIntrinsics> cams,
                              const DiffTensor& input2d);

/// Predicted depths below this are floored before projection in total_loss so
/// an untrained network with negative depths still yields a finite loss.
inline constexpr double kMinProjectionDepth = 0.05;

/// All four terms over [T, M, 3] predictions (or [B, T, M, 3] with one camera per
/// batch entry). pose3d uses the (x, y) split, depth the z split, kinematic the
/// consecutive predicted frames.
LossBreakdown total_loss(const DiffTensor& pred3d, const DiffTensor& gt3d, std::span<const CameraIntrinsics> cams,
                         const DiffTensor& input2d, const Skeleton& skel, const LossWeights& weights);
LossBreakdown total_loss(const DiffTensor& pred3d, const DiffTensor& gt3d, const CameraIntrinsics& cam,
                         const DiffTensor& input2d, const Skeleton& skel, const LossWeights& weights);

}  // namespace spg
