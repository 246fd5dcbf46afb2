#include "spg/losses.hpp"

#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace spg {

void LossWeights::validate() const {
  for (double w : {pose3d, depth, kinematic, reproj}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (pose3d + depth + kinematic + reproj <= 0.0) throw ConfigError("at least one loss weight must be positive");
}

nlohmann::json LossWeights::to_json() const {
  return {{"pose3d", pose3d}, {"depth", depth}, {"kinematic", kinematic}, {"reproj", reproj}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError("loss." + key + " must be a number");
    const double v = value.get<double>();
    if (key == "pose3d") w.pose3d = v;
    else if (key == "depth") w.depth = v;
    else if (key == "kinematic") w.kinematic = v;
    else if (key == "reproj") w.reproj = v;
    else throw ConfigError("unknown key loss." + key);
  }
  w.validate();
  return w;
}

namespace {

void require_same_shape(const char* op, const DiffTensor& a, const DiffTensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_pose_tensor(const char* op, const DiffTensor& x, std::size_t dims, const Skeleton* skel = nullptr) {
  if (x.rank() < 2 || x.shape().back() != dims) {
    throw ContractError(std::string(op) + ": expected [..., M, " + std::to_string(dims) + "], got " + shape_string(x.shape()));
  }
  if (skel && x.shape()[x.rank() - 2] != static_cast<std::size_t>(skel->num_joints())) {
    throw ContractError(std::string(op) + ": pose has " + std::to_string(x.shape()[x.rank() - 2]) + " joints, skeleton has " +
                        std::to_string(skel->num_joints()));
  }
}

// Distances along every directed neighbor pair: [..., M, 3] -> [..., 2(M-1)].
DiffTensor neighbor_distances(const DiffTensor& poses, const Skeleton& skel) {
  std::vector<std::size_t> from, to;
  for (auto [i, j] : skel.neighbor_pairs()) {
    from.push_back(static_cast<std::size_t>(i));
    to.push_back(static_cast<std::size_t>(j));
  }
  return euclidean_norm_lastaxis(gather(poses, -2, from) - gather(poses, -2, to));
}

}  // namespace

DiffTensor mpjpe(const DiffTensor& pred, const DiffTensor& gt) {
  require_same_shape("mpjpe", pred, gt);
  if (pred.rank() < 2 || (pred.shape().back() != 2 && pred.shape().back() != 3)) {
    throw ContractError("mpjpe: expected [..., M, 2|3], got " + shape_string(pred.shape()));
  }
  return mean_all(euclidean_norm_lastaxis(pred - gt));
}

DiffTensor weighted_mpjpe_depth(const DiffTensor& pred_z, const DiffTensor& gt_z) {
  require_same_shape("weighted_mpjpe_depth", pred_z, gt_z);
  const auto& g = gt_z.values();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0)) throw DomainError("weighted_mpjpe_depth: ground-truth depth " + std::to_string(g[i]) + " is not positive");
  }
  return mean_all(abs(pred_z - gt_z) / gt_z.detach());
}

DiffTensor kinematic_constraint(const DiffTensor& prev, const DiffTensor& curr, const Skeleton& skel) {
  require_pose_tensor("kinematic_constraint", prev, 3, &skel);
  require_same_shape("kinematic_constraint", prev, curr);
  const double m = skel.num_joints();
  const DiffTensor drift = abs(neighbor_distances(prev, skel) - neighbor_distances(curr, skel));
  // Mean over leading axes of the per-pair normalized sum.
  const DiffTensor per_pair = sum_axis(drift, -1) * (1.0 / (2.0 * m));
  return mean_all(per_pair);
}

DiffTensor kinematic_sequence(const DiffTensor& poses, const Skeleton& skel) {
  require_pose_tensor("kinematic_sequence", poses, 3, &skel);
  if (poses.rank() < 3) throw ContractError("kinematic_sequence: expected [..., T, M, 3], got " + shape_string(poses.shape()));
  const std::size_t t = poses.shape()[poses.rank() - 3];
  if (t < 2) return DiffTensor::scalar(0.0);
  const DiffTensor lengths = neighbor_distances(poses, skel);  // [..., T, P]
  const int time_axis = -2;
  const DiffTensor drift = abs(slice(lengths, time_axis, 1, t) - slice(lengths, time_axis, 0, t - 1));
  return mean_all(sum_axis(drift, -1) * (1.0 / (2.0 * skel.num_joints())));
}

DiffTensor reprojection_mpjpe(const DiffTensor& pred3d, const CameraIntrinsics& cam, const DiffTensor& input2d) {
  require_pose_tensor("reprojection_mpjpe", pred3d, 3);
  return mpjpe(project(slice(pred3d, -1, 0, 2), slice(pred3d, -1, 2, 3), cam), input2d);
}

DiffTensor reprojection_mpjpe(const DiffTensor& pred3d, std::span<const CameraIntrinsics> cams,
                              const DiffTensor& input2d) {
  require_pose_tensor("reprojection_mpjpe", pred3d, 3);
  return mpjpe(project(slice(pred3d, -1, 0, 2), slice(pred3d, -1, 2, 3), cams), input2d);
}

namespace {

LossBreakdown combine(const DiffTensor& pred3d, const DiffTensor& gt3d, const DiffTensor& input2d, const Skeleton& skel,
                      const LossWeights& weights, const std::function<DiffTensor(const DiffTensor&, const DiffTensor&)>& proj) {
  weights.validate();
  require_same_shape("total_loss", pred3d, gt3d);
  require_pose_tensor("total_loss", pred3d, 3, &skel);
  if (pred3d.rank() < 3) throw ContractError("total_loss: expected [..., T, M, 3], got " + shape_string(pred3d.shape()));
  Shape expected2d = pred3d.shape();
  expected2d.back() = 2;
  if (input2d.shape() != expected2d) {
    throw ContractError("total_loss: 2D input " + shape_string(input2d.shape()) + " does not match " + shape_string(expected2d));
  }

  const DiffTensor pred_xy = slice(pred3d, -1, 0, 2), pred_z = slice(pred3d, -1, 2, 3);
  const DiffTensor gt_xy = slice(gt3d, -1, 0, 2), gt_z = slice(gt3d, -1, 2, 3);

  const DiffTensor pose = mpjpe(pred_xy, gt_xy);
  const DiffTensor depth = weighted_mpjpe_depth(pred_z, gt_z);
  const DiffTensor kc = kinematic_sequence(pred3d, skel);
  const DiffTensor pixels = proj(pred_xy, clamp(pred_z, kMinProjectionDepth, std::numeric_limits<double>::infinity()));
  const DiffTensor reproj = mpjpe(pixels, input2d);

  LossBreakdown out;
  out.pose3d_mpjpe = pose.item();
  out.depth_wmpjpe = depth.item();
  out.kinematic = kc.item();
  out.reproj_mpjpe = reproj.item();
  out.objective = pose * weights.pose3d + depth * weights.depth + kc * weights.kinematic + reproj * weights.reproj;
  out.total = out.objective.item();
  return out;
}

}  // namespace

LossBreakdown total_loss(const DiffTensor& pred3d, const DiffTensor& gt3d, std::span<const CameraIntrinsics> cams,
                         const DiffTensor& input2d, const Skeleton& skel, const LossWeights& weights) {
  return combine(pred3d, gt3d, input2d, skel, weights,
                 [&](const DiffTensor& xy, const DiffTensor& z) { return project(xy, z, cams); });
}

LossBreakdown total_loss(const DiffTensor& pred3d, const DiffTensor& gt3d, const CameraIntrinsics& cam,
                         const DiffTensor& input2d, const Skeleton& skel, const LossWeights& weights) {
  return combine(pred3d, gt3d, input2d, skel, weights,
                 [&](const DiffTensor& xy, const DiffTensor& z) { return project(xy, z, cam); });
}

}  // namespace spg
