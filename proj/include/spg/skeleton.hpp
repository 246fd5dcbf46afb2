#pragma once

#include <Eigen/Core>

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spg {

/// Per-frame joint coordinates, one joint per row.
template <typename Scalar>
using Pose3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename Scalar>
using Pose2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Camera-space meters: x right, y down, z forward.
using Pose3D = Pose3<double>;
/// Pixels.
using Pose2D = Pose2<double>;

using PoseSequence3D = std::vector<Pose3D>;
using PoseSequence2D = std::vector<Pose2D>;

/// Kinematic tree over M joints with a left/right symmetry map.
///
/// The constructor validates the tree (single root, no cycles), that the flip
/// map is an involution fixing the root, and that every rest bone is positive.
class Skeleton {
 public:
  static constexpr int kNoParent = -1;

  Skeleton(std::vector<std::string> names, std::vector<int> parent, std::vector<int> flip_map,
           std::vector<double> rest_bone_lengths, std::vector<Eigen::Vector3d> rest_directions);

  int num_joints() const { return static_cast<int>(parent_.size()); }
  int num_bones() const { return num_joints() - 1; }
  int root() const { return root_; }
  int parent(int joint) const { return parent_[static_cast<std::size_t>(joint)]; }
  const std::vector<int>& parents() const { return parent_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& flip_map() const { return flip_map_; }

  /// One entry per non-root joint, in joint order.
  const std::vector<double>& rest_bone_lengths() const { return rest_bone_lengths_; }
  /// Unit direction of each joint's bone from its parent in the rest pose
  /// (zero vector for the root).
  const std::vector<Eigen::Vector3d>& rest_directions() const { return rest_directions_; }

  /// Non-root joints in joint order; bone b connects child_joints()[b] to its parent.
  const std::vector<int>& child_joints() const { return children_; }
  /// Joints ordered so that every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }
  /// Directed (joint, neighbor) pairs over all tree neighbors; each bone appears twice.
  std::vector<std::pair<int, int>> neighbor_pairs() const;

  /// Rest pose with the root at the origin.
  Pose3D rest_pose() const;

  /// Same topology and directions with new bone lengths.
  Skeleton with_bone_lengths(std::vector<double> lengths) const;

  bool same_topology(const Skeleton& other) const;

  nlohmann::json to_json() const;
  static Skeleton from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> names_;
  std::vector<int> parent_;
  std::vector<int> flip_map_;
  std::vector<double> rest_bone_lengths_;
  std::vector<Eigen::Vector3d> rest_directions_;
  std::vector<int> children_;
  std::vector<int> order_;
  int root_ = 0;
};

/// The conventional 17-joint body layout with the pelvis as root.
Skeleton default_skeleton();

/// Length of every bone (non-root joints in joint order).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> bone_lengths(const Eigen::MatrixBase<Derived>& pose,
                                                                        const Skeleton& skel);

/// Places the root at `root_position` and each child at its parent position plus
/// the parent's composed rotation applied to the child's rest bone vector.
/// Rotations must be orthonormal to 1e-9.
Pose3D forward_kinematics(const Skeleton& skel, const Eigen::Vector3d& root_position,
                          std::span<const Eigen::Matrix3d> joint_rotations);

/// Reflects x about `axis_center` and swaps left/right joints. The default axis
/// is 0 for 2-D (normalized) poses and the root joint's x for 3-D poses.
template <typename Derived>
typename Derived::PlainObject flip_horizontal(const Eigen::MatrixBase<Derived>& pose, const Skeleton& skel,
                                              std::optional<double> axis_center = std::nullopt);

// ---------------------------------------------------------------------------

void check_joint_count(const char* op, Eigen::Index rows, const Skeleton& skel);

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> bone_lengths(const Eigen::MatrixBase<Derived>& pose,
                                                                        const Skeleton& skel) {
  check_joint_count("bone_lengths", pose.rows(), skel);
  const auto& children = skel.child_joints();
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(static_cast<Eigen::Index>(children.size()));
  for (std::size_t b = 0; b < children.size(); ++b) {
    const int c = children[b];
    out[static_cast<Eigen::Index>(b)] = (pose.row(c) - pose.row(skel.parent(c))).norm();
  }
  return out;
}

template <typename Derived>
typename Derived::PlainObject flip_horizontal(const Eigen::MatrixBase<Derived>& pose, const Skeleton& skel,
                                              std::optional<double> axis_center) {
  check_joint_count("flip_horizontal", pose.rows(), skel);
  const double center = axis_center.value_or(pose.cols() == 3 ? double(pose(skel.root(), 0)) : 0.0);
  typename Derived::PlainObject out(pose.rows(), pose.cols());
  for (int i = 0; i < skel.num_joints(); ++i) {
    out.row(i) = pose.row(skel.flip_map()[static_cast<std::size_t>(i)]);
    out(i, 0) = 2.0 * center - out(i, 0);
  }
  return out;
}

}  // namespace spg
