#include "spg/skeleton.hpp"

#include "spg/core/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <deque>

namespace spg {

Skeleton::Skeleton(std::vector<std::string> names, std::vector<int> parent, std::vector<int> flip_map,
                   std::vector<double> rest_bone_lengths, std::vector<Eigen::Vector3d> rest_directions)
    : names_(std::move(names)),
      parent_(std::move(parent)),
      flip_map_(std::move(flip_map)),
      rest_bone_lengths_(std::move(rest_bone_lengths)),
      rest_directions_(std::move(rest_directions)) {
  const int m = static_cast<int>(parent_.size());
  if (m < 1) throw ContractError("skeleton: no joints");
  if (static_cast<int>(names_.size()) != m || static_cast<int>(flip_map_.size()) != m ||
      static_cast<int>(rest_directions_.size()) != m || static_cast<int>(rest_bone_lengths_.size()) != m - 1) {
    throw ContractError("skeleton: field sizes disagree with " + std::to_string(m) + " joints");
  }

  int roots = 0;
  for (int i = 0; i < m; ++i) {
    const int p = parent_[static_cast<std::size_t>(i)];
    if (p == kNoParent) {
      ++roots;
      root_ = i;
    } else if (p < 0 || p >= m || p == i) {
      throw ContractError("skeleton: joint " + std::to_string(i) + " has invalid parent " + std::to_string(p));
    }
  }
  if (roots != 1) throw ContractError("skeleton: expected exactly one root, found " + std::to_string(roots));

  for (int i = 0; i < m; ++i) {
    int cur = i;
    for (int steps = 0; cur != root_; ++steps) {
      if (steps > m) throw ContractError("skeleton: parent links of joint " + std::to_string(i) + " form a cycle");
      cur = parent_[static_cast<std::size_t>(cur)];
    }
  }

  for (int i = 0; i < m; ++i) {
    const int f = flip_map_[static_cast<std::size_t>(i)];
    if (f < 0 || f >= m || flip_map_[static_cast<std::size_t>(f)] != i) {
      throw ContractError("skeleton: flip map is not an involution at joint " + std::to_string(i));
    }
  }
  if (flip_map_[static_cast<std::size_t>(root_)] != root_) throw ContractError("skeleton: flip map moves the root");

  for (double len : rest_bone_lengths_) {
    if (!(len > 0.0)) throw ContractError("skeleton: rest bone lengths must be positive");
  }

  for (int i = 0; i < m; ++i) {
    if (i != root_) children_.push_back(i);
  }
  for (int c : children_) {
    const double n = rest_directions_[static_cast<std::size_t>(c)].norm();
    if (std::abs(n - 1.0) > 1e-9) throw ContractError("skeleton: rest direction of joint " + std::to_string(c) + " is not unit length");
  }

  std::deque<int> queue{root_};
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    order_.push_back(j);
    for (int c = 0; c < m; ++c) {
      if (parent_[static_cast<std::size_t>(c)] == j) queue.push_back(c);
    }
  }
}

std::vector<std::pair<int, int>> Skeleton::neighbor_pairs() const {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < num_joints(); ++i) {
    if (parent(i) != kNoParent) pairs.emplace_back(i, parent(i));
    for (int c = 0; c < num_joints(); ++c) {
      if (parent(c) == i) pairs.emplace_back(i, c);
    }
  }
  return pairs;
}

Pose3D Skeleton::rest_pose() const {
  std::vector<Eigen::Matrix3d> identity(static_cast<std::size_t>(num_joints()), Eigen::Matrix3d::Identity());
  return forward_kinematics(*this, Eigen::Vector3d::Zero(), identity);
}

Skeleton Skeleton::with_bone_lengths(std::vector<double> lengths) const {
  return Skeleton(names_, parent_, flip_map_, std::move(lengths), rest_directions_);
}

bool Skeleton::same_topology(const Skeleton& other) const {
  return parent_ == other.parent_ && flip_map_ == other.flip_map_;
}

nlohmann::json Skeleton::to_json() const {
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& d : rest_directions_) dirs.push_back({d.x(), d.y(), d.z()});
  return {{"names", names_},
          {"parent", parent_},
          {"flip_map", flip_map_},
          {"rest_bone_lengths", rest_bone_lengths_},
          {"rest_directions", dirs}};
}

Skeleton Skeleton::from_json(const nlohmann::json& j) {
  try {
    std::vector<Eigen::Vector3d> dirs;
    const auto parent = j.at("parent").get<std::vector<int>>();
    if (j.contains("rest_directions")) {
      for (const auto& d : j.at("rest_directions")) dirs.emplace_back(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
    } else {
      // Without directions, bones point down the y axis from their parent.
      for (int p : parent) dirs.push_back(p == kNoParent ? Eigen::Vector3d::Zero().eval() : Eigen::Vector3d::UnitY().eval());
    }
    return Skeleton(j.at("names").get<std::vector<std::string>>(), parent, j.at("flip_map").get<std::vector<int>>(),
                    j.at("rest_bone_lengths").get<std::vector<double>>(), std::move(dirs));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("skeleton json: ") + e.what());
  }
}

Skeleton default_skeleton() {
  const Eigen::Vector3d left = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d right = -left;
  const Eigen::Vector3d down = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d up = -down;
  return Skeleton(
      {"pelvis", "right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle", "spine", "thorax",
       "neck", "head", "left_shoulder", "left_elbow", "left_wrist", "right_shoulder", "right_elbow", "right_wrist"},
      {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15},
      {0, 4, 5, 6, 1, 2, 3, 7, 8, 9, 10, 14, 15, 16, 11, 12, 13},
      {0.13, 0.45, 0.44, 0.13, 0.45, 0.44, 0.23, 0.25, 0.12, 0.12, 0.16, 0.28, 0.25, 0.16, 0.28, 0.25},
      {Eigen::Vector3d::Zero(), right, down, down, left, down, down, up, up, up, up, left, down, down, right, down, down});
}

void check_joint_count(const char* op, Eigen::Index rows, const Skeleton& skel) {
  if (rows != skel.num_joints()) {
    throw ContractError(std::string(op) + ": pose has " + std::to_string(rows) + " joints, skeleton has " +
                        std::to_string(skel.num_joints()));
  }
}

Pose3D forward_kinematics(const Skeleton& skel, const Eigen::Vector3d& root_position,
                          std::span<const Eigen::Matrix3d> joint_rotations) {
  const int m = skel.num_joints();
  if (static_cast<int>(joint_rotations.size()) != m) {
    throw ContractError("forward_kinematics: expected " + std::to_string(m) + " rotations, got " +
                        std::to_string(joint_rotations.size()));
  }
  for (int j = 0; j < m; ++j) {
    const auto& r = joint_rotations[static_cast<std::size_t>(j)];
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() >= 1e-9) {
      throw ContractError("forward_kinematics: rotation of joint " + std::to_string(j) + " is not orthonormal");
    }
  }

  std::vector<double> length(static_cast<std::size_t>(m), 0.0);
  const auto& children = skel.child_joints();
  for (std::size_t b = 0; b < children.size(); ++b) length[static_cast<std::size_t>(children[b])] = skel.rest_bone_lengths()[b];

  Pose3D pose(m, 3);
  std::vector<Eigen::Matrix3d> global(static_cast<std::size_t>(m));
  for (int j : skel.topological_order()) {
    const auto uj = static_cast<std::size_t>(j);
    const int p = skel.parent(j);
    if (p == Skeleton::kNoParent) {
      global[uj] = joint_rotations[uj];
      pose.row(j) = root_position.transpose();
      continue;
    }
    const auto up = static_cast<std::size_t>(p);
    global[uj] = global[up] * joint_rotations[uj];
    const Eigen::Vector3d bone = global[up] * (length[uj] * skel.rest_directions()[uj]);
    pose.row(j) = pose.row(p) + bone.transpose();
  }
  return pose;
}

}  // namespace spg
