#include "doctest.h"

#include "spg/core/errors.hpp"
#include "spg/skeleton.hpp"

#include <Eigen/Geometry>

#include <random>

using namespace spg;

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

Pose3D random_pose(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Pose3D p(m, 3);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 3; ++k) p(i, k) = u(rng);
  return p;
}

Skeleton two_joint_chain() {
  return Skeleton({"root", "tip"}, {-1, 0}, {0, 1}, {1.0}, {Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ()});
}

}  // namespace

TEST_CASE("default skeleton topology") {
  const Skeleton s = default_skeleton();
  CHECK(s.num_joints() == 17);
  CHECK(s.num_bones() == 16);
  CHECK(s.root() == 0);
  for (int i = 0; i < 17; ++i) CHECK(s.flip_map()[static_cast<std::size_t>(s.flip_map()[static_cast<std::size_t>(i)])] == i);
  CHECK(s.neighbor_pairs().size() == 32);
}

TEST_CASE("tree validation rejects cycles and second roots") {
  const std::vector<Eigen::Vector3d> dirs{Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitY()};
  CHECK_THROWS_AS(Skeleton({"a", "b", "c"}, {-1, 2, 1}, {0, 1, 2}, {1, 1}, dirs), ContractError);
  CHECK_THROWS_AS(Skeleton({"a", "b", "c"}, {-1, -1, 1}, {0, 1, 2}, {1, 1}, dirs), ContractError);
  CHECK_THROWS_AS(Skeleton({"a", "b", "c"}, {-1, 0, 1}, {0, 2, 2}, {1, 1}, dirs), ContractError);
  CHECK_THROWS_AS(Skeleton({"a", "b", "c"}, {-1, 0, 1}, {0, 1, 2}, {1, 0}, dirs), ContractError);
  CHECK_NOTHROW(Skeleton({"a", "b", "c"}, {-1, 0, 1}, {0, 1, 2}, {1, 1}, dirs));
}

TEST_CASE("bone lengths") {
  SUBCASE("unit offset") {
    Pose3D p(2, 3);
    p << 0, 0, 0, 0, 0, 1;
    auto len = bone_lengths(p, two_joint_chain());
    CHECK(len.size() == 1);
    CHECK(len[0] == 1.0);
  }
  SUBCASE("scaling doubles every length and matches per-edge recomputation") {
    std::mt19937_64 rng(1);
    const Skeleton s = default_skeleton();
    const Pose3D p = random_pose(17, rng);
    const auto len = bone_lengths(p, s);
    const auto len2 = bone_lengths(Pose3D(2.0 * p), s);
    int b = 0;
    for (int j = 1; j < 17; ++j, ++b) {
      const int q = s.parents()[static_cast<std::size_t>(j)];
      const double dx = p(j, 0) - p(q, 0), dy = p(j, 1) - p(q, 1), dz = p(j, 2) - p(q, 2);
      CHECK(len[b] == doctest::Approx(std::sqrt(dx * dx + dy * dy + dz * dz)).epsilon(1e-14));
      CHECK(len2[b] == doctest::Approx(2.0 * len[b]).epsilon(1e-14));
    }
  }
  SUBCASE("joint count mismatch") {
    CHECK_THROWS_AS(bone_lengths(Pose3D::Zero(3, 3), two_joint_chain()), ContractError);
  }
}

TEST_CASE("forward kinematics") {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(9);
  const Eigen::Vector3d root(0.3, -0.2, 4.0);

  SUBCASE("identity rotations translate the rest pose") {
    std::vector<Eigen::Matrix3d> rots(17, Eigen::Matrix3d::Identity());
    const Pose3D p = forward_kinematics(s, root, rots);
    const Pose3D rest = s.rest_pose();
    CHECK((p.rowwise() - root.transpose() - rest).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("global rotation is a rigid motion") {
    std::vector<Eigen::Matrix3d> rots(17, Eigen::Matrix3d::Identity());
    rots[0] = random_rotation(rng);
    const Pose3D p = forward_kinematics(s, root, rots);
    const Pose3D expected = (s.rest_pose() * rots[0].transpose()).rowwise() + root.transpose();
    CHECK((p - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("random rotations preserve rest bone lengths") {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Eigen::Matrix3d> rots;
      for (int j = 0; j < 17; ++j) rots.push_back(random_rotation(rng));
      const auto len = bone_lengths(forward_kinematics(s, root, rots), s);
      for (int b = 0; b < 16; ++b) CHECK(std::abs(len[b] - s.rest_bone_lengths()[static_cast<std::size_t>(b)]) < 1e-9);
    }
  }
  SUBCASE("non-orthonormal rotation rejected") {
    std::vector<Eigen::Matrix3d> rots(17, Eigen::Matrix3d::Identity());
    rots[5](0, 0) = 1.01;
    CHECK_THROWS_AS(forward_kinematics(s, root, rots), ContractError);
  }
}

TEST_CASE("horizontal flip") {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(4);
  SUBCASE("flip twice is the identity about the zero axis") {
    const Pose3D p = random_pose(17, rng);
    CHECK(flip_horizontal(flip_horizontal(p, s, 0.0), s, 0.0) == p);
    const Pose2D q = Pose2D::Random(17, 2) * 500.0;
    CHECK(flip_horizontal(flip_horizontal(q, s), s) == q);
  }
  SUBCASE("flip twice about the root returns the pose up to rounding") {
    Pose3D p = random_pose(17, rng);
    p.rowwise() += Eigen::RowVector3d(0.37, 0.0, 4.0);
    const Pose3D back = flip_horizontal(flip_horizontal(p, s), s);
    CHECK((back - p).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("symmetric rest pose maps to itself") {
    const Pose3D rest = s.rest_pose();
    CHECK((flip_horizontal(rest, s) - rest).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("bone lengths invariant") {
    const Pose3D p = random_pose(17, rng);
    const auto a = bone_lengths(p, s);
    const auto b = bone_lengths(flip_horizontal(p, s), s);
    // Bone of joint j in the flipped pose is the bone of flip_map[j] in the original.
    for (int j = 1; j < 17; ++j) {
      const int f = s.flip_map()[static_cast<std::size_t>(j)];
      CHECK(b[j - 1] == doctest::Approx(a[f - 1]).epsilon(1e-14));
    }
  }
  SUBCASE("MPJPE between two poses is preserved") {
    const Pose3D p = random_pose(17, rng), q = random_pose(17, rng);
    auto mpjpe = [](const Pose3D& a, const Pose3D& b) { return (a - b).rowwise().norm().mean(); };
    CHECK(mpjpe(flip_horizontal(p, s, 0.2), flip_horizontal(q, s, 0.2)) == doctest::Approx(mpjpe(p, q)).epsilon(1e-14));
  }
}

TEST_CASE("skeleton json round trip") {
  const Skeleton s = default_skeleton();
  const Skeleton r = Skeleton::from_json(s.to_json());
  CHECK(r.same_topology(s));
  CHECK(r.rest_bone_lengths() == s.rest_bone_lengths());
  CHECK(r.names() == s.names());
}
