#include "doctest.h"

#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"
#include "spg/losses.hpp"
#include "support/finite_diff.hpp"
#include "support/scalar_projector.hpp"

#include <Eigen/Geometry>

#include <random>

using namespace spg;
using spg::testing::central_difference;
using spg::testing::relative_error;

namespace {

Skeleton chain2() {
  return Skeleton({"a", "b"}, {-1, 0}, {0, 1}, {1.0}, {Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY()});
}

// Plain-loop oracles over flat [T, M, D] buffers.
double loop_mpjpe(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int d) {
  double sum = 0.0;
  const int n = static_cast<int>(a.size()) / d;
  for (int i = 0; i < n; ++i) sum += (a.segment(i * d, d) - b.segment(i * d, d)).norm();
  return sum / n;
}

double loop_kinematic(const Eigen::VectorXd& prev, const Eigen::VectorXd& curr, const Skeleton& skel) {
  const int m = skel.num_joints();
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const bool neighbors = skel.parent(i) == j || skel.parent(j) == i;
      if (!neighbors) continue;
      const double a = (prev.segment<3>(3 * i) - prev.segment<3>(3 * j)).norm();
      const double b = (curr.segment<3>(3 * i) - curr.segment<3>(3 * j)).norm();
      sum += std::abs(a - b);
    }
  }
  return sum / (2.0 * m);
}

DiffTensor pose_tensor(const Pose3D& p) {
  return DiffTensor({static_cast<std::size_t>(p.rows()), 3}, Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()));
}

// Random plausible clip: rest pose jittered, placed in front of the camera.
DiffTensor random_clip(std::mt19937_64& rng, std::size_t t, double jitter, bool requires_grad) {
  const Pose3D rest = default_skeleton().rest_pose();
  std::normal_distribution<double> noise(0.0, jitter);
  Eigen::VectorXd v(static_cast<Eigen::Index>(t * 17 * 3));
  for (std::size_t f = 0; f < t; ++f)
    for (int j = 0; j < 17; ++j)
      for (int c = 0; c < 3; ++c)
        v[static_cast<Eigen::Index>((f * 17 + j) * 3 + c)] = rest(j, c) + noise(rng) + (c == 2 ? 4.0 : 0.0);
  return DiffTensor({t, 17, 3}, v, requires_grad);
}

}  // namespace

TEST_CASE("mpjpe") {
  std::mt19937_64 rng(1);
  DiffTensor a = random_clip(rng, 4, 0.05, false);
  CHECK(mpjpe(a, a).item() == 0.0);
  DiffTensor offset = DiffTensor::from({3}, {0.003, 0.004, 0.0});
  CHECK(mpjpe(a + offset, a).item() == doctest::Approx(0.005).epsilon(1e-12));
  DiffTensor b = random_clip(rng, 4, 0.05, false);
  CHECK(std::abs(mpjpe(a, b).item() - loop_mpjpe(a.values(), b.values(), 3)) < 1e-12);
  DiffTensor t = DiffTensor::from({3}, {1.5, -2.0, 0.7});
  CHECK(std::abs(mpjpe(a + t, b + t).item() - mpjpe(a, b).item()) < 1e-12);
  CHECK_THROWS_AS(mpjpe(a, slice(b, 0, 0, 2)), ContractError);
  CHECK_THROWS_AS(mpjpe(DiffTensor::zeros({4, 17, 4}), DiffTensor::zeros({4, 17, 4})), ContractError);
}

TEST_CASE("weighted depth error") {
  CHECK(weighted_mpjpe_depth(DiffTensor::from({1, 1}, {2.2}), DiffTensor::from({1, 1}, {2.0})).item() ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(weighted_mpjpe_depth(DiffTensor::from({1, 1}, {4.4}), DiffTensor::from({1, 1}, {4.0})).item() ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(weighted_mpjpe_depth(DiffTensor::from({1, 2}, {3.0, 1.0}), DiffTensor::from({1, 2}, {3.0, 1.0})).item() == 0.0);
  CHECK_THROWS_AS(weighted_mpjpe_depth(DiffTensor::from({1, 1}, {1.0}), DiffTensor::from({1, 1}, {0.0})), DomainError);
}

TEST_CASE("kinematic constraint") {
  SUBCASE("two-joint chain") {
    const Skeleton s = chain2();
    DiffTensor prev = DiffTensor::from({2, 3}, {0, 0, 0, 0, 1.0, 0});
    DiffTensor curr = DiffTensor::from({2, 3}, {0, 0, 0, 0, 1.1, 0});
    CHECK(kinematic_constraint(prev, curr, s).item() == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(kinematic_constraint(prev, prev, s).item() == 0.0);
    CHECK(kinematic_sequence(concat({reshape(prev, {1, 2, 3}), reshape(curr, {1, 2, 3})}, 0), s).item() ==
          doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("matches neighbor enumeration and ignores rigid motion") {
    const Skeleton skel = default_skeleton();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      DiffTensor clip = random_clip(rng, 2, 0.05, false);
      DiffTensor prev = slice(clip, 0, 0, 1), curr = slice(clip, 0, 1, 2);
      prev = reshape(prev, {17, 3});
      curr = reshape(curr, {17, 3});
      CHECK(std::abs(kinematic_constraint(prev, curr, skel).item() - loop_kinematic(prev.values(), curr.values(), skel)) < 1e-12);

      Eigen::Map<const Pose3D> p(prev.values().data(), 17, 3);
      const Eigen::Matrix3d r1 = Eigen::AngleAxisd(0.3 * trial, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
      const Eigen::Matrix3d r2 = Eigen::AngleAxisd(-0.7, Eigen::Vector3d(0, 1, 1).normalized()).toRotationMatrix();
      const Pose3D moved1 = (p * r1.transpose()).rowwise() + Eigen::RowVector3d(1, -2, 3);
      const Pose3D moved2 = (p * r2.transpose()).rowwise() + Eigen::RowVector3d(-4, 0.5, 2);
      CHECK(kinematic_constraint(pose_tensor(moved1), pose_tensor(moved2), skel).item() < 1e-12);
    }
  }
  SUBCASE("sequence uses T-1 pairs") {
    const Skeleton skel = default_skeleton();
    std::mt19937_64 rng(4);
    DiffTensor clip = random_clip(rng, 5, 0.05, false);
    double sum = 0.0;
    for (std::size_t t = 1; t < 5; ++t) {
      sum += kinematic_constraint(reshape(slice(clip, 0, t - 1, t), {17, 3}), reshape(slice(clip, 0, t, t + 1), {17, 3}), skel).item();
    }
    CHECK(std::abs(kinematic_sequence(clip, skel).item() - sum / 4.0) < 1e-12);
    CHECK(kinematic_sequence(slice(clip, 0, 0, 1), skel).item() == 0.0);
  }
  CHECK_THROWS_AS(kinematic_constraint(DiffTensor::zeros({3, 3}), DiffTensor::zeros({3, 3}), default_skeleton()), ContractError);
}

TEST_CASE("reprojection error") {
  const Skeleton skel = default_skeleton();
  std::mt19937_64 rng(6);
  const auto cam = sample_camera(11);
  DiffTensor clip = random_clip(rng, 3, 0.05, true);
  const DiffTensor input = project_sequence(clip.detach(), cam);
  CHECK(reprojection_mpjpe(clip, cam, input).item() == 0.0);

  SUBCASE("pinhole offset of five pixels") {
    CameraIntrinsics pin;
    pin.focal = {1000, 1000};
    pin.center = {500, 500};
    Pose3D p(1, 3);
    p << 0.1, 0.2, 2.0;
    // Move the joint so its image shifts by (3, 4) px at unchanged depth.
    Pose3D q = p;
    q(0, 0) += 3.0 * 2.0 / 1000.0;
    q(0, 1) += 4.0 * 2.0 / 1000.0;
    const DiffTensor target = project_sequence(reshape(pose_tensor(p), {1, 1, 3}), pin);
    CHECK(reprojection_mpjpe(reshape(pose_tensor(q), {1, 1, 3}), pin, target).item() == doctest::Approx(5.0).epsilon(1e-9));
  }

  SUBCASE("depth perturbation moves the loss") {
    DiffTensor moved = clip.detach();
    moved.mutable_values()[5 * 3 + 2] += 0.2;
    moved.set_requires_grad(true);
    Tape tape;
    const DiffTensor loss = reprojection_mpjpe(moved, cam, input);
    CHECK(loss.item() > 0.0);
    tape.backward(loss);
    CHECK(moved.grad()[5 * 3 + 2] != 0.0);
  }
}

TEST_CASE("loss gradients match central differences") {
  const Skeleton skel = default_skeleton();
  std::mt19937_64 rng(17);
  const auto cam = sample_camera(5);
  int points = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    DiffTensor pred = random_clip(rng, 3, 0.05, true);
    const DiffTensor gt = random_clip(rng, 3, 0.05, false);
    const DiffTensor input = project_sequence(gt, cam);
    const DiffTensor gt_z = slice(gt, -1, 2, 3);
    const std::vector<std::function<DiffTensor()>> losses{
        [&] { return mpjpe(pred, gt); },
        [&] { return weighted_mpjpe_depth(slice(pred, -1, 2, 3), gt_z); },
        [&] { return kinematic_sequence(pred, skel); },
        [&] { return reprojection_mpjpe(pred, cam, input); },
    };
    for (const auto& loss : losses) {
      pred.zero_grad();
      {
        Tape tape;
        tape.backward(loss());
      }
      const Eigen::VectorXd numeric = central_difference([&] { return loss().item(); }, pred);
      worst = std::max(worst, relative_error(pred.grad(), numeric));
      ++points;
    }
  }
  CHECK(points == 100);
  CHECK(worst < 1e-6);
}

TEST_CASE("total loss") {
  const Skeleton skel = default_skeleton();
  std::mt19937_64 rng(9);
  const auto cam = sample_camera(2);
  const DiffTensor gt = random_clip(rng, 4, 0.05, false);
  const DiffTensor input = project_sequence(gt, cam);

  const LossBreakdown zero = total_loss(gt, gt, cam, input, skel, LossWeights{});
  CHECK(zero.pose3d_mpjpe == 0.0);
  CHECK(zero.depth_wmpjpe == 0.0);
  CHECK(zero.reproj_mpjpe == 0.0);
  // gt bone lengths vary with the jitter, so only an exactly rigid clip gives 0 here.
  const DiffTensor rigid = concat({slice(gt, 0, 0, 1), slice(gt, 0, 0, 1)}, 0);
  CHECK(total_loss(rigid, rigid, cam, project_sequence(rigid, cam), skel, LossWeights{}).total == 0.0);

  const DiffTensor pred = random_clip(rng, 4, 0.05, false);
  const LossWeights w{0.7, 1.3, 0.05, 0.002};
  const LossBreakdown b = total_loss(pred, gt, cam, input, skel, w);
  const double pose = loop_mpjpe(slice(pred, -1, 0, 2).values(), slice(gt, -1, 0, 2).values(), 2);
  double depth = 0.0;
  for (Eigen::Index i = 2; i < pred.values().size(); i += 3) depth += std::abs(pred.values()[i] - gt.values()[i]) / gt.values()[i];
  depth /= 4 * 17;
  double kc = 0.0;
  for (Eigen::Index t = 1; t < 4; ++t) {
    kc += loop_kinematic(pred.values().segment((t - 1) * 51, 51), pred.values().segment(t * 51, 51), skel);
  }
  kc /= 3.0;
  double reproj = 0.0;
  for (Eigen::Index i = 0; i < 4 * 17; ++i) {
    const auto px = spg::testing::scalar_project(pred.values()[3 * i], pred.values()[3 * i + 1], pred.values()[3 * i + 2], cam);
    reproj += std::hypot(px[0] - input.values()[2 * i], px[1] - input.values()[2 * i + 1]);
  }
  reproj /= 4 * 17;
  CHECK(std::abs(b.pose3d_mpjpe - pose) < 1e-12);
  CHECK(std::abs(b.depth_wmpjpe - depth) < 1e-12);
  CHECK(std::abs(b.kinematic - kc) < 1e-12);
  CHECK(std::abs(b.reproj_mpjpe - reproj) < 1e-9);
  CHECK(std::abs(b.total - (0.7 * pose + 1.3 * depth + 0.05 * kc + 0.002 * reproj)) < 1e-12);

  const LossBreakdown only_pose = total_loss(pred, gt, cam, input, skel, LossWeights{1, 0, 0, 0});
  CHECK(only_pose.total == only_pose.pose3d_mpjpe);

  SUBCASE("batched cameras match per-sample losses") {
    const auto cam2 = sample_camera(3);
    const DiffTensor input2 = project_sequence(pred, cam2);
    std::vector<CameraIntrinsics> cams{cam, cam2};
    const LossBreakdown batched = total_loss(concat({reshape(pred, {1, 4, 17, 3}), reshape(gt, {1, 4, 17, 3})}, 0),
                                             concat({reshape(gt, {1, 4, 17, 3}), reshape(pred, {1, 4, 17, 3})}, 0), cams,
                                             concat({reshape(input, {1, 4, 17, 2}), reshape(input2, {1, 4, 17, 2})}, 0), skel, w);
    const LossBreakdown first = total_loss(pred, gt, cam, input, skel, w);
    const LossBreakdown second = total_loss(gt, pred, cam2, input2, skel, w);
    CHECK(std::abs(batched.reproj_mpjpe - 0.5 * (first.reproj_mpjpe + second.reproj_mpjpe)) < 1e-9);
    CHECK(std::abs(batched.kinematic - 0.5 * (first.kinematic + second.kinematic)) < 1e-12);
  }

  SUBCASE("negative predicted depth still yields a finite loss") {
    DiffTensor bad = gt.detach();
    bad.mutable_values()[2] = -1.0;
    CHECK(std::isfinite(total_loss(bad, gt, cam, input, skel, w).total));
  }

  CHECK_THROWS_AS(LossWeights({0, 0, 0, 0}).validate(), ConfigError);
  CHECK_THROWS_AS(LossWeights({-1, 0, 0, 1}).validate(), ConfigError);
  CHECK(LossWeights::from_json({{"kinematic", 0.5}}).kinematic == 0.5);
  CHECK_THROWS_AS(LossWeights::from_json({{"bone", 0.5}}), ConfigError);
}
