#include "doctest.h"

#include "spg/camera.hpp"
#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"
#include "support/finite_diff.hpp"
#include "support/scalar_projector.hpp"

#include <random>

using namespace spg;
using spg::testing::scalar_project;

namespace {

CameraIntrinsics plain_camera() {
  CameraIntrinsics c;
  c.focal = {1000, 1000};
  c.center = {500, 400};
  return c;
}

Pose2D project_one(double x, double y, double z, const CameraIntrinsics& cam) {
  Pose3D p(1, 3);
  p << x, y, z;
  return project_pose(p, cam);
}

}  // namespace

TEST_CASE("projection examples") {
  const auto cam = plain_camera();
  SUBCASE("zero distortion is the pinhole map") {
    const Pose2D px = project_one(0.2, -0.1, 2.0, cam);
    CHECK(px(0, 0) == doctest::Approx(600.0).epsilon(1e-15));
    CHECK(px(0, 1) == doctest::Approx(350.0).epsilon(1e-15));
  }
  SUBCASE("clamp saturates") {
    const Pose2D px = project_one(4.0, 0.0, 1.0, cam);
    CHECK(px(0, 0) == 1500.0);
    CHECK(px(0, 1) == 400.0);
  }
  SUBCASE("hand-derived radial example") {
    auto c = cam;
    c.radial = {0.1, 0.0, 0.0};
    const Pose2D px = project_one(0.1, -0.05, 1.0, c);
    const auto ref = scalar_project(0.1, -0.05, 1.0, c);
    CHECK(px(0, 0) == doctest::Approx(600.125).epsilon(1e-14));
    CHECK(px(0, 1) == doctest::Approx(349.9375).epsilon(1e-14));
    CHECK(px(0, 0) == ref[0]);
    CHECK(px(0, 1) == ref[1]);
  }
}

TEST_CASE("projection errors") {
  const auto cam = plain_camera();
  CHECK_THROWS_WITH_AS(project_one(0.0, 0.0, 0.0, cam), doctest::Contains("joint 0"), DomainError);
  CHECK_THROWS_AS(project_one(0.0, 0.0, -1.0, cam), DomainError);
  CHECK_THROWS_AS(project_one(std::nan(""), 0.0, 1.0, cam), ContractError);
  Pose3D two = Pose3D::Ones(2, 3);
  two(1, 2) = -2.0;
  CHECK_THROWS_WITH_AS(project_pose(two, cam), doctest::Contains("joint 1"), DomainError);
}

TEST_CASE("project_sequence equals the per-frame loop") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5), depth(0.5, 6.0);
  const auto cam = sample_camera(77);
  PoseSequence3D seq;
  for (int t = 0; t < 50; ++t) {
    Pose3D p(17, 3);
    for (int j = 0; j < 17; ++j) p.row(j) << u(rng), u(rng), depth(rng);
    seq.push_back(p);
  }
  const auto batched = project_sequence(seq, cam);
  double max_dev = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    max_dev = std::max(max_dev, (batched[t] - project_pose(seq[t], cam)).cwiseAbs().maxCoeff());
  }
  CHECK(max_dev == 0.0);
  CHECK(project_sequence(PoseSequence3D{seq[0]}, cam)[0] == project_pose(seq[0], cam));
}

TEST_CASE("depth scale invariance") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0), depth(1.0, 5.0), s(0.3, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cam = sample_camera(static_cast<std::uint64_t>(trial));
    const double x = u(rng), y = u(rng), z = depth(rng);
    const Pose2D base = project_one(x, y, z, cam);
    CHECK(project_one(2 * x, 2 * y, 2 * z, cam) == base);
    CHECK(project_one(0.25 * x, 0.25 * y, 0.25 * z, cam) == base);
    const double k = s(rng);
    CHECK((project_one(k * x, k * y, k * z, cam) - base).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("zero-distortion consistency and depth limit") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  auto cam = sample_camera(3);
  cam.radial.setZero();
  cam.tangential.setZero();
  for (int trial = 0; trial < 200; ++trial) {
    const double z = 1.0 + trial * 0.01;
    const double x = u(rng) * z, y = u(rng) * z;
    const Pose2D px = project_one(x, y, z, cam);
    CHECK(std::abs(px(0, 0) - (cam.focal.x() * x / z + cam.center.x())) < 1e-12);
    CHECK(std::abs(px(0, 1) - (cam.focal.y() * y / z + cam.center.y())) < 1e-12);
  }
  double previous = 1e300;
  for (double z = 1.0; z < 1e7; z *= 10.0) {
    const double dist = (project_one(0.5, -0.3, z, cam).row(0).transpose() - cam.center).norm();
    CHECK(dist < previous);
    previous = dist;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("projection gradients match central differences inside the clamp") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> n(-0.9, 0.9), depth(1.5, 6.0);
  for (int point = 0; point < 100; ++point) {
    const auto cam = sample_camera(rng());
    const int m = 4;
    Eigen::VectorXd xy(m * 2), z(m);
    for (int j = 0; j < m; ++j) {
      z[j] = depth(rng);
      xy[2 * j] = n(rng) * z[j];
      xy[2 * j + 1] = n(rng) * z[j];
    }
    DiffTensor txy({static_cast<std::size_t>(m), 2}, xy, true);
    DiffTensor tz({static_cast<std::size_t>(m), 1}, z, true);
    DiffTensor w = spg::testing::random_tensor({static_cast<std::size_t>(m), 2}, rng, -1, 1, false);
    auto f = [&] { return sum_all(project(txy, tz, cam) * w); };
    {
      Tape tape;
      tape.backward(f());
    }
    auto scalar = [&] { return f().item(); };
    CHECK(spg::testing::relative_error(txy.grad(), spg::testing::central_difference(scalar, txy)) < 1e-6);
    CHECK(spg::testing::relative_error(tz.grad(), spg::testing::central_difference(scalar, tz)) < 1e-6);
  }
}

TEST_CASE("batched projection uses one camera per leading index") {
  const auto c0 = sample_camera(1), c1 = sample_camera(2);
  Pose3D p(2, 3);
  p << 0.1, 0.2, 3.0, -0.4, 0.3, 4.0;
  Eigen::VectorXd xy(8), z(4);
  for (int b = 0; b < 2; ++b)
    for (int j = 0; j < 2; ++j) {
      xy.segment(b * 4 + j * 2, 2) = p.row(j).head<2>().transpose();
      z[b * 2 + j] = p(j, 2);
    }
  std::vector<CameraIntrinsics> cams{c0, c1};
  const DiffTensor out = project(DiffTensor({2, 2, 2}, xy), DiffTensor({2, 2, 1}, z), cams);
  const Pose2D a = project_pose(p, c0), b = project_pose(p, c1);
  CHECK(out.at({0, 1, 0}) == a(1, 0));
  CHECK(out.at({1, 1, 1}) == b(1, 1));
}

TEST_CASE("mirrored camera images the mirrored scene as the mirrored picture") {
  const auto cam = sample_camera(21);
  Pose3D p(3, 3);
  p << 0.3, -0.2, 3.0, -0.5, 0.4, 4.0, 0.05, 0.1, 2.5;
  Pose3D q = p;
  q.col(0) *= -1.0;
  const Pose2D a = project_pose(p, cam), b = project_pose(q, cam.mirrored());
  for (int j = 0; j < 3; ++j) {
    CHECK(b(j, 0) == doctest::Approx(cam.width - a(j, 0)).epsilon(1e-12));
    CHECK(b(j, 1) == doctest::Approx(a(j, 1)).epsilon(1e-12));
  }
}

TEST_CASE("camera sampling") {
  CHECK(sample_camera(42) == sample_camera(42));
  CHECK_FALSE(sample_camera(42) == sample_camera(43));
  const auto ideal = sample_camera(5, "ideal");
  CHECK(ideal.radial == Eigen::Vector3d::Zero());
  CHECK(ideal.tangential == Eigen::Vector2d::Zero());
  CHECK(ideal.focal == Eigen::Vector2d(1000, 1000));
  CHECK(ideal.center == Eigen::Vector2d(500, 500));
  CHECK_THROWS_AS(sample_camera(1, "fisheye"), ConfigError);
  bool all_within = true;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto c = sample_camera(seed);
    all_within = all_within && c.radial.cwiseAbs().maxCoeff() <= 0.3 && c.tangential.cwiseAbs().maxCoeff() <= 0.01 &&
                 c.focal.minCoeff() >= 900 && c.focal.maxCoeff() <= 1200 &&
                 (c.center - Eigen::Vector2d(500, 500)).cwiseAbs().maxCoeff() <= 20 && c.width == 1000 &&
                 c.height == 1000;
  }
  CHECK(all_within);
}

TEST_CASE("camera json round trip and schema") {
  const auto cam = sample_camera(9);
  CHECK(CameraIntrinsics::from_json(cam.to_json()) == cam);
  auto j = cam.to_json();
  j["extra"] = 1;
  CHECK_THROWS_AS(CameraIntrinsics::from_json(j), ConfigError);
  auto k = cam.to_json();
  k["f_c"] = {1000.0};
  CHECK_THROWS_AS(CameraIntrinsics::from_json(k), ConfigError);
}

TEST_CASE("screen normalization") {
  Pose2D p(2, 2);
  p << 500, 500, 1000, 0;
  const Pose2D n = normalize_screen(p, 1000, 1000);
  CHECK(n(0, 0) == 0.0);
  CHECK(n(1, 0) == 1.0);
  CHECK(n(1, 1) == -1.0);
}
