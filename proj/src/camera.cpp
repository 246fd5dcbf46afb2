#include "spg/camera.hpp"

#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"

#include <cmath>
#include <random>
#include <string>

namespace spg {

void CameraIntrinsics::validate() const {
  if (!(focal.x() > 0.0 && focal.y() > 0.0)) throw ContractError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ContractError("camera: image size must be positive");
  if (!focal.allFinite() || !center.allFinite() || !radial.allFinite() || !tangential.allFinite()) {
    throw ContractError("camera: non-finite intrinsics");
  }
}

CameraIntrinsics CameraIntrinsics::mirrored() const {
  CameraIntrinsics m = *this;
  m.center.x() = static_cast<double>(width) - center.x();
  m.tangential.x() = -tangential.x();
  return m;
}

nlohmann::json CameraIntrinsics::to_json() const {
  return {{"f_c", {focal.x(), focal.y()}},
          {"c_e", {center.x(), center.y()}},
          {"d_r", {radial.x(), radial.y(), radial.z()}},
          {"d_t", {tangential.x(), tangential.y()}},
          {"image_size", {width, height}}};
}

CameraIntrinsics CameraIntrinsics::from_json(const nlohmann::json& j) {
  static const char* kKeys[] = {"f_c", "c_e", "d_r", "d_t", "image_size"};
  try {
    for (const auto& [key, _] : j.items()) {
      if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
        throw ConfigError("camera json: unknown key '" + key + "'");
      }
    }
    auto vec = [&](const char* key, std::size_t n) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != n) throw ConfigError(std::string("camera json: '") + key + "' needs " + std::to_string(n) + " values");
      return v;
    };
    CameraIntrinsics c;
    const auto f = vec("f_c", 2), ce = vec("c_e", 2), dr = vec("d_r", 3), dt = vec("d_t", 2);
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw ConfigError("camera json: 'image_size' needs 2 values");
    c.focal = {f[0], f[1]};
    c.center = {ce[0], ce[1]};
    c.radial = {dr[0], dr[1], dr[2]};
    c.tangential = {dt[0], dt[1]};
    c.width = size[0];
    c.height = size[1];
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("camera json: ") + e.what());
  }
}

namespace {

void check_projection_inputs(const DiffTensor& xy, const DiffTensor& z) {
  if (xy.rank() < 2 || xy.shape().back() != 2 || z.rank() != xy.rank() || z.shape().back() != 1 ||
      !std::equal(xy.shape().begin(), xy.shape().end() - 1, z.shape().begin())) {
    throw ContractError("project: expected xy [..., M, 2] and z [..., M, 1], got " + shape_string(xy.shape()) +
                        " and " + shape_string(z.shape()));
  }
  if (!xy.values().allFinite() || !z.values().allFinite()) throw ContractError("project: non-finite input");
  const std::size_t joints = xy.shape()[xy.rank() - 2];
  const auto& zv = z.values();
  for (Eigen::Index i = 0; i < zv.size(); ++i) {
    if (!(zv[i] > 0.0)) {
      throw DomainError("project: joint " + std::to_string(static_cast<std::size_t>(i) % joints) +
                        " has non-positive depth " + std::to_string(zv[i]));
    }
  }
}

struct CameraTensors {
  DiffTensor focal, center, radial, tangential;
};

// Intrinsics laid out to broadcast against [B, ..., M, k] tensors of the given rank.
CameraTensors camera_tensors(std::span<const CameraIntrinsics> cams, std::size_t rank, bool batched) {
  const std::size_t b = cams.size();
  auto shape_for = [&](std::size_t k) {
    if (!batched) return Shape{k};
    Shape s(rank, 1);
    s.front() = b;
    s.back() = k;
    return s;
  };
  auto pack = [&](std::size_t k, auto getter) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(b * k));
    for (std::size_t i = 0; i < b; ++i) v.segment(static_cast<Eigen::Index>(i * k), static_cast<Eigen::Index>(k)) = getter(cams[i]);
    return DiffTensor(shape_for(k), std::move(v));
  };
  return {pack(2, [](const CameraIntrinsics& c) { return c.focal; }),
          pack(2, [](const CameraIntrinsics& c) { return c.center; }),
          pack(3, [](const CameraIntrinsics& c) { return c.radial; }),
          pack(2, [](const CameraIntrinsics& c) { return c.tangential; })};
}

DiffTensor project_with(const DiffTensor& xy, const DiffTensor& z, const CameraTensors& cam) {
  const DiffTensor n = clamp(xy / z, -1.0, 1.0);
  const DiffTensor r = sum_axis(square(n), -1, true);
  const DiffTensor r2 = r * r;
  const DiffTensor powers = concat({r, r2, r2 * r}, -1);
  const DiffTensor radial = 1.0 + sum_axis(powers * cam.radial, -1, true);
  const DiffTensor tangential = sum_axis(n * cam.tangential, -1, true);
  const DiffTensor distorted = n * (radial + tangential) + cam.tangential * r;
  return cam.focal * distorted + cam.center;
}

}  // namespace

DiffTensor project(const DiffTensor& xy, const DiffTensor& z, const CameraIntrinsics& cam) {
  cam.validate();
  check_projection_inputs(xy, z);
  return project_with(xy, z, camera_tensors(std::span<const CameraIntrinsics>(&cam, 1), xy.rank(), false));
}

DiffTensor project(const DiffTensor& xy, const DiffTensor& z, std::span<const CameraIntrinsics> cams) {
  check_projection_inputs(xy, z);
  if (xy.rank() < 3 || xy.shape().front() != cams.size()) {
    throw ContractError("project: leading axis " + shape_string(xy.shape()) + " does not match " +
                        std::to_string(cams.size()) + " cameras");
  }
  for (const auto& c : cams) c.validate();
  return project_with(xy, z, camera_tensors(cams, xy.rank(), true));
}

DiffTensor project_sequence(const DiffTensor& poses, const CameraIntrinsics& cam) {
  if (poses.rank() != 3 || poses.shape()[2] != 3) {
    throw ContractError("project_sequence: expected [T, M, 3], got " + shape_string(poses.shape()));
  }
  return project(slice(poses, -1, 0, 2), slice(poses, -1, 2, 3), cam);
}

PoseSequence2D project_sequence(const PoseSequence3D& poses, const CameraIntrinsics& cam) {
  PoseSequence2D out;
  if (poses.empty()) return out;
  const auto m = static_cast<std::size_t>(poses.front().rows());
  Eigen::VectorXd packed(static_cast<Eigen::Index>(poses.size() * m * 3));
  for (std::size_t t = 0; t < poses.size(); ++t) {
    if (static_cast<std::size_t>(poses[t].rows()) != m) throw ContractError("project_sequence: ragged joint counts");
    packed.segment(static_cast<Eigen::Index>(t * m * 3), static_cast<Eigen::Index>(m * 3)) =
        Eigen::Map<const Eigen::VectorXd>(poses[t].data(), static_cast<Eigen::Index>(m * 3));
  }
  const DiffTensor pix = project_sequence(DiffTensor({poses.size(), m, 3}, std::move(packed)), cam);
  out.reserve(poses.size());
  for (std::size_t t = 0; t < poses.size(); ++t) {
    out.emplace_back(Eigen::Map<const Pose2D>(pix.values().data() + t * m * 2, static_cast<Eigen::Index>(m), 2));
  }
  return out;
}

Pose2D project_pose(const Pose3D& pose, const CameraIntrinsics& cam) {
  return project_sequence(PoseSequence3D{pose}, cam).front();
}

CameraIntrinsics sample_camera(std::uint64_t seed, std::string_view preset) {
  CameraIntrinsics cam;
  if (preset == "ideal") return cam;
  if (preset != "random") throw ConfigError("sample_camera: unknown preset '" + std::string(preset) + "'");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> focal(900.0, 1200.0), offset(-20.0, 20.0), radial(-0.3, 0.3),
      tangential(-0.01, 0.01);
  const double f = focal(rng);
  // Square pixels up to a small aspect jitter.
  cam.focal = {f, f * (1.0 + 0.002 * offset(rng) / 20.0)};
  cam.focal.y() = std::clamp(cam.focal.y(), 900.0, 1200.0);
  cam.center = {500.0 + offset(rng), 500.0 + offset(rng)};
  cam.radial = {radial(rng), radial(rng), radial(rng)};
  cam.tangential = {tangential(rng), tangential(rng)};
  return cam;
}

Pose2D normalize_screen(const Pose2D& pixels, int width, int height) {
  const double w = width, h = height;
  Pose2D out(pixels.rows(), 2);
  out.col(0) = (2.0 / w) * (pixels.col(0).array() - 0.5 * w);
  out.col(1) = (2.0 / w) * (pixels.col(1).array() - 0.5 * h);
  return out;
}

}  // namespace spg
