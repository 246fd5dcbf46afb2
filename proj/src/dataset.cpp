#include "spg/core/errors.hpp"
#include "spg/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace spg {

std::vector<const MotionClip*> Dataset::select(const std::vector<int>& subjects, bool include) const {
  std::vector<const MotionClip*> out;
  for (const auto& c : clips) {
    const bool listed = std::find(subjects.begin(), subjects.end(), c.subject) != subjects.end();
    if (listed == include) out.push_back(&c);
  }
  return out;
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& c : clips) n += c.frames();
  return n;
}

void validate_clip(const MotionClip& clip, const Skeleton& skel, ClipTolerances tol) {
  const std::string where = "clip (" + clip.action + ", subject " + std::to_string(clip.subject) + ")";
  if (clip.poses3d.empty()) throw ContractError(where + ": no frames");
  if (clip.poses2d.size() != clip.poses3d.size()) throw ContractError(where + ": 2D and 3D frame counts differ");
  if (!(clip.fps > 0.0)) throw ContractError(where + ": fps must be positive");
  if (static_cast<int>(clip.bone_lengths.size()) != skel.num_bones()) throw ContractError(where + ": wrong bone count");
  clip.camera.validate();

  const Eigen::VectorXd first = bone_lengths(clip.poses3d.front(), skel);
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    const Pose3D& p = clip.poses3d[t];
    check_joint_count("validate_clip", p.rows(), skel);
    if (clip.poses2d[t].rows() != p.rows()) throw ContractError(where + ": 2D joint count differs");
    if (!p.allFinite() || !clip.poses2d[t].allFinite()) throw ContractError(where + ": non-finite values");
    if (p.col(2).minCoeff() <= kMinDepth) {
      throw ContractError(where + ": frame " + std::to_string(t) + " has a joint closer than " + std::to_string(kMinDepth) + " m");
    }
    const double drift = (bone_lengths(p, skel) - first).cwiseAbs().maxCoeff();
    if (drift > tol.bone_length_m) {
      throw ContractError(where + ": bone lengths at frame " + std::to_string(t) + " drift by " + std::to_string(drift) + " m");
    }
    const double reproj = (project_pose(p, clip.camera) - clip.poses2d[t]).cwiseAbs().maxCoeff();
    if (reproj > tol.reprojection_px) {
      throw ContractError(where + ": 2D frame " + std::to_string(t) + " is off the projection by " + std::to_string(reproj) + " px");
    }
  }
}

namespace {

template <typename Pose>
std::vector<float> flatten(const std::vector<Pose>& seq) {
  std::vector<float> out;
  for (const auto& p : seq) {
    for (Eigen::Index i = 0; i < p.size(); ++i) out.push_back(static_cast<float>(p.data()[i]));
  }
  return out;
}

template <typename Pose>
std::vector<Pose> unflatten(const TensorRecord& t, std::size_t dims) {
  if (t.shape.size() != 3 || t.shape[2] != dims) {
    throw FormatError("tensor '" + t.name + "' has shape " + shape_string(t.shape) + ", expected [T, M, " + std::to_string(dims) + "]", 0);
  }
  const auto m = static_cast<Eigen::Index>(t.shape[1]);
  std::vector<Pose> out;
  for (std::size_t f = 0; f < t.shape[0]; ++f) {
    Pose p(m, static_cast<Eigen::Index>(dims));
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = t.data[f * static_cast<std::size_t>(p.size()) + static_cast<std::size_t>(i)];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

ContainerData dataset_to_container(const Dataset& data) {
  ContainerData c;
  c.metadata["kind"] = "dataset";
  c.metadata["skeleton"] = data.skeleton.to_json();
  c.metadata["generator"] = data.generator;
  nlohmann::json clips = nlohmann::json::array();
  const auto m = static_cast<std::size_t>(data.skeleton.num_joints());
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const MotionClip& clip = data.clips[i];
    clips.push_back({{"action", clip.action},
                     {"fps", clip.fps},
                     {"subject", clip.subject},
                     {"frames", clip.frames()},
                     {"camera", clip.camera.to_json()},
                     {"bone_lengths", clip.bone_lengths}});
    const std::string prefix = "clips/" + std::to_string(i) + "/";
    c.add(prefix + "poses3d", {clip.frames(), m, 3}, flatten(clip.poses3d));
    c.add(prefix + "poses2d", {clip.frames(), m, 2}, flatten(clip.poses2d));
  }
  c.metadata["clips"] = clips;
  return c;
}

Dataset dataset_from_container(const ContainerData& container) {
  const auto& meta = container.metadata;
  if (meta.value("kind", "") != "dataset") throw FormatError("container does not hold a dataset", 0);
  Dataset data;
  try {
    data.skeleton = Skeleton::from_json(meta.at("skeleton"));
    data.generator = meta.value("generator", nlohmann::json());
    const auto& clips = meta.at("clips");
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto& entry = clips[i];
      MotionClip clip;
      clip.action = entry.at("action").get<std::string>();
      clip.fps = entry.at("fps").get<double>();
      clip.subject = entry.at("subject").get<int>();
      clip.camera = CameraIntrinsics::from_json(entry.at("camera"));
      clip.bone_lengths = entry.at("bone_lengths").get<std::vector<double>>();
      const std::string prefix = "clips/" + std::to_string(i) + "/";
      clip.poses3d = unflatten<Pose3D>(container.at(prefix + "poses3d"), 3);
      clip.poses2d = unflatten<Pose2D>(container.at(prefix + "poses2d"), 2);
      if (clip.frames() != entry.at("frames").get<std::size_t>()) throw FormatError(prefix + ": frame count disagrees with header", 0);
      data.clips.push_back(std::move(clip));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what(), 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what(), 0);
  }
  for (const auto& clip : data.clips) {
    try {
      validate_clip(clip, data.skeleton, kStoredTolerances);
    } catch (const ContractError& e) {
      throw FormatError(e.what(), 0);
    }
  }
  return data;
}

std::string save_dataset(const std::filesystem::path& path, const Dataset& data) {
  const auto bytes = encode_container(dataset_to_container(data));
  write_file_bytes(path, bytes);
  return sha256_hex(bytes);
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_container(read_container(path)); }

}  // namespace spg
