#pragma once

#include "spg/camera.hpp"
#include "spg/container.hpp"
#include "spg/skeleton.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace spg {

struct MotionClip {
  std::string action;
  double fps = 50.0;
  int subject = 0;
  CameraIntrinsics camera;
  std::vector<double> bone_lengths;  // the subject's skeleton, one per bone
  PoseSequence3D poses3d;            // camera space, meters
  PoseSequence2D poses2d;            // pixels

  std::size_t frames() const { return poses3d.size(); }
};

struct Dataset {
  Skeleton skeleton = default_skeleton();
  std::vector<MotionClip> clips;
  nlohmann::json generator;  // echo of the config that produced it, may be null

  /// Clips whose subject is (or is not) in `subjects`.
  std::vector<const MotionClip*> select(const std::vector<int>& subjects, bool include) const;
  std::size_t total_frames() const;
};

/// Motion presets understood by the generator.
const std::vector<std::string>& action_presets();

struct GeneratorConfig {
  std::vector<int> subjects{1, 5, 6, 7, 8, 9, 11};
  std::vector<int> test_subjects{9, 11};
  std::map<std::string, int> actions{{"walk", 2}, {"sit", 2}, {"reach", 2}};  // clips per subject
  int frames = 150;
  double fps = 50.0;
  std::string camera = "random";
  // Every joint of every frame must satisfy min_depth <= z <= max_depth and
  // |x/z|, |y/z| <= cone.
  double min_depth = 2.0;
  double max_depth = 6.0;
  double cone = 0.85;

  std::vector<int> train_subjects() const;
  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

/// Deterministic in (config, seed); clips are generated in parallel.
Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed);

struct ClipTolerances {
  double reprojection_px = 1e-9;
  double bone_length_m = 1e-9;
};
/// Tolerances appropriate for data that went through f32 storage.
inline constexpr ClipTolerances kStoredTolerances{1e-3, 1e-5};

/// Throws ContractError describing the first violated clip invariant.
void validate_clip(const MotionClip& clip, const Skeleton& skel, ClipTolerances tol = {});

inline constexpr double kMinDepth = 0.5;

ContainerData dataset_to_container(const Dataset& data);
/// Validates every clip with kStoredTolerances.
Dataset dataset_from_container(const ContainerData& container);

/// Returns the SHA-256 of the written file.
std::string save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Mixes a seed with a stream index (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace spg
