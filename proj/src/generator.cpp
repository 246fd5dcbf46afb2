#include "spg/core/errors.hpp"
#include "spg/dataset.hpp"
#include "spg/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace spg {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const std::vector<std::string>& action_presets() {
  static const std::vector<std::string> names{"reach", "sit", "static", "walk"};
  return names;
}

namespace {

// Euler angles (about x, y, z) of one joint: base + amplitude * bounded oscillation.
struct JointMotion {
  Eigen::Vector3d base = Eigen::Vector3d::Zero();
  Eigen::Vector3d amplitude = Eigen::Vector3d::Zero();
};

struct Preset {
  std::array<JointMotion, 17> joints;
  Eigen::Vector3d root_sway = Eigen::Vector3d::Zero();  // meters
  double yaw_sway = 0.0;                                 // radians
  bool moves = true;
};

// Joint indices of the default skeleton.
enum : int {
  kPelvis = 0, kRHip = 1, kRKnee = 2, kLHip = 4, kLKnee = 5, kSpine = 7, kThorax = 8, kNeck = 9,
  kLShoulder = 11, kLElbow = 12, kRShoulder = 14, kRElbow = 15
};

// Forward is -z in the body frame, so flexing a hip or shoulder forward is a
// negative rotation about x and bending a knee is positive.
Preset make_preset(const std::string& name) {
  Preset p;
  auto set = [&](int j, Eigen::Vector3d base, Eigen::Vector3d amp) { p.joints[static_cast<std::size_t>(j)] = {base, amp}; };
  if (name == "walk") {
    for (int hip : {kRHip, kLHip}) set(hip, {-0.1, 0, 0}, {0.5, 0.05, 0.05});
    for (int knee : {kRKnee, kLKnee}) set(knee, {0.45, 0, 0}, {0.45, 0, 0});
    for (int sh : {kRShoulder, kLShoulder}) set(sh, {0, 0, 0}, {0.4, 0.05, 0.1});
    for (int el : {kRElbow, kLElbow}) set(el, {-0.3, 0, 0}, {0.3, 0, 0});
    set(kSpine, {0.05, 0, 0}, {0.05, 0.1, 0.03});
    set(kNeck, {0, 0, 0}, {0.1, 0.2, 0.05});
    p.root_sway = {0.4, 0.03, 0.4};
    p.yaw_sway = 0.3;
  } else if (name == "sit") {
    for (int hip : {kRHip, kLHip}) set(hip, {-1.4, 0, 0}, {0.05, 0.02, 0.02});
    for (int knee : {kRKnee, kLKnee}) set(knee, {1.4, 0, 0}, {0.05, 0, 0});
    for (int sh : {kRShoulder, kLShoulder}) set(sh, {-0.2, 0, 0}, {0.3, 0.1, 0.15});
    for (int el : {kRElbow, kLElbow}) set(el, {-0.5, 0, 0}, {0.3, 0, 0});
    set(kSpine, {-0.1, 0, 0}, {0.1, 0.1, 0.05});
    set(kNeck, {0, 0, 0}, {0.2, 0.3, 0.05});
    p.root_sway = {0.05, 0.02, 0.05};
    p.yaw_sway = 0.1;
  } else if (name == "reach") {
    for (int hip : {kRHip, kLHip}) set(hip, {-0.05, 0, 0}, {0.05, 0.02, 0.02});
    for (int knee : {kRKnee, kLKnee}) set(knee, {0.1, 0, 0}, {0.08, 0, 0});
    for (int sh : {kRShoulder, kLShoulder}) set(sh, {-0.8, 0, 0}, {0.7, 0.2, 0.3});
    for (int el : {kRElbow, kLElbow}) set(el, {-0.4, 0, 0}, {0.4, 0, 0});
    set(kSpine, {-0.1, 0, 0}, {0.2, 0.2, 0.1});
    set(kThorax, {0, 0, 0}, {0.05, 0.1, 0.05});
    set(kNeck, {0, 0, 0}, {0.15, 0.3, 0.05});
    p.root_sway = {0.1, 0.02, 0.1};
    p.yaw_sway = 0.2;
  } else if (name == "static") {
    p.moves = false;
  } else {
    throw ConfigError("unknown action preset '" + name + "'");
  }
  return p;
}

// Sum of three sinusoids with weights summing to 1, so |value| <= 1.
struct Oscillator {
  std::array<double, 3> weight{}, freq{}, phase{};

  static Oscillator draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> w(0.2, 1.0), f(0.2, 2.0), ph(0.0, 2.0 * std::numbers::pi);
    Oscillator o;
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      o.weight[static_cast<std::size_t>(i)] = w(rng);
      total += o.weight[static_cast<std::size_t>(i)];
      o.freq[static_cast<std::size_t>(i)] = f(rng);
      o.phase[static_cast<std::size_t>(i)] = ph(rng);
    }
    for (auto& v : o.weight) v /= total;
    return o;
  }

  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += weight[i] * std::sin(2.0 * std::numbers::pi * freq[i] * t + phase[i]);
    return s;
  }
};

Eigen::Matrix3d euler(const Eigen::Vector3d& a) {
  return (Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

std::vector<double> subject_bone_lengths(const Skeleton& skel, std::uint64_t seed, int subject) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x5b0d1e5ULL, static_cast<std::uint64_t>(subject)));
  std::uniform_real_distribution<double> factor(0.9, 1.1);
  std::map<int, double> by_pair;
  std::vector<double> lengths = skel.rest_bone_lengths();
  const auto& children = skel.child_joints();
  for (std::size_t b = 0; b < children.size(); ++b) {
    const int c = children[b];
    const int key = std::min(c, skel.flip_map()[static_cast<std::size_t>(c)]);
    auto it = by_pair.find(key);
    if (it == by_pair.end()) it = by_pair.emplace(key, factor(rng)).first;
    lengths[b] *= it->second;
  }
  return lengths;
}

bool inside_view(const PoseSequence3D& poses, const GeneratorConfig& cfg) {
  for (const auto& p : poses) {
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      const double z = p(j, 2);
      if (z < cfg.min_depth || z > cfg.max_depth) return false;
      if (std::abs(p(j, 0) / z) > cfg.cone || std::abs(p(j, 1) / z) > cfg.cone) return false;
    }
  }
  return true;
}

MotionClip generate_clip(const GeneratorConfig& cfg, const Skeleton& base, const std::string& action, int subject,
                         std::uint64_t seed, std::size_t index) {
  const Preset preset = make_preset(action);
  MotionClip clip;
  clip.action = action;
  clip.fps = cfg.fps;
  clip.subject = subject;
  clip.camera = sample_camera(seed ^ index, cfg.camera);
  clip.bone_lengths = subject_bone_lengths(base, seed, subject);
  const Skeleton skel = base.with_bone_lengths(clip.bone_lengths);
  const int m = skel.num_joints();

  std::mt19937_64 rng(mix_seed(seed, index));
  std::uniform_real_distribution<double> unit(-1.0, 1.0), yaw(-std::numbers::pi, std::numbers::pi);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::array<Oscillator, 3>> joint_osc(static_cast<std::size_t>(m));
    std::vector<Eigen::Vector3d> jitter(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      for (auto& o : joint_osc[static_cast<std::size_t>(j)]) o = Oscillator::draw(rng);
      jitter[static_cast<std::size_t>(j)] = 0.05 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
    }
    std::array<Oscillator, 4> root_osc;
    for (auto& o : root_osc) o = Oscillator::draw(rng);

    const double lo = std::min(cfg.min_depth + 1.0, 0.5 * (cfg.min_depth + cfg.max_depth));
    const double hi = std::max(cfg.max_depth - 1.0, lo);
    const double z0 = lo + 0.5 * (unit(rng) + 1.0) * (hi - lo);
    const Eigen::Vector3d origin(0.3 * cfg.cone * z0 * unit(rng), 0.1 * cfg.cone * z0 * unit(rng), z0);
    const double heading = yaw(rng);
    const double tilt = 0.1 * unit(rng);

    PoseSequence3D poses;
    poses.reserve(static_cast<std::size_t>(cfg.frames));
    std::vector<Eigen::Matrix3d> rotations(static_cast<std::size_t>(m));
    for (int f = 0; f < cfg.frames; ++f) {
      const double t = preset.moves ? f / cfg.fps : 0.0;
      const double sway = preset.moves ? 1.0 : 0.0;
      for (int j = 0; j < m; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const JointMotion& jm = preset.joints[uj];
        Eigen::Vector3d angles = jm.base + jitter[uj];
        for (int a = 0; a < 3; ++a) angles[a] += sway * jm.amplitude[a] * joint_osc[uj][static_cast<std::size_t>(a)](t);
        rotations[uj] = euler(angles);
      }
      const double heading_t = heading + sway * preset.yaw_sway * root_osc[3](t);
      rotations[static_cast<std::size_t>(skel.root())] =
          Eigen::AngleAxisd(tilt, Eigen::Vector3d::UnitX()).toRotationMatrix() *
          Eigen::AngleAxisd(heading_t, Eigen::Vector3d::UnitY()).toRotationMatrix() * rotations[static_cast<std::size_t>(skel.root())];
      Eigen::Vector3d root = origin;
      for (int a = 0; a < 3; ++a) root[a] += sway * preset.root_sway[a] * root_osc[static_cast<std::size_t>(a)](t);
      poses.push_back(forward_kinematics(skel, root, rotations));
    }
    if (!inside_view(poses, cfg)) continue;
    clip.poses2d = project_sequence(poses, clip.camera);
    clip.poses3d = std::move(poses);
    return clip;
  }
  throw GenerationError("clip " + std::to_string(index) + " (" + action + ", subject " + std::to_string(subject) +
                        "): no motion fit the view constraints after 100 attempts");
}

}  // namespace

std::vector<int> GeneratorConfig::train_subjects() const {
  std::vector<int> out;
  for (int s : subjects) {
    if (std::find(test_subjects.begin(), test_subjects.end(), s) == test_subjects.end()) out.push_back(s);
  }
  return out;
}

void GeneratorConfig::validate() const {
  if (subjects.empty()) throw ConfigError("generator.subjects must not be empty");
  if (std::set<int>(subjects.begin(), subjects.end()).size() != subjects.size()) {
    throw ConfigError("generator.subjects has duplicates");
  }
  for (int s : test_subjects) {
    if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) {
      throw ConfigError("generator.test_subjects: " + std::to_string(s) + " is not a generated subject");
    }
  }
  if (actions.empty()) throw ConfigError("generator.actions must name at least one preset");
  for (const auto& [name, count] : actions) {
    const auto& known = action_presets();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("generator.actions: unknown preset '" + name + "'");
    }
    if (count < 1) throw ConfigError("generator.actions." + name + ": sequence count must be at least 1");
  }
  if (frames < 1) throw ConfigError("generator.frames must be at least 1");
  if (!(fps > 0.0)) throw ConfigError("generator.fps must be positive");
  if (!(min_depth > kMinDepth && max_depth > min_depth)) throw ConfigError("generator depth range is invalid");
  if (!(cone > 0.0 && cone < 1.0)) throw ConfigError("generator.cone must lie in (0, 1)");
  if (camera != "random" && camera != "ideal") throw ConfigError("generator.camera must be 'random' or 'ideal'");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"subjects", subjects},   {"test_subjects", test_subjects}, {"actions", actions},
          {"frames", frames},       {"fps", fps},                     {"camera", camera},
          {"min_depth", min_depth}, {"max_depth", max_depth},         {"cone", cone}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "subjects") c.subjects = value.get<std::vector<int>>();
      else if (key == "test_subjects") c.test_subjects = value.get<std::vector<int>>();
      else if (key == "actions") c.actions = value.get<std::map<std::string, int>>();
      else if (key == "frames") c.frames = value.get<int>();
      else if (key == "fps") c.fps = value.get<double>();
      else if (key == "camera") c.camera = value.get<std::string>();
      else if (key == "min_depth") c.min_depth = value.get<double>();
      else if (key == "max_depth") c.max_depth = value.get<double>();
      else if (key == "cone") c.cone = value.get<double>();
      else throw ConfigError("unknown key generator." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  struct Job {
    std::string action;
    int subject;
  };
  std::vector<Job> jobs;
  for (int s : config.subjects) {
    for (const auto& [action, count] : config.actions) {
      for (int k = 0; k < count; ++k) jobs.push_back({action, s});
    }
  }
  Dataset data;
  data.generator = config.to_json();
  data.generator["seed"] = seed;
  data.clips.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    data.clips[i] = generate_clip(config, data.skeleton, jobs[i].action, jobs[i].subject, seed, i);
  });
  return data;
}

}  // namespace spg
