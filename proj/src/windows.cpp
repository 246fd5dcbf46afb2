#include "spg/windows.hpp"

#include "spg/core/errors.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace spg {

Pose3D mirror_pose(const Pose3D& pose, const Skeleton& skel) { return flip_horizontal(pose, skel, 0.0); }

Pose2D mirror_pixels(const Pose2D& pixels, const Skeleton& skel, int width) {
  return flip_horizontal(pixels, skel, 0.5 * width);
}

WindowSet::WindowSet(std::vector<const MotionClip*> clips, const Skeleton& skel, WindowOptions options)
    : skel_(&skel), options_(options) {
  if (options.window < 1 || options.window % 2 == 0) throw ConfigError("window length must be odd and positive");
  if (options.stride < 1) throw ConfigError("window stride must be positive");
  const auto m = static_cast<Eigen::Index>(skel.num_joints());
  for (const MotionClip* clip : clips) {
    if (clip->frames() == 0) {
      ++skipped_;
      continue;
    }
    const std::size_t c = clips_.size();
    clips_.push_back(clip);
    Eigen::VectorXd plain(static_cast<Eigen::Index>(clip->frames()) * m * 2);
    Eigen::VectorXd flipped(plain.size());
    for (std::size_t t = 0; t < clip->frames(); ++t) {
      const Pose2D& px = clip->poses2d[t];
      check_joint_count("WindowSet", px.rows(), skel);
      const Pose2D a = normalize_screen(px, clip->camera.width, clip->camera.height);
      const Pose2D b = normalize_screen(mirror_pixels(px, skel, clip->camera.width), clip->camera.width, clip->camera.height);
      plain.segment(static_cast<Eigen::Index>(t) * m * 2, m * 2) = Eigen::Map<const Eigen::VectorXd>(a.data(), m * 2);
      flipped.segment(static_cast<Eigen::Index>(t) * m * 2, m * 2) = Eigen::Map<const Eigen::VectorXd>(b.data(), m * 2);
    }
    normalized_.push_back(std::move(plain));
    normalized_flipped_.push_back(std::move(flipped));

    const std::size_t t_count = clip->frames();
    for (std::size_t t = 0; t < t_count; t += static_cast<std::size_t>(options.stride)) {
      const std::size_t neighbor = t > 0 ? t - 1 : (t_count > 1 ? 1 : 0);
      refs_.push_back({c, t, neighbor, false});
      if (options.augment_flip) refs_.push_back({c, t, neighbor, true});
    }
  }
}

std::vector<std::size_t> WindowSet::shuffled(std::uint64_t seed) const {
  std::vector<std::size_t> order(refs_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit bounded draw so the order does not depend on
  // the standard library's distribution implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

DiffTensor WindowSet::window(std::size_t clip, std::size_t frame, bool flipped) const {
  const auto m = static_cast<std::size_t>(skel_->num_joints());
  const auto j = static_cast<std::size_t>(options_.window);
  const long half = options_.window / 2;
  const long last = static_cast<long>(clips_.at(clip)->frames()) - 1;
  const Eigen::VectorXd& src = flipped ? normalized_flipped_[clip] : normalized_[clip];
  Eigen::VectorXd out(static_cast<Eigen::Index>(j * m * 2));
  for (std::size_t k = 0; k < j; ++k) {
    const long t = std::clamp(static_cast<long>(frame) - half + static_cast<long>(k), 0L, last);
    out.segment(static_cast<Eigen::Index>(k * m * 2), static_cast<Eigen::Index>(m * 2)) =
        src.segment(static_cast<Eigen::Index>(t) * static_cast<Eigen::Index>(m * 2), static_cast<Eigen::Index>(m * 2));
  }
  return DiffTensor({j, m, 2}, std::move(out));
}

Pose3D WindowSet::target(std::size_t clip, std::size_t frame, bool flipped) const {
  const Pose3D& p = clips_.at(clip)->poses3d.at(frame);
  return flipped ? mirror_pose(p, *skel_) : p;
}

WindowBatch WindowSet::assemble(std::span<const std::size_t> indices) const {
  const auto m = static_cast<std::size_t>(skel_->num_joints());
  const auto j = static_cast<std::size_t>(options_.window);
  const std::size_t b = indices.size();
  const std::size_t window_size = j * m * 2;
  Eigen::VectorXd inputs(static_cast<Eigen::Index>(b * 2 * window_size));
  Eigen::VectorXd targets(static_cast<Eigen::Index>(b * 2 * m * 3));
  Eigen::VectorXd pixels(static_cast<Eigen::Index>(b * 2 * m * 2));
  WindowBatch batch;
  batch.cameras.reserve(b);
  for (std::size_t s = 0; s < b; ++s) {
    const WindowRef& ref = refs_.at(indices[s]);
    const MotionClip& clip = *clips_[ref.clip];
    const std::size_t frames[2] = {std::min(ref.frame, ref.neighbor), std::max(ref.frame, ref.neighbor)};
    for (std::size_t p = 0; p < 2; ++p) {
      const std::size_t row = s * 2 + p;
      inputs.segment(static_cast<Eigen::Index>(row * window_size), static_cast<Eigen::Index>(window_size)) =
          window(ref.clip, frames[p], ref.flipped).values();
      const Pose3D tgt = target(ref.clip, frames[p], ref.flipped);
      targets.segment(static_cast<Eigen::Index>(row * m * 3), static_cast<Eigen::Index>(m * 3)) =
          Eigen::Map<const Eigen::VectorXd>(tgt.data(), static_cast<Eigen::Index>(m * 3));
      const Pose2D px = ref.flipped ? mirror_pixels(clip.poses2d[frames[p]], *skel_, clip.camera.width) : clip.poses2d[frames[p]];
      pixels.segment(static_cast<Eigen::Index>(row * m * 2), static_cast<Eigen::Index>(m * 2)) =
          Eigen::Map<const Eigen::VectorXd>(px.data(), static_cast<Eigen::Index>(m * 2));
    }
    batch.cameras.push_back(ref.flipped ? clip.camera.mirrored() : clip.camera);
  }
  batch.inputs = DiffTensor({b * 2, j, m, 2}, std::move(inputs));
  batch.targets = DiffTensor({b, 2, m, 3}, std::move(targets));
  batch.pixels = DiffTensor({b, 2, m, 2}, std::move(pixels));
  return batch;
}

}  // namespace spg
