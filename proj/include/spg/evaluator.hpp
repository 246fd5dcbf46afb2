#pragma once

#include "spg/core/errors.hpp"
#include "spg/dataset.hpp"
#include "spg/encoder.hpp"
#include "spg/skeleton.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "json.hpp"

#include <string>
#include <vector>

namespace spg {

/// x -> scale * rotation * x + translation, applied to each joint row.
template <typename Scalar>
struct SimilarityTransform {
  Scalar scale = Scalar(1);
  Eigen::Matrix<Scalar, 3, 3> rotation = Eigen::Matrix<Scalar, 3, 3>::Identity();
  Eigen::Matrix<Scalar, 3, 1> translation = Eigen::Matrix<Scalar, 3, 1>::Zero();

  template <typename Derived>
  Pose3<Scalar> apply(const Eigen::MatrixBase<Derived>& pose) const {
    return ((scale * pose * rotation.transpose()).rowwise() + translation.transpose()).eval();
  }
};

/// Mean joint distance between two poses, in the input unit.
template <typename DA, typename DB>
typename DA::Scalar pose_error(const Eigen::MatrixBase<DA>& pred, const Eigen::MatrixBase<DB>& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw ContractError("pose_error: shape mismatch");
  return (pred - gt).rowwise().norm().mean();
}

/// Pose translated so the root joint sits at the origin.
template <typename Derived>
Pose3<typename Derived::Scalar> root_relative(const Eigen::MatrixBase<Derived>& pose, int root = 0) {
  return (pose.rowwise() - pose.row(root)).eval();
}

/// Similarity transform minimizing sum ||s R pred_i + t - gt_i||^2 over rotations
/// with det +1 (Umeyama's closed form). Throws DomainError when pred has fewer
/// than 3 joints or is collinear, where the rotation is not determined.
template <typename DA, typename DB>
std::pair<SimilarityTransform<typename DA::Scalar>, Pose3<typename DA::Scalar>> procrustes_align(
    const Eigen::MatrixBase<DA>& pred, const Eigen::MatrixBase<DB>& gt) {
  using Scalar = typename DA::Scalar;
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3) throw ContractError("procrustes_align: shape mismatch");
  if (pred.rows() < 3) throw DomainError("procrustes_align: needs at least 3 joints");
  const Pose3<Scalar> centered = pred.rowwise() - pred.colwise().mean();
  const auto sv = Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, 3>>(centered).singularValues();
  if (!(sv[1] > Scalar(1e-12) * std::max(sv[0], Scalar(1e-300)))) {
    throw DomainError("procrustes_align: degenerate (collinear or coincident) prediction");
  }
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> src = pred.transpose();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> dst = gt.transpose();
  const Eigen::Matrix<Scalar, 4, 4> t = Eigen::umeyama(src, dst, true);
  SimilarityTransform<Scalar> s;
  const Eigen::Matrix<Scalar, 3, 3> sr = t.template topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = t.template topRightCorner<3, 1>();
  return {s, s.apply(pred)};
}

/// Per-frame Protocol 1 error in millimeters.
std::vector<double> frame_mpjpe_mm(const PoseSequence3D& pred, const PoseSequence3D& gt, bool root_relative_mode = true,
                                   int root = 0);
/// Per-frame Protocol 2 (aligned) error in millimeters.
std::vector<double> frame_pmpjpe_mm(const PoseSequence3D& pred, const PoseSequence3D& gt);

/// Mean per-joint position error in millimeters, root-relative unless disabled.
double protocol1_mpjpe(const PoseSequence3D& pred, const PoseSequence3D& gt, bool root_relative_mode = true, int root = 0);
/// Mean error after per-frame similarity alignment, in millimeters.
double protocol2_pmpjpe(const PoseSequence3D& pred, const PoseSequence3D& gt);

struct BoneLengthReport {
  std::vector<std::size_t> frames;
  std::vector<std::string> bones;  // "parent-child"
  Eigen::MatrixXd lengths;          // bones x frames, meters
  Eigen::VectorXd spread;           // per bone max - min
  double max_deviation = 0.0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Bone lengths at `samples` evenly spaced frames (fewer if the sequence is shorter).
BoneLengthReport bone_length_report(const PoseSequence3D& poses, const Skeleton& skel, std::size_t samples = 7);

/// Eval-mode prediction of a whole clip through the sequence form of the encoder.
PoseSequence3D predict_clip(EncoderModel& model, const MotionClip& clip);

struct EvalOptions {
  bool protocol1 = true;
  bool protocol2 = true;
  bool root_relative = true;
  std::size_t bone_samples = 7;
};

struct EvalRow {
  std::string action;
  std::size_t frames = 0;
  double mpjpe_mm = 0.0;
  double pmpjpe_mm = 0.0;
  double bone_deviation_m = 0.0;  // mean over clips of each clip's max spread
};

struct EvalReport {
  EvalOptions options;
  std::vector<EvalRow> rows;  // one per action, sorted by name
  EvalRow average;            // frame-weighted
  BoneLengthReport bones;     // for one showcased clip
  std::string bones_clip;
  nlohmann::json config;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Predicts every clip (in parallel, on model clones) and aggregates per action.
EvalReport evaluate(const EncoderModel& model, const std::vector<const MotionClip*>& clips, const Skeleton& skel,
                    const EvalOptions& options = {});

}  // namespace spg
