#include "spg/evaluator.hpp"

#include "spg/parallel.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace spg {

namespace {

void require_same_length(const char* op, const PoseSequence3D& pred, const PoseSequence3D& gt) {
  if (pred.size() != gt.size()) {
    throw ContractError(std::string(op) + ": " + std::to_string(pred.size()) + " predicted frames vs " +
                        std::to_string(gt.size()) + " ground-truth frames");
  }
  if (pred.empty()) throw ContractError(std::string(op) + ": empty sequence");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<double> frame_mpjpe_mm(const PoseSequence3D& pred, const PoseSequence3D& gt, bool root_relative_mode, int root) {
  require_same_length("protocol1_mpjpe", pred, gt);
  std::vector<double> out;
  out.reserve(pred.size());
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double e = root_relative_mode ? pose_error(root_relative(pred[t], root), root_relative(gt[t], root))
                                        : pose_error(pred[t], gt[t]);
    out.push_back(1000.0 * e);
  }
  return out;
}

std::vector<double> frame_pmpjpe_mm(const PoseSequence3D& pred, const PoseSequence3D& gt) {
  require_same_length("protocol2_pmpjpe", pred, gt);
  std::vector<double> out;
  out.reserve(pred.size());
  for (std::size_t t = 0; t < pred.size(); ++t) out.push_back(1000.0 * pose_error(procrustes_align(pred[t], gt[t]).second, gt[t]));
  return out;
}

double protocol1_mpjpe(const PoseSequence3D& pred, const PoseSequence3D& gt, bool root_relative_mode, int root) {
  return mean(frame_mpjpe_mm(pred, gt, root_relative_mode, root));
}

double protocol2_pmpjpe(const PoseSequence3D& pred, const PoseSequence3D& gt) { return mean(frame_pmpjpe_mm(pred, gt)); }

BoneLengthReport bone_length_report(const PoseSequence3D& poses, const Skeleton& skel, std::size_t samples) {
  const std::size_t n = std::min(samples, poses.size());
  if (n < 2) throw ContractError("bone_length_report: needs at least 2 sampled frames");
  BoneLengthReport r;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(poses.size() - 1) / static_cast<double>(n - 1);
    r.frames.push_back(static_cast<std::size_t>(std::lround(pos)));
  }
  for (int c : skel.child_joints()) {
    r.bones.push_back(skel.names()[static_cast<std::size_t>(skel.parent(c))] + "-" + skel.names()[static_cast<std::size_t>(c)]);
  }
  r.lengths.resize(skel.num_bones(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) r.lengths.col(static_cast<Eigen::Index>(i)) = bone_lengths(poses[r.frames[i]], skel);
  r.spread = r.lengths.rowwise().maxCoeff() - r.lengths.rowwise().minCoeff();
  r.max_deviation = r.spread.maxCoeff();
  return r;
}

nlohmann::json BoneLengthReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t b = 0; b < bones.size(); ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    std::vector<double> values;
    for (Eigen::Index f = 0; f < lengths.cols(); ++f) values.push_back(lengths(bi, f));
    rows.push_back({{"bone", bones[b]}, {"lengths_m", values}, {"spread_m", spread[bi]}});
  }
  return {{"frames", frames}, {"bones", rows}, {"max_deviation_m", max_deviation}};
}

std::string BoneLengthReport::to_text() const {
  std::ostringstream out;
  out << std::string("bone").append(22, ' ');
  for (std::size_t f : frames) {
    std::string label = "f" + std::to_string(f);
    out << std::string(9 - std::min<std::size_t>(label.size(), 8), ' ') << label;
  }
  out << "   spread\n";
  for (std::size_t b = 0; b < bones.size(); ++b) {
    std::string name = bones[b];
    name.resize(26, ' ');
    out << name;
    for (Eigen::Index f = 0; f < lengths.cols(); ++f) out << format("%9.4f", lengths(static_cast<Eigen::Index>(b), f));
    out << format("%9.4f", spread[static_cast<Eigen::Index>(b)]) << '\n';
  }
  out << "max deviation: " << format("%.4f", max_deviation) << " m\n";
  return out.str();
}

PoseSequence3D predict_clip(EncoderModel& model, const MotionClip& clip) {
  const bool was_training = model.training();
  model.set_training(false);
  const auto m = static_cast<std::size_t>(model.config().num_joints);
  Eigen::VectorXd flat(static_cast<Eigen::Index>(clip.frames() * m * 2));
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    const Pose2D n = normalize_screen(clip.poses2d[t], clip.camera.width, clip.camera.height);
    flat.segment(static_cast<Eigen::Index>(t * m * 2), static_cast<Eigen::Index>(m * 2)) =
        Eigen::Map<const Eigen::VectorXd>(n.data(), static_cast<Eigen::Index>(m * 2));
  }
  const DiffTensor out = model.forward_sequence(DiffTensor({clip.frames(), m, 2}, std::move(flat)));
  model.set_training(was_training);
  PoseSequence3D poses;
  poses.reserve(clip.frames());
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    poses.emplace_back(Eigen::Map<const Pose3D>(out.values().data() + t * m * 3, static_cast<Eigen::Index>(m), 3));
  }
  return poses;
}

EvalReport evaluate(const EncoderModel& model, const std::vector<const MotionClip*>& clips, const Skeleton& skel,
                    const EvalOptions& options) {
  if (clips.empty()) throw ContractError("evaluate: no clips");
  struct ClipResult {
    std::vector<double> p1, p2;
    double bone_deviation = 0.0;
    PoseSequence3D prediction;
  };
  std::vector<ClipResult> results(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    EncoderModel local = model.clone();
    ClipResult& r = results[i];
    r.prediction = predict_clip(local, *clips[i]);
    if (options.protocol1) r.p1 = frame_mpjpe_mm(r.prediction, clips[i]->poses3d, options.root_relative, skel.root());
    if (options.protocol2) r.p2 = frame_pmpjpe_mm(r.prediction, clips[i]->poses3d);
    if (r.prediction.size() >= 2) r.bone_deviation = bone_length_report(r.prediction, skel, options.bone_samples).max_deviation;
  });

  struct Sum {
    std::size_t frames = 0, clips = 0;
    double p1 = 0.0, p2 = 0.0, bones = 0.0;
  };
  std::map<std::string, Sum> by_action;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    Sum& s = by_action[clips[i]->action];
    s.frames += clips[i]->frames();
    s.clips += 1;
    for (double v : results[i].p1) s.p1 += v;
    for (double v : results[i].p2) s.p2 += v;
    s.bones += results[i].bone_deviation;
  }

  EvalReport report;
  report.options = options;
  double total_frames = 0.0;
  for (const auto& [action, s] : by_action) {
    EvalRow row;
    row.action = action;
    row.frames = s.frames;
    row.mpjpe_mm = s.p1 / static_cast<double>(s.frames);
    row.pmpjpe_mm = s.p2 / static_cast<double>(s.frames);
    row.bone_deviation_m = s.bones / static_cast<double>(s.clips);
    report.rows.push_back(row);
    total_frames += static_cast<double>(s.frames);
  }
  report.average.action = "Average";
  for (const auto& row : report.rows) {
    const double w = static_cast<double>(row.frames) / total_frames;
    report.average.frames += row.frames;
    report.average.mpjpe_mm += w * row.mpjpe_mm;
    report.average.pmpjpe_mm += w * row.pmpjpe_mm;
    report.average.bone_deviation_m += w * row.bone_deviation_m;
  }

  // Showcase a walking clip when there is one, like a gait sequence.
  std::size_t show = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i]->action == "walk" && clips[i]->frames() >= 2) {
      show = i;
      break;
    }
  }
  if (results[show].prediction.size() >= 2) {
    report.bones = bone_length_report(results[show].prediction, skel, options.bone_samples);
    report.bones_clip = clips[show]->action + " / subject " + std::to_string(clips[show]->subject);
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  auto row_json = [&](const EvalRow& r) {
    nlohmann::json j{{"action", r.action}, {"frames", r.frames}, {"bone_deviation_m", r.bone_deviation_m}};
    if (options.protocol1) j["mpjpe_mm"] = r.mpjpe_mm;
    if (options.protocol2) j["pmpjpe_mm"] = r.pmpjpe_mm;
    return j;
  };
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(row_json(r));
  nlohmann::json out{{"mode", options.root_relative ? "root-relative" : "absolute"},
                     {"rows", rows_json},
                     {"average", row_json(average)},
                     {"bone_report", bones.to_json()},
                     {"bone_report_clip", bones_clip},
                     {"config", config}};
  nlohmann::json protocols = nlohmann::json::array();
  if (options.protocol1) protocols.push_back(1);
  if (options.protocol2) protocols.push_back(2);
  out["protocols"] = protocols;
  return out;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "Protocol 1 mode: " << (options.root_relative ? "root-relative" : "absolute") << "\n";
  out << "action          frames";
  if (options.protocol1) out << "   MPJPE(mm)";
  if (options.protocol2) out << "  P-MPJPE(mm)";
  out << "  bone dev(m)\n";
  auto line = [&](const EvalRow& r) {
    std::string name = r.action;
    name.resize(14, ' ');
    out << name << format("%8.0f", static_cast<double>(r.frames));
    if (options.protocol1) out << format("%12.2f", r.mpjpe_mm);
    if (options.protocol2) out << format("%13.2f", r.pmpjpe_mm);
    out << format("%13.4f", r.bone_deviation_m) << '\n';
  };
  for (const auto& r : rows) line(r);
  line(average);
  if (!bones.frames.empty()) out << "\nbone lengths (" << bones_clip << ")\n" << bones.to_text();
  return out.str();
}

}  // namespace spg
