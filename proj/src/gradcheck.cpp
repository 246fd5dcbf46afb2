#include "spg/gradcheck.hpp"

#include "spg/camera.hpp"
#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"
#include "spg/encoder.hpp"
#include "spg/losses.hpp"
#include "spg/skeleton.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

namespace spg {

namespace {

constexpr double kLossTolerance = 1e-6;
constexpr double kEncoderTolerance = 1e-5;

DiffTensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi, bool requires_grad) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(shape_numel(shape)));
  for (auto& x : v) x = u(rng);
  return DiffTensor(std::move(shape), std::move(v), requires_grad);
}

// Rest pose plus noise, 4 m in front of the camera: [T, M, 3].
DiffTensor noisy_clip(std::mt19937_64& rng, const Skeleton& skel, std::size_t frames, bool requires_grad) {
  const Pose3D rest = skel.rest_pose();
  std::normal_distribution<double> noise(0.0, 0.05);
  const auto m = static_cast<std::size_t>(skel.num_joints());
  Eigen::VectorXd v(static_cast<Eigen::Index>(frames * m * 3));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t j = 0; j < m; ++j) {
      for (int c = 0; c < 3; ++c) {
        v[static_cast<Eigen::Index>((f * m + j) * 3 + static_cast<std::size_t>(c))] =
            rest(static_cast<Eigen::Index>(j), c) + noise(rng) + (c == 2 ? 4.0 : 0.0);
      }
    }
  }
  return DiffTensor({frames, m, 3}, std::move(v), requires_grad);
}

// A differentiable scalar of some inputs, evaluated repeatedly at one random point.
struct Probe {
  std::vector<DiffTensor> inputs;
  std::function<DiffTensor()> f;
};

double point_error(Probe& probe, double h, bool corrupt) {
  for (auto& t : probe.inputs) t.zero_grad();
  {
    Tape tape;
    tape.backward(probe.f());
  }
  double diff = 0.0, scale = 1e-8;
  for (std::size_t k = 0; k < probe.inputs.size(); ++k) {
    DiffTensor& t = probe.inputs[k];
    Eigen::VectorXd analytic = t.grad();
    if (corrupt && k == 0) analytic[0] = analytic[0] * 1.5 + 1e-3;
    Eigen::VectorXd& x = t.mutable_values();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = probe.f().item();
      x[i] = saved - h;
      const double down = probe.f().item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
  }
  return diff / scale;
}

Probe projector_probe(std::mt19937_64& rng, std::uint64_t seed) {
  const CameraIntrinsics cam = sample_camera(seed);
  // Normalized coordinates in (-0.9, 0.9), clear of the clamp at +-1.
  DiffTensor z = uniform({17, 1}, rng, 2.0, 6.0, true);
  DiffTensor n = uniform({17, 2}, rng, -0.9, 0.9, false);
  Eigen::VectorXd xy(34);
  for (Eigen::Index j = 0; j < 17; ++j) {
    xy[2 * j] = n.values()[2 * j] * z.values()[j];
    xy[2 * j + 1] = n.values()[2 * j + 1] * z.values()[j];
  }
  DiffTensor xy_t({17, 2}, std::move(xy), true);
  const DiffTensor w = uniform({17, 2}, rng, -1.0, 1.0, false);
  return {{xy_t, z}, [=] { return sum_all(project(xy_t, z, cam) * w); }};
}

Probe loss_probe(const std::string& op, std::mt19937_64& rng, std::uint64_t seed, const Skeleton& skel) {
  DiffTensor pred = noisy_clip(rng, skel, 3, true);
  const DiffTensor gt = noisy_clip(rng, skel, 3, false);
  if (op == "loss.pose3d") {
    const DiffTensor gt_xy = slice(gt, -1, 0, 2);
    return {{pred}, [=] { return mpjpe(slice(pred, -1, 0, 2), gt_xy); }};
  }
  if (op == "loss.depth") {
    const DiffTensor gt_z = slice(gt, -1, 2, 3);
    return {{pred}, [=] { return weighted_mpjpe_depth(slice(pred, -1, 2, 3), gt_z); }};
  }
  if (op == "loss.kinematic") return {{pred}, [=, &skel] { return kinematic_sequence(pred, skel); }};
  const CameraIntrinsics cam = sample_camera(seed);
  const DiffTensor input = project_sequence(gt, cam);
  return {{pred}, [=] { return reprojection_mpjpe(pred, cam, input); }};
}

Probe encoder_probe(std::mt19937_64& rng, std::uint64_t seed) {
  EncoderConfig cfg;
  cfg.num_joints = 3;
  cfg.channels = 8;
  cfg.window = 9;
  cfg.dropout = 0.0;
  EncoderModel model = EncoderModel::build(cfg, seed);
  std::uniform_real_distribution<double> beta(0.1, 0.5), gamma(0.5, 1.5);
  for (auto& p : model.parameters()) {
    if (p.name.find(".bn.beta") != std::string::npos) {
      for (auto& v : p.tensor.mutable_values()) v = beta(rng);
    } else if (p.name.find(".bn.gamma") != std::string::npos) {
      for (auto& v : p.tensor.mutable_values()) v = gamma(rng);
    }
  }
  model.set_training(true);  // batch statistics
  DiffTensor input = uniform({4, 9, 3, 2}, rng, -1.0, 1.0, true);
  const DiffTensor w = uniform({4, 3, 3}, rng, -1.0, 1.0, false);
  Probe probe;
  probe.inputs.push_back(input);
  for (auto& p : model.parameters()) probe.inputs.push_back(p.tensor);
  probe.f = [=]() mutable { return sum_all(model.forward_batch(input) * w); };
  return probe;
}

}  // namespace

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{"projector",      "loss.pose3d", "loss.depth",
                                            "loss.kinematic", "loss.reproj", "encoder"};
  return ops;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto& ops = gradcheck_ops();
  if (!options.inject_fault.empty() && std::find(ops.begin(), ops.end(), options.inject_fault) == ops.end()) {
    throw ConfigError("unknown gradcheck op '" + options.inject_fault + "'");
  }
  const auto start = std::chrono::steady_clock::now();
  const Skeleton skel = default_skeleton();
  GradcheckReport report;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const std::string& op = ops[k];
    GradcheckResult r;
    r.op = op;
    r.tolerance = op == "encoder" ? kEncoderTolerance : kLossTolerance;
    std::mt19937_64 rng(options.seed * 1000003ULL + k);
    for (std::size_t p = 0; p < options.points; ++p) {
      const std::uint64_t point_seed = options.seed + p;
      Probe probe = op == "projector" ? projector_probe(rng, point_seed)
                    : op == "encoder" ? encoder_probe(rng, point_seed)
                                      : loss_probe(op, rng, point_seed, skel);
      const double e = point_error(probe, options.step, op == options.inject_fault);
      if (e > r.max_relative_error || p == 0) {
        r.max_relative_error = e;
        r.worst_point = p;
      }
      ++r.points;
    }
    report.results.push_back(r);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

bool GradcheckReport::passed() const {
  return !results.empty() && std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed(); });
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& r : results) {
    ops.push_back({{"op", r.op},
                   {"points", r.points},
                   {"max_relative_error", r.max_relative_error},
                   {"tolerance", r.tolerance},
                   {"worst_point", r.worst_point},
                   {"passed", r.passed()}});
  }
  return {{"ops", ops}, {"passed", passed()}, {"seconds", seconds}};
}

std::string GradcheckReport::to_text() const {
  std::ostringstream out;
  for (const auto& r : results) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-16s points=%zu max_rel_err=%.3e tol=%.0e\n", r.passed() ? "PASS" : "FAIL",
                  r.op.c_str(), r.points, r.max_relative_error, r.tolerance);
    out << line;
  }
  char tail[64];
  std::snprintf(tail, sizeof tail, "%.1f s\n", seconds);
  out << (passed() ? "all gradients match, " : "gradient mismatch, ") << tail;
  return out.str();
}

}  // namespace spg
