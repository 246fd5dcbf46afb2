// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: acceptance [criterion numbers...]; with no arguments all eight run.

#include "spg/ablation.hpp"
#include "spg/camera.hpp"
#include "spg/container.hpp"
#include "spg/core/ops.hpp"
#include "spg/dataset.hpp"
#include "spg/evaluator.hpp"
#include "spg/gradcheck.hpp"
#include "spg/trainer.hpp"
#include "support/scalar_projector.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

namespace {

using namespace spg;

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, static_cast<double>(args)...);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// Ablations run at the same desk config as the end-to-end check.
TrainConfig ablation_config() {
  TrainConfig c;
  c.epochs = 20;
  c.encoder.channels = 64;
  c.encoder.window = 27;
  return c;
}

const Dataset& desk_dataset() {
  static const Dataset data = generate_dataset(GeneratorConfig{}, 1);
  return data;
}

Outcome gradient_verification() {
  const double start = cpu_seconds();
  const GradcheckReport r = run_gradcheck();
  const double cpu = cpu_seconds() - start;
  std::size_t min_points = SIZE_MAX;
  double worst_loss = 0.0, worst_encoder = 0.0;
  for (const auto& res : r.results) {
    min_points = std::min(min_points, res.points);
    (res.op == "encoder" ? worst_encoder : worst_loss) = std::max(res.op == "encoder" ? worst_encoder : worst_loss,
                                                                  res.max_relative_error);
  }
  const bool pass = r.passed() && r.results.size() == 6 && min_points >= 100 && worst_loss < 1e-6 &&
                    worst_encoder < 1e-5 && cpu < 60.0;
  return {pass, fmt("6 ops x %.0f points; max rel err projector/losses %.2e (< 1e-6), encoder %.2e (< 1e-5); %.1f s CPU (< 60)",
                    static_cast<double>(min_points), worst_loss, worst_encoder, cpu)};
}

Outcome projector_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> depth(0.5, 6.0), spread(-1.4, 1.4);
  double worst = 0.0;
  std::size_t saturated = 0, distorted = 0;
  for (int sample = 0; sample < 1000; ++sample) {
    const CameraIntrinsics cam = sample_camera(static_cast<std::uint64_t>(sample), sample % 10 == 0 ? "ideal" : "random");
    if (!cam.radial.isZero(0.0) || !cam.tangential.isZero(0.0)) ++distorted;
    Eigen::VectorXd v(2 * 17 * 3);
    for (Eigen::Index j = 0; j < 34; ++j) {
      const double z = depth(rng);
      // Normalized coordinates up to 1.4 so some joints hit the clamp.
      v[3 * j] = spread(rng) * z;
      v[3 * j + 1] = spread(rng) * z;
      v[3 * j + 2] = z;
      if (std::abs(v[3 * j] / z) > 1.0 || std::abs(v[3 * j + 1] / z) > 1.0) ++saturated;
    }
    const DiffTensor poses({2, 17, 3}, v);
    const DiffTensor px = project_sequence(poses, cam);
    for (Eigen::Index j = 0; j < 34; ++j) {
      const auto ref = spg::testing::scalar_project(v[3 * j], v[3 * j + 1], v[3 * j + 2], cam);
      worst = std::max({worst, std::abs(px.values()[2 * j] - ref[0]), std::abs(px.values()[2 * j + 1] - ref[1])});
    }
  }
  CameraIntrinsics hand;
  hand.focal = {1000, 1000};
  hand.center = {500, 400};
  hand.radial = {0.1, 0.0, 0.0};
  Pose3D p(1, 3);
  p << 0.1, -0.05, 1.0;
  const Pose2D h = project_pose(p, hand);
  const double hand_err = std::max(std::abs(h(0, 0) - 600.125), std::abs(h(0, 1) - 349.9375));
  const bool pass = worst < 1e-9 && saturated > 0 && distorted > 0 && hand_err == 0.0;
  return {pass, fmt("1000 samples, %.0f clamp-saturated joints, %.0f distorted cameras, max dev %.2e px (< 1e-9); "
                    "hand example off by %.1e px (exact)",
                    static_cast<double>(saturated), static_cast<double>(distorted), worst, hand_err)};
}

Outcome procrustes_exactness() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.8, 0.8), scale(0.5, 2.0), shift(-3.0, 3.0);
  std::normal_distribution<double> n(0.0, 1.0), noise(0.0, 0.04);
  auto pose = [&] {
    Pose3D p(17, 3);
    for (int j = 0; j < 17; ++j) p.row(j) << u(rng), u(rng), u(rng) + 4.0;
    return p;
  };
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Pose3D gt = pose();
    const Eigen::Matrix3d r = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    const Pose3D pred = (scale(rng) * gt * r.transpose()).rowwise() + Eigen::RowVector3d(shift(rng), shift(rng), shift(rng));
    worst = std::max(worst, protocol2_pmpjpe({pred}, {gt}));
  }
  std::size_t violations = 0;
  for (int i = 0; i < 100; ++i) {
    const Pose3D gt = pose();
    Pose3D pred = gt;
    for (Eigen::Index k = 0; k < pred.size(); ++k) pred.data()[k] += noise(rng);
    if (protocol2_pmpjpe({pred}, {gt}) > protocol1_mpjpe({pred}, {gt})) ++violations;
  }
  return {worst < 1e-6 && violations == 0,
          fmt("max P-MPJPE under similarity %.2e mm (< 1e-6); P-MPJPE > MPJPE in %.0f of 100 noisy pairs (0)", worst,
              static_cast<double>(violations))};
}

Outcome end_to_end() {
  const auto wall = std::chrono::steady_clock::now();
  const Dataset& data = desk_dataset();
  const auto [train_clips, test_clips] = split_dataset(data);
  std::set<int> train_subjects, test_subjects;
  for (auto* c : train_clips) train_subjects.insert(c->subject);
  for (auto* c : test_clips) test_subjects.insert(c->subject);
  TrainConfig cfg;  // desk config: C=64 is below the library default
  cfg.epochs = 20;
  cfg.seed = 1;
  cfg.encoder.channels = 64;
  cfg.encoder.window = 27;
  const double untrained = evaluate(EncoderModel::build(cfg.encoder, cfg.seed), test_clips, data.skeleton).average.mpjpe_mm;
  const TrainResult r = train(train_clips, test_clips, data.skeleton, cfg);
  const double trained = evaluate(r.final_state.model, test_clips, data.skeleton).average.mpjpe_mm;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
  const bool pass = train_subjects.size() == 5 && test_subjects.size() == 2 && data.total_frames() >= 5000 &&
                    trained < 0.4 * untrained && seconds < 900.0;
  return {pass, fmt("%.0f frames; held-out Protocol 1 %.1f mm vs untrained %.1f mm (ratio %.3f < 0.4); %.0f s (< 900)",
                    static_cast<double>(data.total_frames()), trained, untrained, trained / untrained, seconds)};
}

const AblationReport& ablation() {
  static const AblationReport report = [] {
    AblationOptions o;
    o.seeds = {1, 2, 3};
    o.windows = {9, 27, 81};
    return ablation_suite(desk_dataset(), ablation_config(), o);
  }();
  return report;
}

Outcome kinematic_ablation() {
  const AblationReport& r = ablation();
  const AblationRow* base = r.find("Baseline");
  const AblationRow* star = r.find("Baseline*");
  const AblationRow* full = r.find("SPGNet");
  const std::string text = r.to_text() + fmt("info: full-model max bone deviation %.4f m; reference bound 0.065 m\n",
                                             r.bones.max_deviation);
  std::printf("%s", text.c_str());
  if (std::FILE* f = std::fopen("acceptance_ablation.txt", "w")) {
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  const bool pass = base && star && full && r.seeds.size() >= 3 && star->mean_bone_deviation() < base->mean_bone_deviation();
  return {pass, fmt("mean max bone deviation over %.0f seeds: w_kc>0 %.4f m < w_kc=0 %.4f m (SPGNet %.4f m)",
                    static_cast<double>(r.seeds.size()), star ? star->mean_bone_deviation() : 0.0,
                    base ? base->mean_bone_deviation() : 0.0, full ? full->mean_bone_deviation() : 0.0)};
}

Outcome receptive_field() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), g(0.5, 1.5);
  std::size_t leaks = 0, dead = 0, checked = 0;
  for (int window : {3, 9, 27}) {
    EncoderConfig cfg;
    cfg.num_joints = 17;
    cfg.window = window;
    cfg.channels = 16;
    EncoderModel m = EncoderModel::build(cfg, static_cast<std::uint64_t>(window));
    for (auto& p : m.parameters()) {
      if (p.name.find(".bn.") != std::string::npos) {
        for (auto& v : p.tensor.mutable_values()) v = p.name.find("gamma") != std::string::npos ? g(rng) : u(rng);
      }
    }
    for (auto& s : m.batchnorm_stats()) {
      for (auto& v : s.stats->running_mean) v = 0.3 * u(rng);
      for (auto& v : s.stats->running_var) v = g(rng);
    }
    m.set_training(false);
    const std::size_t t = 2 * static_cast<std::size_t>(window) + 1, center = static_cast<std::size_t>(window);
    const std::size_t half = static_cast<std::size_t>(window / 2);
    Eigen::VectorXd v(static_cast<Eigen::Index>(t * 34));
    for (auto& x : v) x = u(rng);
    const DiffTensor frames({t, 17, 2}, v);
    const Eigen::VectorXd base = slice(m.forward_sequence(frames), 0, center, center + 1).values();
    for (std::size_t s = 0; s < t; ++s) {
      Eigen::VectorXd w = v;
      for (Eigen::Index q = 0; q < 34; ++q) w[static_cast<Eigen::Index>(s * 34) + q] += 0.5;
      const Eigen::VectorXd moved = slice(m.forward_sequence(DiffTensor({t, 17, 2}, w)), 0, center, center + 1).values();
      const bool inside = s + half >= center && s <= center + half;
      if (!inside && moved != base) ++leaks;
      if (inside && moved == base) ++dead;
      ++checked;
    }
  }
  return {leaks == 0 && dead == 0,
          fmt("R in {0,1,2}: %.0f frame perturbations, %.0f outside-field changes (0), %.0f inside-field no-ops (0)",
              static_cast<double>(checked), static_cast<double>(leaks), static_cast<double>(dead))};
}

Outcome determinism_and_format() {
  GeneratorConfig g;
  const auto a = encode_container(dataset_to_container(generate_dataset(g, 42)));
  const auto b = encode_container(dataset_to_container(generate_dataset(g, 42)));
  const bool datasets = a == b;
  const bool roundtrip = encode_container(decode_container(a)) == a;

  GeneratorConfig small;
  small.subjects = {1, 2, 3};
  small.test_subjects = {3};
  small.frames = 40;
  const Dataset d = generate_dataset(small, 9);
  const auto [tr, val] = split_dataset(d);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  cfg.encoder.channels = 16;
  cfg.encoder.window = 9;
  const auto c1 = encode_container(checkpoint_to_container(train(tr, val, d.skeleton, cfg).final_state));
  const auto c2 = encode_container(checkpoint_to_container(train(tr, val, d.skeleton, cfg).final_state));
  const bool checkpoints = c1 == c2;

  ContainerData one;
  one.add("x", {1}, std::vector<float>{1.5f});
  const auto bytes = encode_container(one);
  const std::vector<std::uint8_t> tail(bytes.end() - 4, bytes.end());
  const bool pattern = tail == std::vector<std::uint8_t>{0x00, 0x00, 0xC0, 0x3F};
  return {datasets && roundtrip && checkpoints && pattern,
          std::string("dataset bytes ") + (datasets ? "identical" : "DIFFER") + ", checkpoint bytes " +
              (checkpoints ? "identical" : "DIFFER") + ", round trip " + (roundtrip ? "byte-exact" : "NOT exact") +
              ", 1.5f payload " + (pattern ? "00 00 C0 3F" : "wrong") + "; dataset sha256 " + sha256_hex(a).substr(0, 16)};
}

Outcome window_trend() {
  const AblationReport& r = ablation();
  const AblationRow* j9 = r.find("J=9");
  const AblationRow* j27 = r.find("J=27");
  const AblationRow* j81 = r.find("J=81");
  const bool present = j9 && j27 && j81 && j9->mpjpe_mm.size() == 3 && j81->mpjpe_mm.size() == 3;
  const bool pass = present && j81->mean_mpjpe() <= 1.05 * j9->mean_mpjpe();
  return {pass, present ? fmt("Protocol 1 mean over 3 seeds: J=9 %.1f, J=27 %.1f, J=81 %.1f mm (J=81 <= 1.05 x J=9 = %.1f)",
                              j9->mean_mpjpe(), j27->mean_mpjpe(), j81->mean_mpjpe(), 1.05 * j9->mean_mpjpe())
                        : std::string("window rows missing")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient verification", gradient_verification}},
      {2, {"projector oracle equivalence", projector_oracle}},
      {3, {"procrustes exactness", procrustes_exactness}},
      {4, {"realizable lifting end-to-end", end_to_end}},
      {5, {"kinematic-constraint ablation", kinematic_ablation}},
      {6, {"receptive-field purity", receptive_field}},
      {7, {"determinism and format", determinism_and_format}},
      {8, {"window-size trend", window_trend}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  // ctest hides the output of passing tests, so keep a copy next to the binary.
  std::FILE* log = std::fopen("acceptance_results.txt", "w");
  int failures = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, entry.first, o.detail.c_str());
    std::fflush(stdout);
    if (log) {
      std::fprintf(log, "%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, entry.first, o.detail.c_str());
      std::fflush(log);
    }
    if (!o.pass) ++failures;
  }
  if (log) std::fclose(log);
  return failures == 0 ? 0 : 1;
}
