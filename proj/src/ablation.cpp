#include "spg/ablation.hpp"

#include "spg/core/errors.hpp"
#include "spg/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace spg {

namespace {

std::string format(const char* fmt, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

}  // namespace

void AblationOptions::validate() const {
  if (seeds.size() < 2) throw ConfigError("ablation.seeds needs at least 2 seeds");
  if (window_sweep && windows.empty()) throw ConfigError("ablation.windows is empty");
  if (!loss_variants && !window_sweep) throw ConfigError("ablation has nothing to run");
}

nlohmann::json AblationOptions::to_json() const {
  return {{"seeds", seeds}, {"windows", windows}, {"loss_variants", loss_variants}, {"window_sweep", window_sweep}};
}

AblationOptions AblationOptions::from_json(const nlohmann::json& j) {
  AblationOptions o;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seeds") o.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "windows") o.windows = value.get<std::vector<int>>();
      else if (key == "loss_variants") o.loss_variants = value.get<bool>();
      else if (key == "window_sweep") o.window_sweep = value.get<bool>();
      else throw ConfigError("unknown key ablation." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ablation config: ") + e.what());
  }
  return o;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

double AblationRow::mean_mpjpe() const { return mean_std(mpjpe_mm).first; }
double AblationRow::mean_pmpjpe() const { return mean_std(pmpjpe_mm).first; }
double AblationRow::mean_bone_deviation() const { return mean_std(bone_deviation_m).first; }

nlohmann::json AblationRow::to_json() const {
  auto stat = [](const std::vector<double>& v) {
    const auto [m, s] = mean_std(v);
    return nlohmann::json{{"mean", m}, {"std", s}, {"per_seed", v}};
  };
  return {{"group", group},
          {"name", name},
          {"window", window},
          {"loss", weights.to_json()},
          {"mpjpe_mm", stat(mpjpe_mm)},
          {"pmpjpe_mm", stat(pmpjpe_mm)},
          {"bone_deviation_m", stat(bone_deviation_m)}};
}

const AblationRow* AblationReport::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  return {{"seeds", seeds}, {"rows", rows_json}, {"bone_report", bones.to_json()}, {"bone_report_clip", bones_clip},
          {"config", config}};
}

std::string AblationReport::to_text() const {
  std::ostringstream out;
  out << "variant       window        MPJPE(mm)       P-MPJPE(mm)      bone dev(m)\n";
  for (const auto& r : rows) {
    std::string name = r.name;
    name.resize(12, ' ');
    std::string window = std::to_string(r.window);
    window.resize(6, ' ');
    const auto [p1, p1s] = mean_std(r.mpjpe_mm);
    const auto [p2, p2s] = mean_std(r.pmpjpe_mm);
    const auto [bd, bds] = mean_std(r.bone_deviation_m);
    out << name << "  " << window << format("%10.2f +- %-6.2f", p1, p1s) << format("%10.2f +- %-6.2f", p2, p2s)
        << format("%9.4f +- %.4f", bd, bds) << '\n';
  }
  out << "seeds:";
  for (auto s : seeds) out << ' ' << s;
  out << '\n';
  if (!bones.frames.empty()) out << "\nbone lengths, full objective (" << bones_clip << ")\n" << bones.to_text();
  return out.str();
}

AblationReport ablation_suite(const Dataset& data, const TrainConfig& base, const AblationOptions& options) {
  options.validate();
  base.validate();
  const auto [train_clips, val_clips] = split_dataset(data);
  if (train_clips.empty() || val_clips.empty()) throw ConfigError("ablation needs both training and test subjects");

  AblationReport report;
  report.seeds = options.seeds;
  report.config = {{"train", base.to_json()}, {"loss", base.loss.to_json()}, {"encoder", base.encoder.to_json()},
                   {"ablation", options.to_json()}};
  if (options.loss_variants) {
    LossWeights baseline{base.loss.pose3d, 0.0, 0.0, 0.0};
    LossWeights kinematic = baseline;
    kinematic.kinematic = base.loss.kinematic > 0.0 ? base.loss.kinematic : LossWeights{}.kinematic;
    report.rows.push_back({"loss", "Baseline", baseline, base.encoder.window, {}, {}, {}});
    report.rows.push_back({"loss", "Baseline*", kinematic, base.encoder.window, {}, {}, {}});
    report.rows.push_back({"loss", "SPGNet", base.loss, base.encoder.window, {}, {}, {}});
  }
  if (options.window_sweep) {
    for (int j : options.windows) report.rows.push_back({"window", "J=" + std::to_string(j), base.loss, j, {}, {}, {}});
  }

  struct Run {
    std::size_t row = 0, seed = 0;
    std::size_t same_as = 0;  // index of the run whose result this one reuses
    double p1 = 0.0, p2 = 0.0, bones = 0.0;
    EvalReport eval;
  };
  std::vector<Run> runs;
  std::vector<std::size_t> unique;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    for (std::size_t s = 0; s < options.seeds.size(); ++s) {
      Run run;
      run.row = r;
      run.seed = s;
      run.same_as = runs.size();
      // The full objective at the base window appears in both groups; train it once.
      for (std::size_t u : unique) {
        const AblationRow& other = report.rows[runs[u].row];
        if (runs[u].seed == s && other.window == report.rows[r].window &&
            other.weights.to_json() == report.rows[r].weights.to_json()) {
          run.same_as = u;
        }
      }
      if (run.same_as == runs.size()) unique.push_back(runs.size());
      runs.push_back(std::move(run));
    }
  }
  parallel_for(unique.size(), [&](std::size_t i) {
    Run& run = runs[unique[i]];
    const AblationRow& row = report.rows[run.row];
    TrainConfig cfg = base;
    cfg.seed = options.seeds[run.seed];
    cfg.loss = row.weights;
    cfg.encoder.window = row.window;
    const TrainResult result = train(train_clips, val_clips, data.skeleton, cfg);
    run.eval = evaluate(result.final_state.model, val_clips, data.skeleton);
    run.p1 = run.eval.average.mpjpe_mm;
    run.p2 = run.eval.average.pmpjpe_mm;
    run.bones = run.eval.average.bone_deviation_m;
  });
  for (const Run& entry : runs) {
    const Run& run = runs[entry.same_as];
    AblationRow& row = report.rows[entry.row];
    row.mpjpe_mm.push_back(run.p1);
    row.pmpjpe_mm.push_back(run.p2);
    row.bone_deviation_m.push_back(run.bones);
    if (entry.seed == 0 && row.weights.to_json() == base.loss.to_json() && row.window == base.encoder.window &&
        report.bones.frames.empty()) {
      report.bones = run.eval.bones;
      report.bones_clip = run.eval.bones_clip;
    }
  }
  return report;
}

}  // namespace spg
