// spgnet: generate data, train, evaluate, verify gradients, run ablations and
// render frames. Exit codes: 0 success, 1 usage/config/IO error, 2 numerical abort.

#include "spg/ablation.hpp"
#include "spg/config.hpp"
#include "spg/core/errors.hpp"
#include "spg/gradcheck.hpp"
#include "spg/render.hpp"
#include "spg/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace spg;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override, e.g. train.epochs=5 (repeatable)");
  }
  ToolConfig resolve(std::vector<std::string> extra = {}, const nlohmann::json& base = nlohmann::json::object()) const {
    std::vector<std::string> all = overrides;
    all.insert(all.end(), extra.begin(), extra.end());
    return resolve_config(file.empty() ? std::nullopt : std::optional<std::filesystem::path>(file), all, base);
  }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  std::filesystem::path out = path;
  out.replace_filename(path.stem().string() + suffix + path.extension().string());
  return out;
}

int run_gen(const ConfigArgs& args, const std::string& out, std::uint64_t seed, std::optional<int> sequences) {
  ToolConfig cfg = args.resolve();
  if (sequences) {
    if (*sequences < 1) throw ConfigError("--sequences must be >= 1, got " + std::to_string(*sequences));
    for (auto& [action, count] : cfg.generator.actions) count = *sequences;
  }
  const Dataset data = generate_dataset(cfg.generator, seed);
  const std::string hash = save_dataset(out, data);
  const Dataset reread = load_dataset(out);  // validates every clip as stored
  std::printf("wrote %s: %zu clips, %zu frames\nsha256 %s\n", out.c_str(), reread.clips.size(), reread.total_frames(),
              hash.c_str());
  return 0;
}

int run_train(const ConfigArgs& args, const std::string& data_path, const std::string& out, std::string log,
              const std::string& resume, std::optional<std::uint64_t> seed) {
  std::vector<std::string> extra;
  if (seed) extra.push_back("train.seed=" + std::to_string(*seed));
  TrainIo io;
  // A resumed run starts from the checkpoint's own configuration.
  if (!resume.empty()) io.resume = load_checkpoint(resume);
  const nlohmann::json base = io.resume ? checkpoint_to_container(*io.resume).metadata.at("config") : nlohmann::json::object();
  const ToolConfig cfg = args.resolve(extra, base);
  const Dataset data = load_dataset(data_path);
  const auto [train_clips, val_clips] = split_dataset(data);
  io.checkpoint = out;
  io.best_checkpoint = sibling(out, ".best");
  io.log = log.empty() ? std::filesystem::path(out).replace_extension(".csv") : std::filesystem::path(log);
  io.dataset_hash = file_sha256(data_path);
  if (io.resume) {
    if (io.resume->dataset_hash != io.dataset_hash) {
      std::fprintf(stderr, "warning: checkpoint was trained on a different dataset (%s)\n", io.resume->dataset_hash.c_str());
    }
  } else if (std::filesystem::exists(io.log)) {
    std::filesystem::remove(io.log);
  }
  io.on_epoch = [&](const EpochRecord& r) {
    std::printf("epoch %3d  lr %.3e  loss %.5f  val MPJPE %.2f mm  (%.1f s)\n", r.epoch, r.lr, r.loss_total,
                r.val_mpjpe_mm, r.seconds);
    std::fflush(stdout);
  };
  std::printf("training on %zu clips, validating on %zu; encoder %zu parameters\n", train_clips.size(),
              val_clips.size(), Checkpoint::fresh(cfg.train).model.parameter_count());
  const TrainResult result = train(train_clips, val_clips, data.skeleton, cfg.train, io);
  std::printf("untrained val MPJPE %.2f mm, final %.2f mm, best %.2f mm\ncheckpoint %s (sha256 %s)\n",
              result.final_state.initial_val_mpjpe_mm, result.final_state.val_mpjpe_mm,
              result.final_state.best_val_mpjpe_mm, out.c_str(), file_sha256(out).c_str());
  return 0;
}

int run_eval(const ConfigArgs& args, const std::string& data_path, const std::string& ckpt_path,
             const std::string& protocol, const std::string& report_path, const std::string& split) {
  ToolConfig cfg = args.resolve({"eval.protocol=\"" + protocol + "\""});
  const Dataset data = load_dataset(data_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto [train_clips, test_clips] = split_dataset(data);
  std::vector<const MotionClip*> clips = split == "train" ? train_clips : split == "test" ? test_clips : data.select({}, false);
  if (clips.empty()) throw ConfigError("no clips in the '" + split + "' split");
  EvalReport report = evaluate(ckpt.model, clips, data.skeleton, cfg.eval);
  report.config = {{"checkpoint", checkpoint_to_container(ckpt).metadata.at("config")},
                   {"eval", eval_options_to_json(cfg.eval)},
                   {"split", split},
                   {"dataset", data_path},
                   {"dataset_sha256", file_sha256(data_path)},
                   {"checkpoint_sha256", file_sha256(ckpt_path)}};
  std::printf("%s", report.to_text().c_str());
  if (!report_path.empty()) {
    write_text(report_path, report.to_json().dump(2) + "\n");
    write_text(std::filesystem::path(report_path).replace_extension(".txt"), report.to_text());
  }
  return 0;
}

int run_gradcheck_cmd(const GradcheckOptions& options, const std::string& report_path) {
  const GradcheckReport report = run_gradcheck(options);
  std::printf("%s", report.to_text().c_str());
  if (!report_path.empty()) write_text(report_path, report.to_json().dump(2) + "\n");
  return report.passed() ? 0 : 1;
}

int run_ablate(const ConfigArgs& args, const std::string& data_path, const std::string& report_path) {
  const ToolConfig cfg = args.resolve();
  const Dataset data = load_dataset(data_path);
  AblationReport report = ablation_suite(data, cfg.train, cfg.ablation);
  report.config["dataset_sha256"] = file_sha256(data_path);
  std::printf("%s", report.to_text().c_str());
  std::printf("full-model max bone deviation %.4f m (reference bound 0.065 m: %s)\n", report.bones.max_deviation,
              report.bones.max_deviation <= 0.065 ? "within" : "above");
  if (!report_path.empty()) {
    write_text(report_path, report.to_json().dump(2) + "\n");
    write_text(std::filesystem::path(report_path).replace_extension(".txt"), report.to_text());
  }
  return 0;
}

int run_render(const std::string& data_path, const std::string& ckpt_path, std::size_t clip_index, std::size_t frame,
               const std::string& out) {
  const Dataset data = load_dataset(data_path);
  if (clip_index >= data.clips.size()) {
    throw ConfigError("clip " + std::to_string(clip_index) + " out of range [0, " + std::to_string(data.clips.size() - 1) + "]");
  }
  const MotionClip& clip = data.clips[clip_index];
  if (frame >= clip.frames()) {
    throw ConfigError("frame " + std::to_string(frame) + " out of range [0, " + std::to_string(clip.frames() - 1) + "]");
  }
  RenderLayers layers;
  layers.input = clip.poses2d[frame];
  layers.truth = project_pose(clip.poses3d[frame], clip.camera);
  if (ckpt_path.empty()) {
    layers.prediction = layers.truth;
    layers.prediction_label = "prediction (no checkpoint given, ground truth shown)";
  } else {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const PoseSequence3D pred = predict_clip(ckpt.model, clip);
    Pose3D p = pred[frame];
    p.col(2) = p.col(2).cwiseMax(kMinProjectionDepth);
    layers.prediction = project_pose(p, clip.camera);
  }
  layers.title = clip.action + ", subject " + std::to_string(clip.subject) + ", clip " + std::to_string(clip_index) +
                 ", frame " + std::to_string(frame);
  write_text(out, render_svg(layers, data.skeleton, clip.camera.width, clip.camera.height));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spgnet: 2D-to-3D human pose lifting toolkit"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg, train_cfg, eval_cfg, ablate_cfg;
  std::string out, data, ckpt, log, resume, report, protocol = "both", split = "test";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> sequences;
  std::size_t clip = 0, frame = 0;
  GradcheckOptions gc;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset container");
  gen_cfg.attach(gen);
  gen->add_option("--out", out, "output container")->required();
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--sequences", sequences, "clips per subject and action");

  auto* tr = app.add_subcommand("train", "train the encoder");
  train_cfg.attach(tr);
  tr->add_option("--data", data, "dataset container")->required();
  tr->add_option("--out", out, "checkpoint path (a .best sibling holds the best validation epoch)")->required();
  tr->add_option("--log", log, "CSV log (default: checkpoint path with .csv)");
  tr->add_option("--resume", resume, "continue from this checkpoint");
  tr->add_option("--seed", train_seed, "training seed (overrides train.seed)");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cfg.attach(ev);
  ev->add_option("--data", data, "dataset container")->required();
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--protocol", protocol, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  ev->add_option("--split", split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  ev->add_option("--report", report, "JSON report path (a .txt table is written next to it)");

  auto* gcmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  gcmd->add_option("--points", gc.points, "random points per op");
  gcmd->add_option("--seed", gc.seed, "seed");
  gcmd->add_option("--inject-fault", gc.inject_fault, "corrupt one op's gradient (self-test)");
  gcmd->add_option("--report", report, "JSON report path");

  auto* ab = app.add_subcommand("ablate", "loss-variant and window-size ablations");
  ablate_cfg.attach(ab);
  ab->add_option("--data", data, "dataset container")->required();
  ab->add_option("--report", report, "JSON report path (a .txt table is written next to it)");

  auto* rd = app.add_subcommand("render", "draw one frame as SVG");
  rd->add_option("--data", data, "dataset container")->required();
  rd->add_option("--ckpt", ckpt, "checkpoint for the prediction overlay");
  rd->add_option("--clip", clip, "clip index");
  rd->add_option("--frame", frame, "frame index");
  rd->add_option("--out", out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(gen_cfg, out, seed, sequences);
    if (tr->parsed()) return run_train(train_cfg, data, out, log, resume, train_seed);
    if (ev->parsed()) return run_eval(eval_cfg, data, ckpt, protocol, report, split);
    if (gcmd->parsed()) return run_gradcheck_cmd(gc, report);
    if (ab->parsed()) return run_ablate(ablate_cfg, data, report);
    if (rd->parsed()) return run_render(data, ckpt, clip, frame, out);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
