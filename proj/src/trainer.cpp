#include "spg/trainer.hpp"

#include "spg/core/errors.hpp"
#include "spg/core/ops.hpp"
#include "spg/evaluator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace spg {

namespace {

// Stream indices for mix_seed; distinct so shuffling and dropout never share draws.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

void snap_to_f32(Eigen::VectorXd& v) { v = v.cast<float>().cast<double>(); }

std::vector<float> to_floats(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return out;
}

void from_floats(const TensorRecord& rec, Eigen::VectorXd& dst) {
  if (static_cast<Eigen::Index>(rec.data.size()) != dst.size()) {
    throw FormatError("checkpoint tensor " + rec.name + " has " + std::to_string(rec.data.size()) + " values, expected " +
                          std::to_string(dst.size()),
                      0);
  }
  for (Eigen::Index i = 0; i < dst.size(); ++i) dst[i] = rec.data[static_cast<std::size_t>(i)];
}

double validation_mpjpe(const EncoderModel& model, const std::vector<const MotionClip*>& clips, const Skeleton& skel) {
  EvalOptions options;
  options.protocol2 = false;
  return evaluate(model, clips, skel, options).average.mpjpe_mm;
}

void append_log(const std::filesystem::path& path, const EpochRecord& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open training log " + path.string());
  if (fresh) out << kTrainLogHeader << '\n';
  char line[512];
  std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f,%.3f\n", r.epoch, r.lr, r.loss_total,
                r.loss_pose3d, r.loss_depth, r.loss_kc, r.loss_reproj, r.val_mpjpe_mm, r.seconds);
  out << line;
  out.flush();
  if (!out) throw IoError("cannot write training log " + path.string());
}

}  // namespace

double TrainConfig::learning_rate(int epoch) const { return lr0 * std::pow(lr_decay, epoch); }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1, got " + std::to_string(epochs));
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must be in (0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (stride < 1) throw ConfigError("train.stride must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must be in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
  loss.validate();
  encoder.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},   {"lr0", lr0},         {"lr_decay", lr_decay},         {"batch_size", batch_size},
          {"seed", seed},       {"stride", stride},   {"augment_flip", augment_flip}, {"beta1", adam.beta1},
          {"beta2", adam.beta2}, {"epsilon", adam.epsilon}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "lr_decay") c.lr_decay = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "stride") c.stride = value.get<int>();
      else if (key == "augment_flip") c.augment_flip = value.get<bool>();
      else if (key == "beta1") c.adam.beta1 = value.get<double>();
      else if (key == "beta2") c.adam.beta2 = value.get<double>();
      else if (key == "epsilon") c.adam.epsilon = value.get<double>();
      else throw ConfigError("unknown key train." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

AdamState AdamState::zeros_like(const std::vector<NamedParameter>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.tensor.numel())));
    s.v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.tensor.numel())));
  }
  return s;
}

void adam_step(std::vector<NamedParameter>& params, std::span<const Eigen::VectorXd> grads, AdamState& state,
               double lr, const AdamOptions& options) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(params[i].tensor.numel());
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      throw ContractError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!grads[i].allFinite()) throw NumericalError("non-finite gradient for parameter " + params[i].name);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::VectorXd& m = state.m[i];
    Eigen::VectorXd& v = state.v[i];
    m = options.beta1 * m + (1.0 - options.beta1) * grads[i];
    v = options.beta2 * v + (1.0 - options.beta2) * grads[i].cwiseProduct(grads[i]);
    Eigen::VectorXd& p = params[i].tensor.mutable_values();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options.epsilon);
  }
}

Checkpoint Checkpoint::fresh(const TrainConfig& config) {
  EncoderModel model = EncoderModel::build(config.encoder, config.seed);
  AdamState adam = AdamState::zeros_like(model.parameters());
  return {config, std::move(model), std::move(adam), 0, 0.0, 0.0, 0.0, ""};
}

ContainerData checkpoint_to_container(const Checkpoint& ckpt) {
  ContainerData c;
  c.metadata = {{"kind", "checkpoint"},
                {"epoch", ckpt.next_epoch},
                {"lr", ckpt.config.learning_rate(std::max(ckpt.next_epoch - 1, 0))},
                {"seed", ckpt.config.seed},
                {"adam_step", ckpt.adam.step},
                {"val_mpjpe_mm", ckpt.val_mpjpe_mm},
                {"best_val_mpjpe_mm", ckpt.best_val_mpjpe_mm},
                {"initial_val_mpjpe_mm", ckpt.initial_val_mpjpe_mm},
                {"dataset_hash", ckpt.dataset_hash},
                {"config",
                 {{"train", ckpt.config.to_json()}, {"loss", ckpt.config.loss.to_json()}, {"encoder", ckpt.config.encoder.to_json()}}}};
  EncoderModel model = ckpt.model;
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    c.add("param/" + p.name, p.tensor.shape(), to_floats(p.tensor.values()));
    if (i < ckpt.adam.m.size()) {
      c.add("adam/m/" + p.name, p.tensor.shape(), to_floats(ckpt.adam.m[i]));
      c.add("adam/v/" + p.name, p.tensor.shape(), to_floats(ckpt.adam.v[i]));
    }
  }
  for (const auto& s : model.batchnorm_stats()) {
    const Shape shape{static_cast<std::size_t>(s.stats->running_mean.size())};
    c.add("stats/" + s.name + ".running_mean", shape, to_floats(s.stats->running_mean));
    c.add("stats/" + s.name + ".running_var", shape, to_floats(s.stats->running_var));
  }
  return c;
}

Checkpoint checkpoint_from_container(const ContainerData& c) {
  const auto& meta = c.metadata;
  if (meta.value("kind", "") != "checkpoint") throw FormatError("container is not a checkpoint", 0);
  try {
    const auto& cfg = meta.at("config");
    TrainConfig config = TrainConfig::from_json(cfg.at("train"));
    config.loss = LossWeights::from_json(cfg.at("loss"));
    config.encoder = EncoderConfig::from_json(cfg.at("encoder"));
    Checkpoint ckpt = Checkpoint::fresh(config);
    ckpt.next_epoch = meta.at("epoch").get<int>();
    ckpt.val_mpjpe_mm = meta.at("val_mpjpe_mm").get<double>();
    ckpt.best_val_mpjpe_mm = meta.at("best_val_mpjpe_mm").get<double>();
    ckpt.initial_val_mpjpe_mm = meta.at("initial_val_mpjpe_mm").get<double>();
    ckpt.dataset_hash = meta.at("dataset_hash").get<std::string>();
    auto& params = ckpt.model.parameters();
    ckpt.adam.step = meta.at("adam_step").get<std::int64_t>();
    for (std::size_t i = 0; i < params.size(); ++i) {
      from_floats(c.at("param/" + params[i].name), params[i].tensor.mutable_values());
      if (const TensorRecord* m = c.find("adam/m/" + params[i].name)) from_floats(*m, ckpt.adam.m[i]);
      if (const TensorRecord* v = c.find("adam/v/" + params[i].name)) from_floats(*v, ckpt.adam.v[i]);
    }
    for (const auto& s : ckpt.model.batchnorm_stats()) {
      from_floats(c.at("stats/" + s.name + ".running_mean"), s.stats->running_mean);
      from_floats(c.at("stats/" + s.name + ".running_var"), s.stats->running_var);
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what(), 0);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_container(path, checkpoint_to_container(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_container(read_container(path)); }

TrainResult train(const std::vector<const MotionClip*>& train_clips, const std::vector<const MotionClip*>& val_clips,
                  const Skeleton& skel, const TrainConfig& config, const TrainIo& io) {
  config.validate();
  if (config.encoder.num_joints != skel.num_joints()) {
    throw ConfigError("encoder.num_joints is " + std::to_string(config.encoder.num_joints) + " but the skeleton has " +
                      std::to_string(skel.num_joints()) + " joints");
  }
  if (val_clips.empty()) throw ContractError("train: no validation clips");
  const WindowSet windows(train_clips, skel, {config.encoder.window, config.stride, config.augment_flip});
  if (windows.size() == 0) throw ContractError("train: no training windows");

  Checkpoint state = io.resume ? *io.resume : Checkpoint::fresh(config);
  if (io.resume) {
    if (!(state.config.encoder == config.encoder)) throw ConfigError("resume: encoder config differs from checkpoint");
    state.config = config;
  } else {
    state.dataset_hash = io.dataset_hash;
    state.initial_val_mpjpe_mm = validation_mpjpe(state.model, val_clips, skel);
    state.val_mpjpe_mm = state.initial_val_mpjpe_mm;
    state.best_val_mpjpe_mm = std::numeric_limits<double>::infinity();
  }
  EncoderModel& model = state.model;
  auto& params = model.parameters();
  const auto b = static_cast<std::size_t>(config.batch_size);
  const auto m = static_cast<std::size_t>(skel.num_joints());

  TrainResult result{state, {}};
  for (int epoch = state.next_epoch; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = config.learning_rate(epoch);
    model.set_training(true);
    model.reseed_dropout(mix_seed(config.seed ^ kDropoutStream, static_cast<std::uint64_t>(epoch)));
    const std::vector<std::size_t> order = windows.shuffled(mix_seed(config.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch)));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t seen = 0;
    std::vector<Eigen::VectorXd> grads(params.size());
    for (std::size_t first = 0, batch = 0; first < order.size(); first += b, ++batch) {
      const std::span<const std::size_t> idx(order.data() + first, std::min(b, order.size() - first));
      const WindowBatch wb = windows.assemble(idx);
      for (auto& p : params) p.tensor.zero_grad();
      LossBreakdown loss;
      {
        Tape tape;
        const DiffTensor pred = reshape(model.forward_batch(wb.inputs), {wb.size(), 2, m, 3});
        loss = total_loss(pred, wb.targets, wb.cameras, wb.pixels, skel, config.loss);
        if (!std::isfinite(loss.total)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch));
        }
        tape.backward(loss.objective);
      }
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = params[i].tensor.grad();
      try {
        adam_step(params, grads, state.adam, lr, config.adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch));
      }
      const auto n = static_cast<double>(idx.size());
      rec.loss_total += n * loss.total;
      rec.loss_pose3d += n * loss.pose3d_mpjpe;
      rec.loss_depth += n * loss.depth_wmpjpe;
      rec.loss_kc += n * loss.kinematic;
      rec.loss_reproj += n * loss.reproj_mpjpe;
      seen += idx.size();
    }
    for (double* v : {&rec.loss_total, &rec.loss_pose3d, &rec.loss_depth, &rec.loss_kc, &rec.loss_reproj}) {
      *v /= static_cast<double>(seen);
    }

    // Round the persistent state to what a checkpoint stores, so resuming is exact.
    for (auto& p : params) snap_to_f32(p.tensor.mutable_values());
    for (auto& s : model.batchnorm_stats()) {
      snap_to_f32(s.stats->running_mean);
      snap_to_f32(s.stats->running_var);
    }
    for (auto& v : state.adam.m) snap_to_f32(v);
    for (auto& v : state.adam.v) snap_to_f32(v);

    rec.val_mpjpe_mm = validation_mpjpe(model, val_clips, skel);
    state.next_epoch = epoch + 1;
    state.val_mpjpe_mm = rec.val_mpjpe_mm;
    const bool best = rec.val_mpjpe_mm < state.best_val_mpjpe_mm;
    if (best) state.best_val_mpjpe_mm = rec.val_mpjpe_mm;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!io.checkpoint.empty()) save_checkpoint(io.checkpoint, state);
    if (best && !io.best_checkpoint.empty()) save_checkpoint(io.best_checkpoint, state);
    if (!io.log.empty()) append_log(io.log, rec);
    result.history.push_back(rec);
    if (io.on_epoch) io.on_epoch(rec);
  }
  model.set_training(false);
  result.final_state = state;
  return result;
}

std::pair<std::vector<const MotionClip*>, std::vector<const MotionClip*>> split_dataset(const Dataset& data) {
  std::vector<int> test;
  if (data.generator.is_object() && data.generator.contains("test_subjects")) {
    test = data.generator.at("test_subjects").get<std::vector<int>>();
  }
  return {data.select(test, false), data.select(test, true)};
}

}  // namespace spg
