#pragma once

#include "spg/dataset.hpp"
#include "spg/encoder.hpp"
#include "spg/losses.hpp"
#include "spg/windows.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spg {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int epochs = 20;
  double lr0 = 1e-3;
  double lr_decay = 0.95;  // per epoch
  int batch_size = 128;    // samples; each carries a pair of windows
  std::uint64_t seed = 0;
  int stride = 1;
  bool augment_flip = true;
  LossWeights loss;
  EncoderConfig encoder;
  AdamOptions adam;

  /// lr0 * lr_decay^epoch, epochs counted from 0.
  double learning_rate(int epoch) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
  std::vector<Eigen::VectorXd> m, v;
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<NamedParameter>& params);
};

/// One bias-corrected Adam update in place. Throws NumericalError naming the
/// first parameter whose gradient is not finite, before touching anything.
void adam_step(std::vector<NamedParameter>& params, std::span<const Eigen::VectorXd> grads, AdamState& state,
               double lr, const AdamOptions& options = {});

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0, loss_pose3d = 0.0, loss_depth = 0.0, loss_kc = 0.0, loss_reproj = 0.0;
  double val_mpjpe_mm = 0.0;
  double seconds = 0.0;
};

struct Checkpoint {
  TrainConfig config;
  EncoderModel model;
  AdamState adam;
  int next_epoch = 0;  // epochs completed
  double val_mpjpe_mm = 0.0;
  double best_val_mpjpe_mm = 0.0;
  double initial_val_mpjpe_mm = 0.0;
  std::string dataset_hash;

  /// Untrained state: model built from config.encoder and config.seed, zero moments.
  static Checkpoint fresh(const TrainConfig& config);
};

ContainerData checkpoint_to_container(const Checkpoint& ckpt);
Checkpoint checkpoint_from_container(const ContainerData& container);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainIo {
  std::filesystem::path checkpoint;       // rewritten after every epoch; empty to skip
  std::filesystem::path best_checkpoint;  // best validation MPJPE so far; empty to skip
  std::filesystem::path log;              // CSV, header written when the file is new
  std::optional<Checkpoint> resume;       // continue from this state
  std::string dataset_hash;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint final_state;
  std::vector<EpochRecord> history;  // epochs run in this call
};

/// Trains on `train` clips and validates on `val` (Protocol 1, root-relative, mm).
/// Deterministic in (data, config): shuffling and dropout draw from per-epoch
/// streams of the seed, and all state is rounded to f32 at epoch end so a run
/// resumed from a checkpoint matches an uninterrupted one bit for bit.
/// A non-finite loss throws NumericalError naming epoch and batch; checkpoints
/// from completed epochs are left in place.
TrainResult train(const std::vector<const MotionClip*>& train_clips, const std::vector<const MotionClip*>& val_clips,
                  const Skeleton& skel, const TrainConfig& config, const TrainIo& io = {});

/// Train/validation clips by the generator's test-subject list (empty validation
/// if the dataset does not carry one).
std::pair<std::vector<const MotionClip*>, std::vector<const MotionClip*>> split_dataset(const Dataset& data);

inline constexpr const char* kTrainLogHeader =
    "epoch,lr,loss_total,loss_pose3d,loss_depth,loss_kc,loss_reproj,val_mpjpe_mm,seconds";

}  // namespace spg
