#pragma once

#include "spg/core/diff_tensor.hpp"
#include "spg/core/ops.hpp"

#include "json.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace spg {

struct EncoderConfig {
  int num_joints = 17;
  int window = 27;     // J, frames
  int channels = 128;  // C
  int kernel = 3;      // k
  double dropout = 0.25;
  double bn_momentum = 0.1;

  /// R such that k^(R+1) == J.
  int residual_connections() const;
  /// Temporal dilation of each residual connection's wide convolution: k, k^2, ..., k^R.
  std::vector<int> dilations() const;
  /// Throws ConfigError for even/invalid windows, listing the windows the kernel supports.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  DiffTensor tensor;
};

struct NamedStats {
  std::string name;
  BatchNormStats* stats;
};

/// Temporal convolutional lifting network.
///
/// input conv (2M -> C, width k) then R residual connections, each a width-k
/// block at growing dilation followed by a pointwise block (conv, batchnorm,
/// relu, dropout), with the skip path cropped to the temporal center; finally a
/// pointwise output conv (C -> 3M). A J-frame window yields one frame.
///
/// Copies share parameter storage; use clone() for an independent model.
class EncoderModel {
 public:
  static EncoderModel build(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  /// [J, M, 2] normalized window -> [M, 3] prediction for its center frame.
  DiffTensor forward(const DiffTensor& window);
  /// [B, J, M, 2] -> [B, M, 3].
  DiffTensor forward_batch(const DiffTensor& windows);
  /// [T, M, 2] -> [T, M, 3]: replicate-pads (J-1)/2 frames at both ends and runs
  /// the network convolutionally. In eval mode, each frame equals forward() on the
  /// matching padded window bit for bit.
  DiffTensor forward_sequence(const DiffTensor& frames);

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedStats> batchnorm_stats();
  std::size_t parameter_count() const;

  EncoderModel clone() const;

 private:
  struct Block {
    std::size_t weight, gamma, beta;  // indices into params_
    std::size_t stats;                // index into stats_
  };

  EncoderModel() = default;
  // dilated: true runs the sequence form; false the strided single-output form.
  DiffTensor run(const DiffTensor& x, bool dilated);
  DiffTensor apply_block(const DiffTensor& x, const Block& block, std::size_t dilation, std::size_t stride);
  Block add_block(const std::string& name, std::size_t kernel, std::size_t in, std::size_t out, std::mt19937_64& rng);
  std::size_t add_param(std::string name, DiffTensor t);

  EncoderConfig config_;
  bool training_ = true;
  std::vector<NamedParameter> params_;
  std::vector<std::pair<std::string, BatchNormStats>> stats_;
  Block input_{};
  std::vector<std::pair<Block, Block>> residual_;  // (wide, pointwise)
  std::size_t out_weight_ = 0, out_bias_ = 0;
  std::mt19937_64 dropout_rng_;
};

/// [..., M, 3] -> ([..., M, 2], [..., M, 1]); concat along the last axis inverts it.
std::pair<DiffTensor, DiffTensor> split_output(const DiffTensor& prediction);

/// [T, M, C] -> [T + 2*pad, M, C] repeating the first and last frames.
DiffTensor replicate_pad(const DiffTensor& frames, std::size_t pad);

}  // namespace spg
