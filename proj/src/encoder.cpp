#include "spg/encoder.hpp"

#include "spg/core/errors.hpp"

#include <cmath>
#include <numeric>

namespace spg {

namespace {

// R with k^(R+1) == J, or -1.
int connections_for(int window, int kernel) {
  if (kernel < 2 || window < kernel) return -1;
  long span = kernel;
  int r = 0;
  while (span < window) {
    span *= kernel;
    ++r;
  }
  return span == window ? r : -1;
}

}  // namespace

int EncoderConfig::residual_connections() const {
  const int r = connections_for(window, kernel);
  if (r < 0) validate();
  return r;
}

std::vector<int> EncoderConfig::dilations() const {
  std::vector<int> out;
  int d = 1;
  for (int i = 0; i < residual_connections(); ++i) {
    d *= kernel;
    out.push_back(d);
  }
  return out;
}

void EncoderConfig::validate() const {
  if (num_joints < 1) throw ConfigError("encoder.num_joints must be positive");
  if (channels < 1) throw ConfigError("encoder.channels must be positive");
  if (kernel < 3 || kernel % 2 == 0) throw ConfigError("encoder.kernel must be odd and at least 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder.dropout must lie in [0, 1)");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("encoder.bn_momentum must lie in (0, 1]");
  if (window % 2 == 0 || connections_for(window, kernel) < 0) {
    std::string valid;
    long span = kernel;
    for (int r = 0; r < 6; ++r, span *= kernel) {
      valid += (r ? ", " : "") + std::to_string(span) + " (R=" + std::to_string(r) + ")";
    }
    throw ConfigError("encoder.window " + std::to_string(window) + " is not a power of kernel " + std::to_string(kernel) +
                      "; valid windows: " + valid);
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"num_joints", num_joints}, {"window", window},   {"channels", channels},
          {"kernel", kernel},         {"dropout", dropout}, {"bn_momentum", bn_momentum}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_joints") c.num_joints = value.get<int>();
      else if (key == "window") c.window = value.get<int>();
      else if (key == "channels") c.channels = value.get<int>();
      else if (key == "kernel") c.kernel = value.get<int>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "bn_momentum") c.bn_momentum = value.get<double>();
      else throw ConfigError("unknown key encoder." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t EncoderModel::add_param(std::string name, DiffTensor t) {
  params_.push_back({std::move(name), std::move(t)});
  return params_.size() - 1;
}

EncoderModel::Block EncoderModel::add_block(const std::string& name, std::size_t kernel, std::size_t in, std::size_t out,
                                            std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(kernel * in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::VectorXd w(static_cast<Eigen::Index>(kernel * in * out));
  for (auto& v : w) v = u(rng);
  Block b;
  b.weight = add_param(name + ".conv.weight", DiffTensor({kernel, in, out}, std::move(w), true));
  b.gamma = add_param(name + ".bn.gamma", DiffTensor::full({out}, 1.0, true));
  b.beta = add_param(name + ".bn.beta", DiffTensor::zeros({out}, true));
  stats_.emplace_back(name + ".bn", BatchNormStats::fresh(out));
  b.stats = stats_.size() - 1;
  return b;
}

EncoderModel EncoderModel::build(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderModel m;
  m.config_ = config;
  m.dropout_rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 rng(seed);
  const auto k = static_cast<std::size_t>(config.kernel);
  const auto c = static_cast<std::size_t>(config.channels);
  const auto joints = static_cast<std::size_t>(config.num_joints);

  m.input_ = m.add_block("input", k, 2 * joints, c, rng);
  for (int i = 0; i < config.residual_connections(); ++i) {
    const std::string base = "residual." + std::to_string(i);
    Block wide = m.add_block(base + ".wide", k, c, c, rng);
    Block point = m.add_block(base + ".pointwise", 1, c, c, rng);
    m.residual_.emplace_back(wide, point);
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(c));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::VectorXd w(static_cast<Eigen::Index>(c * 3 * joints));
  for (auto& v : w) v = u(rng);
  m.out_weight_ = m.add_param("output.conv.weight", DiffTensor({1, c, 3 * joints}, std::move(w), true));
  m.out_bias_ = m.add_param("output.conv.bias", DiffTensor::zeros({3 * joints}, true));
  return m;
}

DiffTensor EncoderModel::apply_block(const DiffTensor& x, const Block& block, std::size_t dilation, std::size_t stride) {
  const DiffTensor conv = conv1d_dilated(x, params_[block.weight].tensor, nullptr, dilation, stride);
  const DiffTensor bn = batchnorm_1d(conv, params_[block.gamma].tensor, params_[block.beta].tensor,
                                     stats_[block.stats].second, training_, {config_.bn_momentum, 1e-5});
  return dropout(relu(bn), config_.dropout, dropout_rng_, training_);
}

DiffTensor EncoderModel::run(const DiffTensor& x, bool dilated) {
  const auto k = static_cast<std::size_t>(config_.kernel);
  DiffTensor h = apply_block(x, input_, 1, dilated ? 1 : k);
  std::size_t dilation = 1;
  for (const auto& [wide, point] : residual_) {
    dilation *= k;
    const std::size_t len = h.shape()[1];
    DiffTensor skip;
    DiffTensor body;
    if (dilated) {
      const std::size_t pad = (k - 1) * dilation / 2;
      skip = slice(h, 1, pad, len - pad);
      body = apply_block(h, wide, dilation, 1);
    } else {
      skip = slice(h, 1, (k - 1) / 2, len, k);
      body = apply_block(h, wide, 1, k);
    }
    h = skip + apply_block(body, point, 1, 1);
  }
  return conv1d_dilated(h, params_[out_weight_].tensor, &params_[out_bias_].tensor, 1, 1);
}

DiffTensor EncoderModel::forward_batch(const DiffTensor& windows) {
  const auto joints = static_cast<std::size_t>(config_.num_joints);
  const auto j = static_cast<std::size_t>(config_.window);
  if (windows.rank() != 4 || windows.shape()[1] != j || windows.shape()[2] != joints || windows.shape()[3] != 2) {
    throw ContractError("encoder: expected windows [B, " + std::to_string(j) + ", " + std::to_string(joints) +
                        ", 2], got " + shape_string(windows.shape()));
  }
  const std::size_t b = windows.shape()[0];
  const DiffTensor out = run(reshape(windows, {b, j, 2 * joints}), false);
  return reshape(out, {b, joints, 3});
}

DiffTensor EncoderModel::forward(const DiffTensor& window) {
  const auto joints = static_cast<std::size_t>(config_.num_joints);
  Shape batched{1};
  batched.insert(batched.end(), window.shape().begin(), window.shape().end());
  const DiffTensor out = forward_batch(reshape(window, batched));
  return reshape(out, {joints, 3});
}

DiffTensor EncoderModel::forward_sequence(const DiffTensor& frames) {
  const auto joints = static_cast<std::size_t>(config_.num_joints);
  if (frames.rank() != 3 || frames.shape()[1] != joints || frames.shape()[2] != 2 || frames.shape()[0] == 0) {
    throw ContractError("encoder: expected frames [T, " + std::to_string(joints) + ", 2], got " +
                        shape_string(frames.shape()));
  }
  const std::size_t t = frames.shape()[0];
  const std::size_t pad = static_cast<std::size_t>(config_.window - 1) / 2;
  const DiffTensor padded = replicate_pad(frames, pad);
  const DiffTensor out = run(reshape(padded, {1, t + 2 * pad, 2 * joints}), true);
  return reshape(out, {t, joints, 3});
}

std::vector<NamedStats> EncoderModel::batchnorm_stats() {
  std::vector<NamedStats> out;
  for (auto& [name, stats] : stats_) out.push_back({name, &stats});
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const NamedParameter& p) { return acc + p.tensor.numel(); });
}

EncoderModel EncoderModel::clone() const {
  EncoderModel m = *this;
  for (auto& p : m.params_) {
    const bool grad = p.tensor.requires_grad();
    p.tensor = p.tensor.detach();
    p.tensor.set_requires_grad(grad);
  }
  return m;
}

std::pair<DiffTensor, DiffTensor> split_output(const DiffTensor& prediction) {
  if (prediction.rank() < 1 || prediction.shape().back() != 3) {
    throw ContractError("split_output: expected [..., M, 3], got " + shape_string(prediction.shape()));
  }
  return {slice(prediction, -1, 0, 2), slice(prediction, -1, 2, 3)};
}

DiffTensor replicate_pad(const DiffTensor& frames, std::size_t pad) {
  const std::size_t t = frames.shape().at(0);
  std::vector<std::size_t> index;
  index.reserve(t + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) index.push_back(0);
  for (std::size_t i = 0; i < t; ++i) index.push_back(i);
  for (std::size_t i = 0; i < pad; ++i) index.push_back(t - 1);
  return gather(frames, 0, index);
}

}  // namespace spg
