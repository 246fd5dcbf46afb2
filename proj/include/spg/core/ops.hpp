#pragma once

#include "spg/core/diff_tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace spg {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Elementwise binary operations broadcast with trailing-axis alignment (the
// usual numpy rule). Gradients are reduced back onto each operand's shape.
DiffTensor add(const DiffTensor& a, const DiffTensor& b);
DiffTensor sub(const DiffTensor& a, const DiffTensor& b);
DiffTensor mul(const DiffTensor& a, const DiffTensor& b);
/// Throws DomainError if any broadcast denominator element is exactly zero.
DiffTensor div(const DiffTensor& a, const DiffTensor& b);

DiffTensor add(const DiffTensor& a, double b);
DiffTensor mul(const DiffTensor& a, double b);

inline DiffTensor operator+(const DiffTensor& a, const DiffTensor& b) { return add(a, b); }
inline DiffTensor operator-(const DiffTensor& a, const DiffTensor& b) { return sub(a, b); }
inline DiffTensor operator*(const DiffTensor& a, const DiffTensor& b) { return mul(a, b); }
inline DiffTensor operator/(const DiffTensor& a, const DiffTensor& b) { return div(a, b); }
inline DiffTensor operator+(const DiffTensor& a, double b) { return add(a, b); }
inline DiffTensor operator+(double a, const DiffTensor& b) { return add(b, a); }
inline DiffTensor operator*(const DiffTensor& a, double b) { return mul(a, b); }
inline DiffTensor operator*(double a, const DiffTensor& b) { return mul(b, a); }

DiffTensor sum_axis(const DiffTensor& x, int axis, bool keepdim = false);
DiffTensor sum_all(const DiffTensor& x);
DiffTensor mean_all(const DiffTensor& x);

DiffTensor concat(std::span<const DiffTensor> parts, int axis);
inline DiffTensor concat(std::initializer_list<DiffTensor> parts, int axis) {
  return concat(std::span<const DiffTensor>(parts.begin(), parts.size()), axis);
}

/// Gradient passes where lo <= x <= hi and is zero in the saturated region.
DiffTensor clamp(const DiffTensor& x, double lo, double hi);
/// Subgradient 0 at 0.
DiffTensor abs(const DiffTensor& x);
/// Requires x >= 0; gradient at exactly 0 is taken as 0.
DiffTensor sqrt(const DiffTensor& x);
DiffTensor square(const DiffTensor& x);
DiffTensor relu(const DiffTensor& x);

/// [..., n, k] x [k, m] -> [..., n, m]. Leading axes of `a` are flattened.
DiffTensor matmul(const DiffTensor& a, const DiffTensor& b);

/// Length of a valid (unpadded) dilated, strided convolution output.
std::size_t conv1d_output_length(std::size_t input_length, std::size_t kernel,
                                 std::size_t dilation, std::size_t stride = 1);

/// Valid 1-D convolution over time with channels-last layout.
///
///   x:      [batch, length, in_channels]
///   weight: [kernel, in_channels, out_channels]
///   bias:   [out_channels] or an empty (rank-0) tensor for no bias
///
/// out[b, t, :] = bias + sum_{tap, c} x[b, t*stride + tap*dilation, c] * weight[tap, c, :]
///
/// Each output element is accumulated in the same fixed order (bias, then taps,
/// then input channels) no matter how long the input is, so computing one output
/// from a strided window is bit-identical to computing it inside a long sequence.
DiffTensor conv1d_dilated(const DiffTensor& x, const DiffTensor& weight, const DiffTensor* bias,
                          std::size_t dilation, std::size_t stride = 1);

/// Running statistics owned by a batch-normalization layer.
struct BatchNormStats {
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;

  static BatchNormStats fresh(std::size_t channels) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels)),
            Eigen::VectorXd::Ones(static_cast<Eigen::Index>(channels))};
  }
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel normalization over every leading position of x [..., C].
/// Training mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate; eval mode uses running stats.
DiffTensor batchnorm_1d(const DiffTensor& x, const DiffTensor& gamma, const DiffTensor& beta,
                        BatchNormStats& stats, bool training, BatchNormOptions options = {});

/// Inverted dropout: scales kept activations by 1/(1-p) in training, identity otherwise.
DiffTensor dropout(const DiffTensor& x, double p, std::mt19937_64& rng, bool training);

/// [..., D] -> [...] (or [..., 1] with keepdim). Gradient at a zero vector is 0.
DiffTensor euclidean_norm_lastaxis(const DiffTensor& x, bool keepdim = false);

DiffTensor reshape(const DiffTensor& x, Shape shape);
/// Elements start, start+step, ... < stop along `axis`.
DiffTensor slice(const DiffTensor& x, int axis, std::size_t start, std::size_t stop,
                 std::size_t step = 1);
DiffTensor gather(const DiffTensor& x, int axis, std::span<const std::size_t> indices);

}  // namespace spg
