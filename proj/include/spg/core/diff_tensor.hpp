#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace spg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct Node {
  Shape shape;
  Eigen::VectorXd values;
  Eigen::VectorXd grad;  // empty until first touched
  bool requires_grad = false;
  bool is_leaf = true;
  const Tape* tape = nullptr;
  std::size_t tape_index = 0;

  // Accumulates `delta` into grad, allocating on first use.
  void accumulate(const Eigen::Ref<const Eigen::VectorXd>& delta);
  Eigen::VectorXd& grad_buffer();
};

}  // namespace detail

/// Dense row-major f64 tensor participating in reverse-mode differentiation.
///
/// A DiffTensor is a cheap handle; copies alias the same storage, which is what
/// lets parameters keep their gradient buffer across tape lifetimes. Values are
/// never modified by operations; only optimizers write through mutable_values().
class DiffTensor {
 public:
  DiffTensor();
  DiffTensor(Shape shape, Eigen::VectorXd values, bool requires_grad = false);

  static DiffTensor zeros(Shape shape, bool requires_grad = false);
  static DiffTensor full(Shape shape, double value, bool requires_grad = false);
  static DiffTensor scalar(double value, bool requires_grad = false);
  static DiffTensor from(Shape shape, std::initializer_list<double> values,
                         bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(int axis) const;
  std::size_t numel() const { return static_cast<std::size_t>(node_->values.size()); }

  const Eigen::VectorXd& values() const { return node_->values; }
  Eigen::VectorXd& mutable_values() { return node_->values; }
  double operator[](std::size_t i) const { return node_->values[static_cast<Eigen::Index>(i)]; }
  double at(std::initializer_list<std::size_t> index) const;
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient buffer; zeros of the right shape if nothing was accumulated yet.
  Eigen::VectorXd grad() const;
  void zero_grad();

  /// Fresh leaf tensor with copied values and no history.
  DiffTensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit DiffTensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend DiffTensor make_result(Shape, Eigen::VectorXd, const char*,
                                const std::vector<const DiffTensor*>&,
                                std::function<void(const detail::Node&)>);
};

/// Ordered record of primitive operations executed while the tape is active.
///
/// Constructing a Tape makes it the active recorder for the current thread until
/// it is destroyed; tapes nest. Operations whose inputs require gradients are
/// appended in execution order, which is a topological order by construction.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
  /// interior gradients are recomputed on every call.
  void backward(const DiffTensor& root);

  std::size_t size() const { return entries_.size(); }
  const std::string& op_name(std::size_t i) const { return entries_[i].op; }
  /// Number of entries whose adjoint ran during the last backward().
  std::size_t last_visited() const { return last_visited_; }

  static Tape* active();

 private:
  struct Entry {
    std::string op;
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::function<void(const detail::Node&)> adjoint;
  };

  std::vector<Entry> entries_;
  std::size_t last_visited_ = 0;
  Tape* previous_ = nullptr;

  friend DiffTensor make_result(Shape, Eigen::VectorXd, const char*,
                                const std::vector<const DiffTensor*>&,
                                std::function<void(const detail::Node&)>);
};

/// Builds an operation result and, when any input requires gradients and a tape
/// is active, records `adjoint` (called with the output node, whose grad holds
/// dRoot/dOutput) on that tape.
DiffTensor make_result(Shape shape, Eigen::VectorXd values, const char* op,
                       const std::vector<const DiffTensor*>& inputs,
                       std::function<void(const detail::Node&)> adjoint);

}  // namespace spg
