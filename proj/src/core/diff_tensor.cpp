#include "spg/core/diff_tensor.hpp"

#include "spg/core/errors.hpp"

#include <sstream>

namespace spg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Eigen::VectorXd& Node::grad_buffer() {
  if (grad.size() != values.size()) grad = Eigen::VectorXd::Zero(values.size());
  return grad;
}

void Node::accumulate(const Eigen::Ref<const Eigen::VectorXd>& delta) {
  grad_buffer() += delta;
}

}  // namespace detail

DiffTensor::DiffTensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {};
  node_->values = Eigen::VectorXd::Zero(1);
}

DiffTensor::DiffTensor(Shape shape, Eigen::VectorXd values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != static_cast<std::size_t>(values.size())) {
    throw ContractError("DiffTensor: shape " + shape_string(shape) + " holds " +
                        std::to_string(shape_numel(shape)) + " elements, got " +
                        std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

DiffTensor DiffTensor::zeros(Shape shape, bool requires_grad) {
  auto n = static_cast<Eigen::Index>(shape_numel(shape));
  return DiffTensor(std::move(shape), Eigen::VectorXd::Zero(n), requires_grad);
}

DiffTensor DiffTensor::full(Shape shape, double value, bool requires_grad) {
  auto n = static_cast<Eigen::Index>(shape_numel(shape));
  return DiffTensor(std::move(shape), Eigen::VectorXd::Constant(n, value), requires_grad);
}

DiffTensor DiffTensor::scalar(double value, bool requires_grad) {
  return DiffTensor({}, Eigen::VectorXd::Constant(1, value), requires_grad);
}

DiffTensor DiffTensor::from(Shape shape, std::initializer_list<double> values,
                            bool requires_grad) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return DiffTensor(std::move(shape), std::move(v), requires_grad);
}

std::size_t DiffTensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ContractError("dim: axis " + std::to_string(axis) + " out of range for shape " +
                        shape_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

double DiffTensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw ContractError("at: index rank " + std::to_string(index.size()) +
                        " does not match shape " + shape_string(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape()[axis]) throw ContractError("at: index out of range for " + shape_string(shape()));
    flat = flat * shape()[axis] + i;
    ++axis;
  }
  return (*this)[flat];
}

double DiffTensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->values[0];
}

void DiffTensor::set_requires_grad(bool on) { node_->requires_grad = on; }

Eigen::VectorXd DiffTensor::grad() const {
  if (node_->grad.size() == 0) return Eigen::VectorXd::Zero(node_->values.size());
  return node_->grad;
}

void DiffTensor::zero_grad() { node_->grad.resize(0); }

DiffTensor DiffTensor::detach() const { return DiffTensor(shape(), values(), false); }

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const DiffTensor& root) {
  const auto& node = root.node();
  if (node->values.size() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " + shape_string(node->shape));
  }
  last_visited_ = 0;
  if (!node->requires_grad) return;
  if (node->is_leaf) {
    node->accumulate(Eigen::VectorXd::Ones(1));
    return;
  }
  if (node->tape != this) throw ContractError("backward: root was not recorded on this tape");

  const std::size_t root_index = node->tape_index;
  for (std::size_t i = 0; i <= root_index; ++i) entries_[i].output->grad.resize(0);
  node->grad = Eigen::VectorXd::Ones(1);

  for (std::size_t i = root_index + 1; i-- > 0;) {
    const auto& e = entries_[i];
    if (e.output->grad.size() == 0) continue;  // unreachable from root
    e.adjoint(*e.output);
    ++last_visited_;
  }
}

DiffTensor make_result(Shape shape, Eigen::VectorXd values, const char* op,
                       const std::vector<const DiffTensor*>& inputs,
                       std::function<void(const detail::Node&)> adjoint) {
  DiffTensor out(std::move(shape), std::move(values), false);
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  bool any = false;
  for (const DiffTensor* in : inputs) any = any || in->requires_grad();
  if (!any) return out;

  auto& node = out.node_;
  node->requires_grad = true;
  node->is_leaf = false;
  node->tape = tape;
  node->tape_index = tape->entries_.size();

  Tape::Entry entry;
  entry.op = op;
  entry.output = node;
  for (const DiffTensor* in : inputs) entry.inputs.push_back(in->node());
  entry.adjoint = std::move(adjoint);
  tape->entries_.push_back(std::move(entry));
  return out;
}

}  // namespace spg
