#include "spg/core/ops.hpp"

#include "spg/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spg {

namespace {

using ConstRowMap = Eigen::Map<const RowMatrixXd>;
using RowMap = Eigen::Map<RowMatrixXd>;
using ConstStridedRows = Eigen::Map<const RowMatrixXd, 0, Eigen::OuterStride<>>;
using StridedRows = Eigen::Map<RowMatrixXd, 0, Eigen::OuterStride<>>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                      shape_string(b));
}

std::size_t normalize_axis(const char* op, int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ContractError(std::string(op) + ": axis " + std::to_string(axis) +
                        " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, n, inner) extents.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& s, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t step = 1;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const std::size_t axis_in = s.size() - 1 - k;
    const std::size_t axis_out = rank - 1 - k;
    strides[axis_out] = s[axis_in] == 1 ? 0 : step;
    step *= s[axis_in];
  }
  return strides;
}

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    bc.out[rank - 1 - k] = std::max(da, db);
  }
  bc.stride_a = aligned_strides(a, bc.out);
  bc.stride_b = aligned_strides(b, bc.out);
  return bc;
}

template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t n = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += bc.stride_a[ax];
      ib += bc.stride_b[ax];
      if (idx[ax] < bc.out[ax]) break;
      ia -= bc.stride_a[ax] * bc.out[ax];
      ib -= bc.stride_b[ax] * bc.out[ax];
      idx[ax] = 0;
    }
  }
}

// Generic broadcasting binary op. `fwd(a, b)` computes the value; `da(a, b)` and
// `db(a, b)` the partial derivatives of the value w.r.t. each operand.
template <class Fwd, class Da, class Db>
DiffTensor binary(const char* op, const DiffTensor& a, const DiffTensor& b, Fwd fwd, Da da, Db db) {
  Broadcast bc = broadcast(op, a.shape(), b.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  Eigen::VectorXd out(static_cast<Eigen::Index>(shape_numel(bc.out)));
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[static_cast<Eigen::Index>(o)] = fwd(av[ia], bv[ib]);
  });
  auto an = a.node();
  auto bn = b.node();
  Shape out_shape = bc.out;
  return make_result(std::move(out_shape), std::move(out), op, {&a, &b},
                     [an, bn, bc = std::move(bc), da, db](const detail::Node& res) {
                       const double* g = res.grad.data();
                       const double* av = an->values.data();
                       const double* bv = bn->values.data();
                       if (an->requires_grad) {
                         double* ga = an->grad_buffer().data();
                         for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           ga[ia] += g[o] * da(av[ia], bv[ib]);
                         });
                       }
                       if (bn->requires_grad) {
                         double* gb = bn->grad_buffer().data();
                         for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           gb[ib] += g[o] * db(av[ia], bv[ib]);
                         });
                       }
                     });
}

template <class Fwd, class Dx>
DiffTensor unary(const char* op, const DiffTensor& x, Fwd fwd, Dx dx) {
  Eigen::VectorXd out = x.values().unaryExpr(fwd);
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), op, {&x}, [xn, dx](const detail::Node& res) {
    if (!xn->requires_grad) return;
    auto& gx = xn->grad_buffer();
    for (Eigen::Index i = 0; i < gx.size(); ++i) gx[i] += res.grad[i] * dx(xn->values[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

DiffTensor add(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

DiffTensor sub(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

DiffTensor mul(const DiffTensor& a, const DiffTensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

DiffTensor div(const DiffTensor& a, const DiffTensor& b) {
  const auto& bv = b.values();
  for (Eigen::Index i = 0; i < bv.size(); ++i) {
    if (bv[i] == 0.0) {
      throw DomainError("div: denominator element " + std::to_string(i) + " is exactly zero");
    }
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

DiffTensor add(const DiffTensor& a, double b) { return add(a, DiffTensor::scalar(b)); }

DiffTensor mul(const DiffTensor& a, double b) { return mul(a, DiffTensor::scalar(b)); }

DiffTensor clamp(const DiffTensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: min must not exceed max");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

DiffTensor abs(const DiffTensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

DiffTensor sqrt(const DiffTensor& x) {
  const auto& v = x.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) throw DomainError("sqrt: element " + std::to_string(i) + " is negative");
  }
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

DiffTensor square(const DiffTensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

DiffTensor relu(const DiffTensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// reductions and structure

DiffTensor sum_axis(const DiffTensor& x, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis("sum_axis", axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(v.outer * v.inner));
  const double* xv = x.values().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.n; ++k) {
      const double* row = xv + (o * v.n + k) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) out[static_cast<Eigen::Index>(o * v.inner + i)] += row[i];
    }
  }
  Shape shape = x.shape();
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  auto xn = x.node();
  return make_result(std::move(shape), std::move(out), "sum_axis", {&x}, [xn, v](const detail::Node& res) {
    if (!xn->requires_grad) return;
    double* gx = xn->grad_buffer().data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.n; ++k) {
        double* row = gx + (o * v.n + k) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) row[i] += res.grad[static_cast<Eigen::Index>(o * v.inner + i)];
      }
    }
  });
}

DiffTensor sum_all(const DiffTensor& x) {
  DiffTensor flat = reshape(x, {x.numel()});
  return sum_axis(flat, 0, false);
}

DiffTensor mean_all(const DiffTensor& x) {
  if (x.numel() == 0) throw ContractError("mean_all: empty tensor");
  return mul(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

DiffTensor concat(std::span<const DiffTensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis("concat", axis, first.size());
  std::vector<AxisView> views;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
    if (!ok) shape_mismatch("concat", first, s);
    views.push_back(axis_view(s, ax));
    total += s[ax];
  }
  Shape shape = first;
  shape[ax] = total;
  const AxisView ov = axis_view(shape, ax);
  Eigen::VectorXd out(static_cast<Eigen::Index>(shape_numel(shape)));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = views[p];
    const double* src = parts[p].values().data();
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(src + o * pv.n * pv.inner, pv.n * pv.inner,
                  out.data() + (o * ov.n + offset) * ov.inner);
    }
    offset += pv.n;
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());

  std::vector<const DiffTensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  auto adjoint = [nodes, views, ov](const detail::Node& res) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      const auto& pv = views[p];
      if (nodes[p]->requires_grad) {
        double* g = nodes[p]->grad_buffer().data();
        for (std::size_t o = 0; o < ov.outer; ++o) {
          const double* src = res.grad.data() + (o * ov.n + offset) * ov.inner;
          double* dst = g + o * pv.n * pv.inner;
          for (std::size_t i = 0; i < pv.n * pv.inner; ++i) dst[i] += src[i];
        }
      }
      offset += pv.n;
    }
  };
  return make_result(std::move(shape), std::move(out), "concat", ptrs, std::move(adjoint));
}

DiffTensor matmul(const DiffTensor& a, const DiffTensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.shape()[0]) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const auto k = static_cast<Eigen::Index>(b.shape()[0]);
  const auto m = static_cast<Eigen::Index>(b.shape()[1]);
  const auto n = static_cast<Eigen::Index>(a.numel()) / k;
  Eigen::VectorXd out(n * m);
  RowMap(out.data(), n, m).noalias() = ConstRowMap(a.values().data(), n, k) * ConstRowMap(b.values().data(), k, m);
  Shape shape = a.shape();
  shape.back() = static_cast<std::size_t>(m);
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(shape), std::move(out), "matmul", {&a, &b}, [an, bn, n, k, m](const detail::Node& res) {
    ConstRowMap g(res.grad.data(), n, m);
    if (an->requires_grad) {
      RowMap(an->grad_buffer().data(), n, k).noalias() += g * ConstRowMap(bn->values.data(), k, m).transpose();
    }
    if (bn->requires_grad) {
      RowMap(bn->grad_buffer().data(), k, m).noalias() += ConstRowMap(an->values.data(), n, k).transpose() * g;
    }
  });
}

DiffTensor reshape(const DiffTensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  auto xn = x.node();
  return make_result(std::move(shape), x.values(), "reshape", {&x}, [xn](const detail::Node& res) {
    if (xn->requires_grad) xn->accumulate(res.grad);
  });
}

DiffTensor slice(const DiffTensor& x, int axis, std::size_t start, std::size_t stop, std::size_t step) {
  const std::size_t ax = normalize_axis("slice", axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  if (step == 0 || start > stop || stop > v.n) {
    throw ContractError("slice: range [" + std::to_string(start) + ", " + std::to_string(stop) + ") step " +
                        std::to_string(step) + " invalid for shape " + shape_string(x.shape()));
  }
  std::vector<std::size_t> picks;
  for (std::size_t i = start; i < stop; i += step) picks.push_back(i);
  return gather(x, axis, picks);
}

DiffTensor gather(const DiffTensor& x, int axis, std::span<const std::size_t> indices) {
  const std::size_t ax = normalize_axis("gather", axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  for (auto i : indices) {
    if (i >= v.n) throw ContractError("gather: index " + std::to_string(i) + " out of range for " + shape_string(x.shape()));
  }
  std::vector<std::size_t> picks(indices.begin(), indices.end());
  Shape shape = x.shape();
  shape[ax] = picks.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(shape_numel(shape)));
  const double* xv = x.values().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < picks.size(); ++k) {
      std::copy_n(xv + (o * v.n + picks[k]) * v.inner, v.inner, out.data() + (o * picks.size() + k) * v.inner);
    }
  }
  auto xn = x.node();
  return make_result(std::move(shape), std::move(out), "gather", {&x}, [xn, v, picks](const detail::Node& res) {
    if (!xn->requires_grad) return;
    double* g = xn->grad_buffer().data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < picks.size(); ++k) {
        const double* src = res.grad.data() + (o * picks.size() + k) * v.inner;
        double* dst = g + (o * v.n + picks[k]) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

DiffTensor euclidean_norm_lastaxis(const DiffTensor& x, bool keepdim) {
  if (x.rank() == 0) throw ContractError("euclidean_norm_lastaxis: scalar input");
  const auto d = static_cast<Eigen::Index>(x.shape().back());
  const Eigen::Index rows = d == 0 ? 0 : static_cast<Eigen::Index>(x.numel()) / d;
  ConstRowMap xm(x.values().data(), rows, d);
  Eigen::VectorXd out = xm.rowwise().norm();
  Shape shape = x.shape();
  if (keepdim) {
    shape.back() = 1;
  } else {
    shape.pop_back();
  }
  auto xn = x.node();
  return make_result(std::move(shape), out, "euclidean_norm_lastaxis", {&x},
                     [xn, rows, d, out](const detail::Node& res) {
                       if (!xn->requires_grad) return;
                       RowMap g(xn->grad_buffer().data(), rows, d);
                       ConstRowMap xm(xn->values.data(), rows, d);
                       for (Eigen::Index r = 0; r < rows; ++r) {
                         if (out[r] > 0.0) g.row(r) += (res.grad[r] / out[r]) * xm.row(r);
                       }
                     });
}

// ---------------------------------------------------------------------------
// network layers

std::size_t conv1d_output_length(std::size_t input_length, std::size_t kernel, std::size_t dilation,
                                 std::size_t stride) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (kernel == 0 || stride == 0 || input_length < span) return 0;
  return (input_length - span) / stride + 1;
}

DiffTensor conv1d_dilated(const DiffTensor& x, const DiffTensor& weight, const DiffTensor* bias,
                          std::size_t dilation, std::size_t stride) {
  if (x.rank() != 3 || weight.rank() != 3 || weight.shape()[1] != x.shape()[2]) {
    shape_mismatch("conv1d_dilated", x.shape(), weight.shape());
  }
  const std::size_t batch = x.shape()[0], length = x.shape()[1], cin = x.shape()[2];
  const std::size_t kernel = weight.shape()[0], cout = weight.shape()[2];
  const bool has_bias = bias != nullptr && bias->rank() == 1;
  if (has_bias && bias->shape()[0] != cout) shape_mismatch("conv1d_dilated", weight.shape(), bias->shape());
  if (dilation == 0 || stride == 0) throw ContractError("conv1d_dilated: dilation and stride must be positive");
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (length < span) {
    throw ContractError("conv1d_dilated: input length " + std::to_string(length) +
                        " is shorter than the kernel span " + std::to_string(span));
  }
  const std::size_t lout = conv1d_output_length(length, kernel, dilation, stride);

  Eigen::VectorXd out(static_cast<Eigen::Index>(batch * lout * cout));
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  const auto co = static_cast<Eigen::Index>(cout);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      Eigen::Map<Eigen::VectorXd> orow(out.data() + (b * lout + t) * cout, co);
      if (has_bias) {
        orow = bias->values();
      } else {
        orow.setZero();
      }
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const double* xr = xv + (b * length + t * stride + tap * dilation) * cin;
        const double* wt = wv + tap * cin * cout;
        for (std::size_t c = 0; c < cin; ++c) {
          orow += xr[c] * Eigen::Map<const Eigen::VectorXd>(wt + c * cout, co);
        }
      }
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  std::shared_ptr<detail::Node> bn = has_bias ? bias->node() : nullptr;
  DiffTensor none;
  const DiffTensor* bias_ptr = has_bias ? bias : &none;
  auto adjoint = [xn, wn, bn, batch, length, cin, kernel, cout, lout, dilation, stride](const detail::Node& res) {
    const auto L = static_cast<Eigen::Index>(lout);
    const auto ci = static_cast<Eigen::Index>(cin);
    const auto co = static_cast<Eigen::Index>(cout);
    const double* g = res.grad.data();
    if (bn && bn->requires_grad) {
      bn->grad_buffer() += ConstRowMap(g, static_cast<Eigen::Index>(batch) * L, co).colwise().sum().transpose();
    }
    // When windows tile the input exactly, one tap touches rows spaced `stride`
    // apart across the whole batch and a single product covers every example.
    const bool uniform = length == stride * lout;
    const std::size_t groups = uniform ? 1 : batch;
    const auto rows = static_cast<Eigen::Index>(uniform ? batch * lout : lout);
    const auto row_stride = static_cast<Eigen::Index>(stride * cin);
    for (std::size_t tap = 0; tap < kernel; ++tap) {
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t x_off = (grp * length + tap * dilation) * cin;
        ConstRowMap gb(g + grp * lout * cout, rows, co);
        if (wn->requires_grad) {
          ConstStridedRows xt(xn->values.data() + x_off, rows, ci, Eigen::OuterStride<>(row_stride));
          RowMap(wn->grad_buffer().data() + tap * cin * cout, ci, co).noalias() += xt.transpose() * gb;
        }
        if (xn->requires_grad) {
          StridedRows gx(xn->grad_buffer().data() + x_off, rows, ci, Eigen::OuterStride<>(row_stride));
          gx.noalias() += gb * ConstRowMap(wn->values.data() + tap * cin * cout, ci, co).transpose();
        }
      }
    }
  };
  return make_result({batch, lout, cout}, std::move(out), "conv1d_dilated", {&x, &weight, bias_ptr},
                     std::move(adjoint));
}

DiffTensor batchnorm_1d(const DiffTensor& x, const DiffTensor& gamma, const DiffTensor& beta,
                        BatchNormStats& stats, bool training, BatchNormOptions options) {
  if (x.rank() < 1) throw ContractError("batchnorm_1d: scalar input");
  const auto c = static_cast<Eigen::Index>(x.shape().back());
  if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c) ||
      stats.running_mean.size() != c || stats.running_var.size() != c) {
    shape_mismatch("batchnorm_1d", x.shape(), gamma.shape());
  }
  const Eigen::Index n = c == 0 ? 0 : static_cast<Eigen::Index>(x.numel()) / c;
  if (training && n < 2) throw ContractError("batchnorm_1d: training mode needs at least two positions per channel");
  ConstRowMap xm(x.values().data(), n, c);

  Eigen::RowVectorXd mean, var;
  if (training) {
    mean = xm.colwise().mean();
    var = (xm.rowwise() - mean).array().square().colwise().mean();
    const double m = options.momentum;
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    stats.running_mean = (1.0 - m) * stats.running_mean + m * mean.transpose();
    stats.running_var = (1.0 - m) * stats.running_var + (m * unbias) * var.transpose();
  } else {
    mean = stats.running_mean.transpose();
    var = stats.running_var.transpose();
  }
  const Eigen::RowVectorXd inv_std = (var.array() + options.epsilon).rsqrt().matrix();
  const Eigen::RowVectorXd scale = inv_std.cwiseProduct(gamma.values().transpose());
  Eigen::VectorXd out(n * c);
  RowMap om(out.data(), n, c);
  om = ((xm.rowwise() - mean).array().rowwise() * scale.array()).rowwise() + beta.values().transpose().array();

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto adjoint = [xn, gn, bn, n, c, mean, inv_std, training](const detail::Node& res) {
    ConstRowMap dy(res.grad.data(), n, c);
    ConstRowMap xm(xn->values.data(), n, c);
    const RowMatrixXd xhat = (xm.rowwise() - mean).array().rowwise() * inv_std.array();
    if (bn->requires_grad) bn->grad_buffer() += dy.colwise().sum().transpose();
    if (gn->requires_grad) gn->grad_buffer() += dy.cwiseProduct(xhat).colwise().sum().transpose();
    if (!xn->requires_grad) return;
    const Eigen::RowVectorXd gamma = gn->values.transpose();
    const RowMatrixXd dxhat = dy.array().rowwise() * gamma.array();
    RowMap gx(xn->grad_buffer().data(), n, c);
    if (training) {
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
      const double inv_n = 1.0 / static_cast<double>(n);
      RowMatrixXd centered = (dxhat.rowwise() - sum_dxhat * inv_n) - (xhat.array().rowwise() * (sum_dxhat_xhat * inv_n).array()).matrix();
      gx += (centered.array().rowwise() * inv_std.array()).matrix();
    } else {
      gx += (dxhat.array().rowwise() * inv_std.array()).matrix();
    }
  };
  return make_result(x.shape(), std::move(out), "batchnorm_1d", {&x, &gamma, &beta}, std::move(adjoint));
}

DiffTensor dropout(const DiffTensor& x, double p, std::mt19937_64& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: rate must lie in [0, 1)");
  if (!training || p == 0.0) {
    auto xn = x.node();
    return make_result(x.shape(), x.values(), "dropout", {&x}, [xn](const detail::Node& res) {
      if (xn->requires_grad) xn->accumulate(res.grad);
    });
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  Eigen::VectorXd mask(x.values().size());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = uniform(rng) < p ? 0.0 : keep_scale;
  Eigen::VectorXd out = x.values().cwiseProduct(mask);
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "dropout", {&x}, [xn, mask](const detail::Node& res) {
    if (xn->requires_grad) xn->accumulate(res.grad.cwiseProduct(mask));
  });
}

}  // namespace spg
