#pragma once

// Central finite differences, kept separate from the library's own gradient
// checker so tests have an independent oracle.

#include "spg/core/diff_tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <random>

namespace spg::testing {

inline Eigen::VectorXd central_difference(const std::function<double()>& f, DiffTensor& t,
                                          double h = 1e-6) {
  Eigen::VectorXd out(t.values().size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double saved = t.mutable_values()[i];
    t.mutable_values()[i] = saved + h;
    const double up = f();
    t.mutable_values()[i] = saved - h;
    const double down = f();
    t.mutable_values()[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>(), 1e-8});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

inline DiffTensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(shape_numel(shape)));
  for (auto& x : v) x = u(rng);
  return DiffTensor(std::move(shape), std::move(v), requires_grad);
}

// Values in [lo, hi] kept at least `margin` away from each kink.
inline DiffTensor random_away_from(Shape shape, std::mt19937_64& rng, std::initializer_list<double> kinks,
                                   double lo, double hi, double margin = 1e-3) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(shape_numel(shape)));
  for (auto& x : v) {
    bool ok = false;
    while (!ok) {
      x = u(rng);
      ok = std::all_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) > margin; });
    }
  }
  return DiffTensor(std::move(shape), std::move(v), true);
}

}  // namespace spg::testing
