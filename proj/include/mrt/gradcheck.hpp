#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "mrt/tensor.hpp"

namespace mrt {

// Central-difference gradient check. `f` maps (tape, x) to a scalar tensor;
// it must be deterministic. Returns max over checked coordinates of
// |analytic - numeric| / max(1, |numeric|). Run this with T = double only;
// float lacks the headroom for central differences.
//
// `coords` optionally restricts the check to a subset of coordinates (useful
// for end-to-end network checks where x is large). Empty = all coordinates.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(Tape<T>*, Tensor<T>&)>& f, Tensor<T>& x,
                         double eps = 1e-5, std::vector<std::size_t> coords = {}) {
  static_assert(sizeof(T) >= 8, "finite_diff_check requires 64-bit precision");
  x.set_requires_grad(true);
  x.zero_grad();

  Tape<T> tape;
  Tensor<T> y = f(&tape, x);
  if (!y.is_scalar()) throw std::invalid_argument("finite_diff_check: f must return a scalar");
  tape.backward(y);
  const std::vector<T> analytic = x.grad();

  if (coords.empty()) {
    coords.resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) coords[i] = i;
  }

  double max_err = 0.0;
  for (std::size_t i : coords) {
    const T saved = x.at(i);
    x.at(i) = saved + static_cast<T>(eps);
    const double fp = static_cast<double>(f(nullptr, x).item());
    x.at(i) = saved - static_cast<T>(eps);
    const double fm = static_cast<double>(f(nullptr, x).item());
    x.at(i) = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<double>::infinity();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err =
        std::abs(static_cast<double>(analytic[i]) - numeric) / std::max(1.0, std::abs(numeric));
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace mrt
