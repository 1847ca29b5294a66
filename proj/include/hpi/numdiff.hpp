#pragma once

#include "hpi/types.hpp"

#include <algorithm>
#include <cmath>

namespace hpi::numdiff {

// Central-difference step for a point x: 1e-6 * max(1, |x|).
inline double step_for(const Vec& x) { return 1e-6 * std::max(1.0, x.norm()); }

/// Jacobian of f: R^n -> R^p at x by central differences.
template <class F>
Mat jacobian(const F& f, const Vec& x, double h) {
  const Vec f0 = f(x);
  Mat jac(f0.size(), x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const Vec fp = f(xp);
    xp(i) = x(i) - h;
    const Vec fm = f(xp);
    xp(i) = x(i);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

template <class F>
Mat jacobian(const F& f, const Vec& x) {
  return jacobian(f, x, step_for(x));
}

/// Derivative of a vector-valued function of a scalar.
template <class F>
Vec derivative(const F& f, double t, double h) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

template <class F>
Vec gradient(const F& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

template <class F>
Vec gradient(const F& f, const Vec& x) {
  return gradient(f, x, step_for(x));
}

/// Symmetric Hessian of a scalar function by second-order central differences.
/// Uses a coarser step than the first-derivative rule since the error scales with 1/h^2.
template <class F>
Mat hessian(const F& f, const Vec& x) {
  const double h = 1e-4 * std::max(1.0, x.norm());
  const Eigen::Index n = x.size();
  Mat hess(n, n);
  Vec xp = x;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      xp(i) = x(i) + h;
      xp(j) = x(j) + h;
      const double fpp = f(xp);
      xp(j) = x(j) - h;
      const double fpm = f(xp);
      xp(i) = x(i) - h;
      const double fmm = f(xp);
      xp(j) = x(j) + h;
      const double fmp = f(xp);
      xp(i) = x(i);
      xp(j) = x(j);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return hess;
}

}  // namespace hpi::numdiff
