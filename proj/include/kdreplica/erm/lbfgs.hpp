#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace kdreplica {

struct LbfgsOptions {
  int memory = 10;
  int max_iters = 2000;
  /// Stop when the convergence measure returned by the caller drops below
  /// this value.
  double grad_tol = 1e-8;
};

struct LbfgsResult {
  int iterations = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

namespace detail {

/// Line search along d for a smooth convex function. Accepts a point that
/// satisfies the strong Wolfe conditions, or the approximate Wolfe conditions
/// of Hager and Zhang once function differences reach round-off level.
/// Returns the accepted step, or 0 if none was found.
template <class F>
double wolfe_search(F& fg, const Eigen::VectorXd& x, double f0, double dphi0,
                    const Eigen::VectorXd& d, double t, Eigen::VectorXd& x_out,
                    double& f_out, Eigen::VectorXd& g_out) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  constexpr double eps_f = 1e-12;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double dlo = dphi0, dhi = 0.0;
  for (int k = 0; k < 60; ++k) {
    x_out = x + t * d;
    f_out = fg(x_out, g_out);
    const double dphi = g_out.dot(d);
    const bool finite = std::isfinite(f_out) && std::isfinite(dphi);
    const bool decrease =
        finite && (f_out <= f0 + c1 * t * dphi0 ||
                   f_out <= f0 + eps_f * std::abs(f0));
    if (!decrease) {
      hi = t;
      dhi = finite ? dphi : 0.0;
    } else if (dphi < c2 * dphi0) {
      lo = t;
      dlo = dphi;
    } else if (dphi > -c2 * dphi0) {
      hi = t;
      dhi = dphi;
    } else {
      return t;
    }
    if (std::isfinite(hi)) {
      // Secant on the (monotone) directional derivative, kept away from the
      // bracket ends.
      double next = 0.5 * (lo + hi);
      if (dhi > 0 && dlo < 0) next = lo + (hi - lo) * dlo / (dlo - dhi);
      const double w = hi - lo;
      if (w <= 1e-16 * std::max(1.0, hi)) break;
      t = std::clamp(next, lo + 0.1 * w, hi - 0.1 * w);
    } else {
      t *= 4.0;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Limited-memory BFGS for smooth convex problems. `fg(x, g)` returns f(x)
/// and writes the gradient into g; `measure(x, g)` returns the quantity
/// compared against grad_tol (typically a max-norm of the gradient in the
/// caller's natural coordinates). x is updated in place.
template <class F, class Measure>
LbfgsResult lbfgs_minimize(F&& fg, Measure&& measure, Eigen::VectorXd& x,
                           const LbfgsOptions& opt = {}) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n), x_new(n), g_new(n);
  double f = fg(x, g);
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult res;
  res.grad_norm = measure(x, g);
  bool restarted = false;

  for (int it = 0; it < opt.max_iters; ++it) {
    if (res.grad_norm <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd d = -g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (a[i] - beta) * s_hist[i];
    }
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0)) {
      d = -g;
      dphi0 = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    const double t0 = s_hist.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
    double f_new = f;
    const double t =
        detail::wolfe_search(fg, x, f, dphi0, d, t0, x_new, f_new, g_new);
    res.iterations = it + 1;
    if (t == 0.0) {
      // No acceptable step: retry once from steepest descent, then give up.
      if (restarted || s_hist.empty()) break;
      restarted = true;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    restarted = false;
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    res.grad_norm = measure(x, g);
  }
  if (res.grad_norm <= opt.grad_tol) res.converged = true;
  res.value = f;
  return res;
}

}  // namespace kdreplica
