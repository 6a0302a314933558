#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kdreplica/core/losses.hpp"
#include "kdreplica/core/params.hpp"

namespace kdreplica {

/// Raised when the safeguarded 1D solve fails; the message carries the inputs.
class ProxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solution of max_u -u^2/2 - loss(v u + omega).
struct ProxResult {
  double u_star = 0.0;
  double value = 0.0;
  double h = 0.0;   // preactivation at the optimum, v u* + omega
  double g = 0.0;   // -loss'(h) = u* / v
  double dg = 0.0;  // d g / d omega = -loss'' / (1 + v^2 loss'')
  int iterations = 0;
};

/// Generic proximal solve for any scalar loss with `jet(y, teacher_h, s)` and
/// `slope_bound()`. Works in h = v u + omega, where the optimality condition
///   F(h) = (h - omega) / v^2 + loss'(h) = 0
/// is strictly increasing and its root lies in [omega - v^2 L, omega + v^2 L]
/// for |loss'| <= L. Newton steps are kept inside that bracket by bisection.
/// `h_guess` (if finite) seeds the iteration.
template <class Loss>
ProxResult prox_solve(const Loss& loss, double y, double teacher_h,
                      double omega, double v_scale,
                      double h_guess = std::numeric_limits<double>::quiet_NaN()) {
  if (!(v_scale > 0.0) || !std::isfinite(v_scale) || !std::isfinite(omega)) {
    std::ostringstream os;
    os << "prox: invalid inputs v_scale=" << v_scale << " omega=" << omega;
    throw ProxError(os.str());
  }
  const double var = v_scale * v_scale;
  const double reach = var * loss.slope_bound();
  double lo = omega - reach;
  double hi = omega + reach;
  double h = (std::isfinite(h_guess) && h_guess > lo && h_guess < hi)
                 ? h_guess
                 : omega;

  constexpr int kMaxIter = 200;
  int it = 0;
  double prev_step = hi - lo;
  LossJet j = loss.jet(y, teacher_h, h);
  for (; it < kMaxIter; ++it) {
    const double f = (h - omega) / var + j.d1;
    // Residual of the stationarity condition in u units.
    const double resid = v_scale * f;
    const double u = -v_scale * j.d1;
    if (std::abs(resid) <= 1e-13 * std::max(1.0, std::abs(u))) break;
    if (f > 0) hi = h; else lo = h;
    if (!(hi > lo)) break;

    // Newton, unless it leaves the bracket or fails to halve the previous
    // step (the ping-pong seen when the loss saturates); then bisect.
    double next = h - f / (1.0 / var + j.d2);
    if (!(next > lo && next < hi) ||
        std::abs(next - h) > 0.5 * prev_step) {
      next = 0.5 * (lo + hi);
    }
    if (next == h) break;
    prev_step = std::abs(next - h);
    h = next;
    j = loss.jet(y, teacher_h, h);
  }
  if (it == kMaxIter) {
    std::ostringstream os;
    os.precision(17);
    os << "prox: no convergence (y=" << y << " teacher_h=" << teacher_h
       << " omega=" << omega << " v_scale=" << v_scale << ")";
    throw ProxError(os.str());
  }

  ProxResult r;
  r.h = h;
  r.g = -j.d1;
  r.u_star = v_scale * r.g;
  r.value = -0.5 * r.u_star * r.u_star - j.value;
  r.dg = -j.d2 / (1.0 + var * j.d2);
  r.iterations = it;
  return r;
}

/// max_u -u^2/2 - H(y, sigma((v u + omega) / temp)).
inline ProxResult prox_logistic(double y, double omega, double v_scale,
                                double temp = 1.0) {
  return prox_solve(LogisticLoss{temp}, y, 0.0, omega, v_scale);
}

/// max_u -u^2/2 - kd_loss(y, teacher_h, v u + omega).
inline ProxResult prox_kd(double y, double teacher_h, double omega,
                          double v_scale, const ModelParams& params) {
  return prox_solve(KdLoss::from(params), y, teacher_h, omega, v_scale);
}

}  // namespace kdreplica
