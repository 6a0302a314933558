#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kdreplica/core/params.hpp"

namespace kdreplica {

/// Probabilities are clipped to [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr double kProbFloor = 1e-15;

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// sigma(x / temp). Never overflows; saturates to exactly 0 or 1 only when
/// the true value is below double resolution.
inline double sigmoid(double x, double temp = 1.0) {
  const double t = x / temp;
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// sigma'(x) = sigma(x) (1 - sigma(x)), computed without cancellation.
inline double sigmoid_slope(double x) {
  const double e = std::exp(-std::abs(x));
  return e / ((1.0 + e) * (1.0 + e));
}

/// H(p, q) = -p log q - (1-p) log(1-q), with q clipped to the probability
/// floor.
inline double cross_entropy(double p, double q) {
  if (std::isnan(p) || std::isnan(q)) {
    throw std::invalid_argument("cross_entropy: NaN input");
  }
  q = std::clamp(q, kProbFloor, 1.0 - kProbFloor);
  return -p * std::log(q) - (1.0 - p) * std::log1p(-q);
}

/// H(p, sigma(s)) evaluated directly from the logit s. Equal to
/// cross_entropy(p, sigmoid(s)) wherever sigmoid(s) is representable, and
/// exact (no clipping needed) in the saturated tails.
inline double cross_entropy_logit(double p, double s) {
  return p * softplus(-s) + (1.0 - p) * softplus(s);
}

/// y -> y (1 - eps) + (1 - y) eps.
inline double smooth_label(double y, double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) {
    throw std::invalid_argument("smooth_label: eps must lie in [0, 0.5)");
  }
  return y * (1.0 - eps) + (1.0 - y) * eps;
}

/// Value, first and second derivative of a scalar loss in the student
/// preactivation.
struct LossJet {
  double value;
  double d1;
  double d2;
};

/// H(y, sigma(s / T)): the (optionally tempered) logistic loss. The teacher
/// preactivation argument is ignored; it is kept so every scalar loss has the
/// same call shape.
struct LogisticLoss {
  double temp = 1.0;

  double value(double y, double /*teacher_h*/, double s) const {
    return cross_entropy_logit(y, s / temp);
  }

  LossJet jet(double y, double /*teacher_h*/, double s) const {
    const double t = s / temp;
    return {cross_entropy_logit(y, t), (sigmoid(t) - y) / temp,
            sigmoid_slope(t) / (temp * temp)};
  }

  /// Upper bound on |d1| for labels in [0, 1].
  double slope_bound() const { return 1.0 / temp; }
};

/// Distillation loss
///   (1 - chi) H(y, sigma(s)) + chi H(sigma(p / T), sigma(s / T))
/// with p the teacher and s the student preactivation. The temperature only
/// enters the teacher-matching term. chi = 0 is the plain logistic loss.
struct KdLoss {
  double chi = 0.0;
  double temp = 1.0;

  static KdLoss from(const ModelParams& params) {
    return KdLoss{params.chi(), params.temp()};
  }

  double value(double y, double teacher_h, double s) const {
    if (chi == 0.0) return cross_entropy_logit(y, s);
    double out = chi * cross_entropy_logit(sigmoid(teacher_h, temp), s / temp);
    if (chi < 1.0) out += (1.0 - chi) * cross_entropy_logit(y, s);
    return out;
  }

  LossJet jet(double y, double teacher_h, double s) const {
    LossJet j{0.0, 0.0, 0.0};
    if (chi < 1.0) {
      j.value += (1.0 - chi) * cross_entropy_logit(y, s);
      j.d1 += (1.0 - chi) * (sigmoid(s) - y);
      j.d2 += (1.0 - chi) * sigmoid_slope(s);
    }
    if (chi > 0.0) {
      const double target = sigmoid(teacher_h, temp);
      const double t = s / temp;
      j.value += chi * cross_entropy_logit(target, t);
      j.d1 += chi * (sigmoid(t) - target) / temp;
      j.d2 += chi * sigmoid_slope(t) / (temp * temp);
    }
    return j;
  }

  double slope_bound() const { return (1.0 - chi) + chi / temp; }
};

/// Convenience wrapper: kd_loss(y, p, s) for the given parameters.
inline double kd_loss(double y, double teacher_preact, double student_preact,
                      const ModelParams& params) {
  return KdLoss::from(params).value(y, teacher_preact, student_preact);
}

/// d/ds and d2/ds2 of kd_loss.
inline LossJet kd_loss_jet(double y, double teacher_preact,
                           double student_preact, const ModelParams& params) {
  return KdLoss::from(params).jet(y, teacher_preact, student_preact);
}

}  // namespace kdreplica
