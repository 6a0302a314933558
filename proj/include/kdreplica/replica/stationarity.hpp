#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kdreplica/replica/bo_kd.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/teacher.hpp"

namespace kdreplica {

/// One component of the numerical gradient of the free entropy.
struct GradientComponent {
  std::string name;
  double value = 0.0;
};

/// Fourth-order central differences of f at x. The step for component i is
/// step * max(|x_i|, 1e-3): conjugates such as dqhat can be O(1e-4) at weak
/// regularization, where an absolute step would be larger than the curvature
/// scale of the entropic term, while components that sit at ~0 (dS at chi = 0)
/// would otherwise get a step lost in roundoff.
inline std::vector<GradientComponent> numerical_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<std::string>& names,
    double step = 1e-4) {
  std::vector<GradientComponent> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * std::max(std::abs(x[i]), 1e-3);
    auto at = [&](double k) {
      std::vector<double> y = x;
      y[i] += k * h;
      return f(y);
    };
    const double d = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
    out.push_back({names[i], d});
  }
  return out;
}

inline double max_abs(const std::vector<GradientComponent>& grad) {
  double m = 0.0;
  for (const auto& c : grad) m = std::max(m, std::abs(c.value));
  return m;
}

/// Gradient of the teacher free entropy in (m, q, dq, b, mhat, qhat, dqhat).
inline std::vector<GradientComponent> teacher_stationarity(
    const ModelParams& params, const TeacherOrderParams& t,
    int quad_order = 60, double step = 1e-4) {
  const TeacherChannel ch(params, gauss_hermite(quad_order));
  auto f = [&](const std::vector<double>& v) {
    return ch.free_entropy({v[0], v[1], v[2]}, v[3], {v[4], v[5], v[6]});
  };
  return numerical_gradient(
      f, {t.m_t, t.q_t, t.dq_t, t.b_t, t.mhat_t, t.qhat_t, t.dqhat_t},
      {"m", "q", "dq", "b", "mhat", "qhat", "dqhat"}, step);
}

/// Gradient of the distillation free entropy in
/// (m, q, dq, S, dS, b, mhat, qhat, dqhat, Shat, dShat).
inline std::vector<GradientComponent> kd_stationarity(
    const ModelParams& params, const TeacherOrderParams& teacher,
    const StudentOrderParams& s, int quad_order = 60, double step = 1e-4) {
  const KdChannel ch(params, teacher, gauss_hermite(quad_order));
  auto f = [&](const std::vector<double>& v) {
    return ch.free_entropy({v[0], v[1], v[2], v[3], v[4]}, v[5],
                           {v[6], v[7], v[8], v[9], v[10]});
  };
  return numerical_gradient(
      f,
      {s.m, s.q, s.dq, s.s, s.ds, s.b, s.mhat, s.qhat, s.dqhat, s.shat,
       s.dshat},
      {"m", "q", "dq", "S", "dS", "b", "mhat", "qhat", "dqhat", "Shat",
       "dShat"},
      step);
}

/// Gradient of the proxy-teacher free entropy in
/// (m, q, dq, S_h, b, mhat, qhat, dqhat, Shat), S_h being the noise overlap.
inline std::vector<GradientComponent> bo_kd_stationarity(
    const ModelParams& params, const StudentOrderParams& s,
    int quad_order = 60, double step = 1e-4,
    const BoTeacherField& field = {}) {
  const BoKdChannel ch(params, gauss_hermite(quad_order), field);
  auto f = [&](const std::vector<double>& v) {
    return ch.free_entropy({v[0], v[1], v[2], v[3]}, v[4],
                           {v[5], v[6], v[7], v[8]});
  };
  const double sh = (s.s - s.m) / std::sqrt(params.delta() / params.alpha());
  return numerical_gradient(
      f, {s.m, s.q, s.dq, sh, s.b, s.mhat, s.qhat, s.dqhat, s.shat},
      {"m", "q", "dq", "S", "b", "mhat", "qhat", "dqhat", "Shat"}, step);
}

}  // namespace kdreplica
