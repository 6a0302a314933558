#pragma once

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>

#include "kdreplica/core/params.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/teacher.hpp"

namespace kdreplica {

struct LambdaOptimum {
  double lambda = 0.0;
  double eg = 0.0;
};

/// Minimizes eg(lambda) over log10(lambda) in [lo, hi]: a scan on `grid`
/// log-spaced points brackets the best value, then Brent refines inside the
/// bracket. The scan matters because eg saturates at the trivial classifier's
/// error for large lambda, a plateau on which Brent alone can stall. A failed
/// evaluation counts as error 1 so the search moves away from it.
template <class F>
LambdaOptimum minimize_over_lambda(F&& eg_of_lambda, double lo, double hi,
                                   int bits = 24, int grid = 19) {
  auto f = [&](double log_lambda) {
    try {
      const double e = eg_of_lambda(std::pow(10.0, log_lambda));
      return std::isfinite(e) ? e : 1.0;
    } catch (const std::exception&) {
      return 1.0;
    }
  };
  const double a = std::log10(lo), b = std::log10(hi);
  int best = 0;
  double best_f = 2.0;
  for (int i = 0; i < grid; ++i) {
    const double fi = f(a + (b - a) * i / (grid - 1));
    if (fi < best_f) {
      best_f = fi;
      best = i;
    }
  }
  const double step = (b - a) / (grid - 1);
  const double left = std::max(a, a + (best - 1) * step);
  const double right = std::min(b, a + (best + 1) * step);
  std::uintmax_t max_iter = 200;
  const auto [x, fx] =
      boost::math::tools::brent_find_minima(f, left, right, bits, max_iter);
  if (fx <= best_f) return {std::pow(10.0, x), fx};
  return {std::pow(10.0, a + best * step), best_f};
}

/// Teacher ridge minimizing the replica test error of the teacher.
inline LambdaOptimum optimal_teacher_lambda(const ModelParams& params,
                                            double lo = 1e-5, double hi = 1e4,
                                            const SolverConfig& cfg = {}) {
  return minimize_over_lambda(
      [&](double lambda) {
        return solve_teacher(params.with("lambda_t", lambda), cfg).eg;
      },
      lo, hi);
}

/// Replica test error of an eta-sparse student trained on the labels alone
/// (chi = 0) with ridge lambda_s. Solved through the equivalent dense
/// problem (alpha/eta, Delta/eta, lambda_s/eta^2).
inline double direct_student_error(const ModelParams& params,
                                   const SolverConfig& cfg = {},
                                   const std::optional<TeacherOrderParams>& warm =
                                       std::nullopt,
                                   TeacherOrderParams* out = nullptr) {
  const double eta = params.eta();
  ModelParamsInit v = params.values();
  v.alpha /= eta;
  v.delta /= eta;
  v.lambda_t = params.lambda_s() / (eta * eta);
  v.eta = 1.0;
  v.chi = 0.0;
  const auto t = solve_teacher(ModelParams(v), cfg, warm);
  if (out) *out = t;
  return t.eg;
}

/// Student ridge minimizing the replica test error. For chi = 0 the dense
/// equivalent problem is used; otherwise the teacher at params.lambda_t is
/// solved once and the distillation fixed point is warm-started from the
/// previous evaluation.
inline LambdaOptimum optimal_student_lambda(const ModelParams& params,
                                            double lo = 1e-5, double hi = 1e4,
                                            const SolverConfig& cfg = {}) {
  if (params.chi() == 0.0) {
    return minimize_over_lambda(
        [&](double lambda) {
          return direct_student_error(params.with("lambda_s", lambda), cfg);
        },
        lo, hi);
  }
  const auto teacher = solve_teacher(params, cfg);
  std::optional<StudentOrderParams> warm;
  return minimize_over_lambda(
      [&](double lambda) {
        const ModelParams p = params.with("lambda_s", lambda);
        StudentOrderParams s;
        try {
          s = solve_kd(p, teacher, cfg, warm);
        } catch (const SolverError&) {
          // Brent may jump far from the previous point; retry cold.
          s = solve_kd(p, teacher, cfg);
        }
        warm = s;
        return s.eg;
      },
      lo, hi);
}

}  // namespace kdreplica
