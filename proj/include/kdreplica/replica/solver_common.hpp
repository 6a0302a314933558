#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace kdreplica {

/// Knobs of the damped fixed-point iteration.
struct SolverConfig {
  double damping = 0.5;  // x <- d x_old + (1 - d) x_new
  double tol = 1e-10;    // on the max change of the overlaps, in natural units
  int max_iters = 5000;
  int quad_order = 60;
  double divergence_q = 1e12;
  int anderson = 5;  // history length of Anderson mixing, 0 = plain damping

  void validate() const {
    if (!(damping >= 0.0 && damping < 1.0)) {
      throw std::invalid_argument("SolverConfig: damping must lie in [0,1)");
    }
    if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol <= 0");
    if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters < 1");
    if (quad_order < 20) {
      throw std::invalid_argument("SolverConfig: quad_order must be >= 20");
    }
    if (anderson < 0) throw std::invalid_argument("SolverConfig: anderson < 0");
  }
};

/// Base class for fixed-point failures.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::vector<double> trajectory)
      : std::runtime_error(what), trajectory_(std::move(trajectory)) {}

  /// Max scaled change of the overlaps at every iteration performed.
  const std::vector<double>& trajectory() const { return trajectory_; }

 private:
  std::vector<double> trajectory_;
};

class NonConvergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

/// q grew past SolverConfig::divergence_q (or became non-finite).
class DivergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

namespace detail {

/// Outcome of the generic driver.
template <std::size_t K, class Moments>
struct FixedPoint {
  std::array<double, K> x{};
  double b = 0.0;
  Moments moments{};
  int iterations = 0;
};

/// Solves E[g](b) = 0 for the bias with the overlaps held fixed. E[g] is
/// decreasing in b, so Newton steps are safeguarded by a bracket that is grown
/// until the sign changes.
template <class Problem, std::size_t K>
auto solve_bias(const Problem& p, const std::array<double, K>& x, double b,
                double scale) {
  auto mom = p.moments(x, b);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 200; ++k) {
    const double f = mom.g;
    if (f == 0.0) break;
    if (f > 0) lo = b; else hi = b;

    double next = b - f / mom.dg;
    const bool bracketed = std::isfinite(lo) && std::isfinite(hi);
    if (bracketed) {
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    } else {
      const double cap = 4.0 * scale;
      if (!std::isfinite(next) || std::abs(next - b) > cap) {
        next = b + (f > 0 ? cap : -cap);
      }
    }
    const double step = std::abs(next - b);
    b = next;
    mom = p.moments(x, b);
    if (step <= 1e-14 * std::max(1.0, std::abs(b))) break;
    if (std::abs(mom.g) <= 1e-15) break;
  }
  return std::pair{b, mom};
}

/// Damped iteration x <- entropic(energetic(x, b*(x))), optionally
/// accelerated by Anderson mixing over the last `cfg.anderson` residuals.
/// Convergence is measured per component against `Problem::scales(x)`
/// (e.g. sqrt(q) for m), so the criterion is invariant under an overall
/// rescaling of the weights. An Anderson proposal that the problem rejects
/// (`Problem::admissible`) or that increases the residual falls back to a
/// damped step. The damped step is halved whenever the update direction
/// flips sign three times in a row.
template <class Problem, std::size_t K>
auto iterate(const Problem& p, std::array<double, K> x, double b,
             const SolverConfig& cfg) {
  using Moments = decltype(p.moments(x, b));
  using Vec = Eigen::Matrix<double, K, 1>;
  FixedPoint<K, Moments> out;
  std::vector<double> trajectory;
  double step = 1.0 - cfg.damping;
  Vec prev_delta = Vec::Zero();
  int flips = 0;

  // Anderson history: differences of iterates and of residuals. The least
  // squares problem is weighted by the current scales.
  std::vector<Vec> dx_hist, df_hist;
  Vec last_y = Vec::Zero(), last_f = Vec::Zero();
  bool have_last = false;
  double last_change = std::numeric_limits<double>::infinity();
  std::array<double, K> fallback{};  // last damped proposal
  bool anderson_step = false;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    auto [nb, mom] = solve_bias(p, x, b, p.bias_scale(x));
    const std::array<double, K> next = p.entropic(mom, x);
    const std::array<double, K> scale = p.scales(x);

    Vec y, f;
    double change = 0.0;
    bool finite = std::isfinite(nb);
    for (std::size_t i = 0; i < K; ++i) {
      finite = finite && std::isfinite(next[i]);
      y[i] = x[i];
      f[i] = next[i] - x[i];
      change = std::max(change, std::abs(f[i]) / scale[i]);
    }
    const double q = p.norm(next);
    if (!finite || !(q < cfg.divergence_q)) {
      trajectory.push_back(change);
      std::ostringstream os;
      os << p.name() << ": diverged at iteration " << it << " (q=" << q << ")";
      throw DivergenceError(os.str(), trajectory);
    }

    // A rejected accelerated step: discard it and take the damped one.
    if (anderson_step && change > 2.0 * last_change) {
      dx_hist.clear();
      df_hist.clear();
      have_last = false;
      anderson_step = false;
      x = fallback;
      continue;
    }
    b = nb;
    trajectory.push_back(change);
    if (change < cfg.tol) {
      out.x = x;
      out.b = b;
      out.moments = mom;
      out.iterations = it;
      return out;
    }

    Vec delta;
    for (std::size_t i = 0; i < K; ++i) delta[i] = next[i] - x[i];
    flips = delta.dot(prev_delta) < 0 ? flips + 1 : 0;
    if (flips >= 3) {
      step = std::max(0.5 * step, 1e-3);
      flips = 0;
    }
    prev_delta = delta;

    std::array<double, K> damped{};
    for (std::size_t i = 0; i < K; ++i) damped[i] = x[i] + step * delta[i];
    damped = p.project(damped);

    anderson_step = false;
    if (cfg.anderson > 0) {
      if (have_last) {
        dx_hist.push_back(y - last_y);
        df_hist.push_back(f - last_f);
        if (static_cast<int>(dx_hist.size()) > cfg.anderson) {
          dx_hist.erase(dx_hist.begin());
          df_hist.erase(df_hist.begin());
        }
      }
      last_y = y;
      last_f = f;
      have_last = true;
      const int mk = static_cast<int>(df_hist.size());
      if (mk > 0) {
        Eigen::Matrix<double, K, Eigen::Dynamic> dfm(K, mk), dxm(K, mk);
        Vec weight;
        for (std::size_t i = 0; i < K; ++i) weight[i] = 1.0 / scale[i];
        for (int j = 0; j < mk; ++j) {
          dfm.col(j) = df_hist[j];
          dxm.col(j) = dx_hist[j];
        }
        const Eigen::MatrixXd wdf = weight.asDiagonal() * dfm;
        const Eigen::VectorXd gamma = wdf.completeOrthogonalDecomposition()
                                          .solve(weight.cwiseProduct(f));
        const Vec ynew = y + step * f - (dxm + step * dfm) * gamma;
        std::array<double, K> cand{};
        bool ok = ynew.allFinite();
        for (std::size_t i = 0; i < K; ++i) cand[i] = ynew[i];
        ok = ok && p.admissible(cand);
        if (ok) {
          fallback = damped;
          x = cand;
          anderson_step = true;
        }
      }
    }
    if (!anderson_step) x = damped;
    last_change = change;
  }
  std::ostringstream os;
  os << p.name() << ": no convergence after " << cfg.max_iters
     << " iterations (last change " << trajectory.back() << ")";
  throw NonConvergenceError(os.str(), trajectory);
}

}  // namespace detail
}  // namespace kdreplica
