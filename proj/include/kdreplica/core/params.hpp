#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kdreplica {

/// Weight of the data term in every training objective:
///   sum_mu kLossScale * loss_mu + lambda/2 |w|^2.
/// Solvers and trainers work with the equivalent unit-weight objective, whose
/// ridge is lambda / kLossScale (see ModelParams::ridge_t / ridge_s).
inline constexpr double kLossScale = 0.5;

/// Raw, unchecked field values for a ModelParams instance.
struct ModelParamsInit {
  double alpha = 1.0;       // samples per dimension M/N
  double delta = 1.0;       // cluster noise variance
  double rho = 0.5;         // fraction of y = 1 points
  double eta = 1.0;         // trainable fraction of student weights
  double lambda_t = 0.0;    // teacher ridge intensity
  double lambda_s = 0.0;    // student ridge intensity
  double chi = 0.0;         // distillation mixing
  double temp = 1.0;        // distillation temperature
  double eps_smooth = 0.0;  // label smoothing
};

/// A validated problem instance. Every constructor checks the ranges, so a
/// ModelParams value that exists is always usable by the solver and the
/// simulator.
class ModelParams {
 public:
  static constexpr std::array<std::string_view, 9> kFieldNames = {
      "alpha", "delta", "rho", "eta", "lambda_t",
      "lambda_s", "chi", "temp", "eps_smooth"};

  ModelParams() { validate(v_); }
  explicit ModelParams(const ModelParamsInit& init) : v_(init) { validate(v_); }

  double alpha() const { return v_.alpha; }
  double delta() const { return v_.delta; }
  double rho() const { return v_.rho; }
  double eta() const { return v_.eta; }
  double lambda_t() const { return v_.lambda_t; }
  double lambda_s() const { return v_.lambda_s; }
  double ridge_t() const { return v_.lambda_t / kLossScale; }
  double ridge_s() const { return v_.lambda_s / kLossScale; }
  double chi() const { return v_.chi; }
  double temp() const { return v_.temp; }
  double eps_smooth() const { return v_.eps_smooth; }

  const ModelParamsInit& values() const { return v_; }

  static bool is_field(std::string_view key) {
    for (auto name : kFieldNames) {
      if (name == key) return true;
    }
    return false;
  }

  double get(std::string_view key) const {
    return v_.*member(key);
  }

  /// Copy with one field replaced; the result is validated.
  ModelParams with(std::string_view key, double value) const {
    ModelParamsInit next = v_;
    next.*member(key) = value;
    return ModelParams(next);
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    for (auto name : kFieldNames) {
      if (a.get(name) != b.get(name)) return false;
    }
    return true;
  }

 private:
  static double ModelParamsInit::*member(std::string_view key) {
    if (key == "alpha") return &ModelParamsInit::alpha;
    if (key == "delta") return &ModelParamsInit::delta;
    if (key == "rho") return &ModelParamsInit::rho;
    if (key == "eta") return &ModelParamsInit::eta;
    if (key == "lambda_t") return &ModelParamsInit::lambda_t;
    if (key == "lambda_s") return &ModelParamsInit::lambda_s;
    if (key == "chi") return &ModelParamsInit::chi;
    if (key == "temp") return &ModelParamsInit::temp;
    if (key == "eps_smooth") return &ModelParamsInit::eps_smooth;
    throw std::invalid_argument("unknown model parameter '" +
                                std::string(key) + "'");
  }

  static void require(bool ok, const char* what, double value) {
    if (!ok) {
      throw std::invalid_argument(std::string("invalid model parameter: ") +
                                  what + " (got " + std::to_string(value) +
                                  ")");
    }
  }

  static void validate(const ModelParamsInit& v) {
    require(std::isfinite(v.alpha) && v.alpha > 0, "alpha must be > 0",
            v.alpha);
    require(std::isfinite(v.delta) && v.delta > 0, "delta must be > 0",
            v.delta);
    require(v.rho > 0 && v.rho < 1, "rho must lie in (0,1)", v.rho);
    require(v.eta > 0 && v.eta <= 1, "eta must lie in (0,1]", v.eta);
    require(std::isfinite(v.lambda_t) && v.lambda_t >= 0,
            "lambda_t must be >= 0", v.lambda_t);
    require(std::isfinite(v.lambda_s) && v.lambda_s >= 0,
            "lambda_s must be >= 0", v.lambda_s);
    require(v.chi >= 0 && v.chi <= 1, "chi must lie in [0,1]", v.chi);
    require(std::isfinite(v.temp) && v.temp > 0, "temp must be > 0", v.temp);
    require(v.eps_smooth >= 0 && v.eps_smooth < 0.5,
            "eps_smooth must lie in [0,0.5)", v.eps_smooth);
  }

  ModelParamsInit v_;
};

}  // namespace kdreplica
