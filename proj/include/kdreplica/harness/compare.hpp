#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kdreplica/harness/csv.hpp"

namespace kdreplica {

/// Replica and empirical tables whose grid keys do not line up.
class CompareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CompareOptions {
  double sigma = 3.0;
  /// Quantities that decide whether a point passes; z-scores are reported
  /// for all of eg, m, q, s regardless.
  std::vector<std::string> judged = {"eg"};
  /// Fraction of considered points that must pass.
  double min_pass_fraction = 0.9;
};

struct ComparePoint {
  std::string key;       // model parameters as written in the CSV
  std::string mode;      // replica mode compared against the simulation
  std::map<std::string, double> z;  // per quantity, only where both sides exist
  bool excluded = false;  // simulation not converged on every seed
  bool pass = false;
};

struct CompareResult {
  std::vector<ComparePoint> points;
  int considered = 0;
  int passed = 0;
  bool pass = false;

  std::vector<const ComparePoint*> failures() const {
    std::vector<const ComparePoint*> out;
    for (const auto& p : points) {
      if (!p.excluded && !p.pass) out.push_back(&p);
    }
    return out;
  }
};

namespace detail {

inline std::string row_key(const CsvTable& t, std::size_t row) {
  std::string k;
  for (auto f : ModelParams::kFieldNames) {
    if (!k.empty()) k += ',';
    k += std::string(f) + "=" + t.field(row, std::string(f));
  }
  return k;
}

inline double z_score(double emp, double se, double rep) {
  const double d = std::abs(emp - rep);
  if (d == 0.0) return 0.0;
  if (!(se > 0.0)) return std::numeric_limits<double>::infinity();
  return d / se;
}

}  // namespace detail

/// Per-point z-scores |empirical - replica| / stderr. replica-teacher rows are
/// matched with the teacher columns of the simulation, replica-kd and
/// replica-bo-kd rows with its student columns. Every replica row must have
/// a simulation row with the same parameters and vice versa.
inline CompareResult compare_tables(const CsvTable& replica,
                                    const CsvTable& empirical,
                                    const CompareOptions& opt = {}) {
  std::map<std::string, std::size_t> sims;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    if (empirical.field(i, "mode") != "simulate") continue;
    sims[detail::row_key(empirical, i)] = i;
  }
  std::map<std::string, bool> sim_used;
  for (const auto& [k, i] : sims) sim_used[k] = false;

  CompareResult res;
  std::vector<std::string> unmatched;
  for (std::size_t i = 0; i < replica.size(); ++i) {
    const std::string mode = replica.field(i, "mode");
    if (mode != "replica-teacher" && mode != "replica-kd" && mode != "replica-bo-kd") {
      continue;
    }
    const std::string key = detail::row_key(replica, i);
    auto it = sims.find(key);
    if (it == sims.end()) {
      unmatched.push_back("replica " + mode + " {" + key + "}");
      continue;
    }
    sim_used[key] = true;
    const std::size_t j = it->second;
    ComparePoint pt;
    pt.key = key;
    pt.mode = mode;
    const auto n_seeds = empirical.number(j, "n_seeds");
    const auto n_conv = empirical.number(j, "n_converged");
    const bool rep_ok = replica.field(i, "converged") == "1";
    pt.excluded = !rep_ok || !n_seeds || !n_conv || *n_conv < *n_seeds;
    const bool teacher = mode == "replica-teacher";
    for (const char* q : {"eg", "m", "q", "s"}) {
      const std::string name(q);
      if (teacher && name == "s") continue;
      const std::string col = teacher ? "emp_" + name + "_t" : "emp_" + name;
      const auto rep = replica.number(i, name);
      const auto emp = empirical.number(j, col);
      const auto se = empirical.number(j, col + "_se");
      if (rep && emp && se) pt.z[name] = detail::z_score(*emp, *se, *rep);
    }
    if (!pt.excluded) {
      pt.pass = true;
      bool any = false;
      for (const auto& name : opt.judged) {
        auto z = pt.z.find(name);
        if (z == pt.z.end()) continue;
        any = true;
        if (!(z->second <= opt.sigma)) pt.pass = false;
      }
      if (!any) pt.excluded = true;
    }
    if (!pt.excluded) {
      ++res.considered;
      if (pt.pass) ++res.passed;
    }
    res.points.push_back(std::move(pt));
  }
  for (const auto& [k, used] : sim_used) {
    if (!used) unmatched.push_back("simulate {" + k + "}");
  }
  if (!unmatched.empty()) {
    std::string msg = "compare: unmatched rows:";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw CompareError(msg);
  }
  res.pass = res.considered > 0 &&
             res.passed >= opt.min_pass_fraction * res.considered - 1e-12;
  return res;
}

}  // namespace kdreplica
