#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kdreplica/core/dataset.hpp"
#include "kdreplica/core/params.hpp"
#include "kdreplica/erm/measure.hpp"
#include "kdreplica/erm/train.hpp"
#include "kdreplica/estimators/estimators.hpp"
#include "kdreplica/harness/config.hpp"
#include "kdreplica/harness/optimize.hpp"
#include "kdreplica/replica/bo_kd.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/solver_common.hpp"
#include "kdreplica/replica/teacher.hpp"

namespace kdreplica {

enum class Mode { ReplicaTeacher, ReplicaKd, ReplicaBoKd, Simulate, Estimators };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::ReplicaTeacher: return "replica-teacher";
    case Mode::ReplicaKd: return "replica-kd";
    case Mode::ReplicaBoKd: return "replica-bo-kd";
    case Mode::Simulate: return "simulate";
    case Mode::Estimators: return "estimators";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::ReplicaTeacher, Mode::ReplicaKd, Mode::ReplicaBoKd,
                 Mode::Simulate, Mode::Estimators}) {
    if (s == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

inline bool is_replica(Mode m) {
  return m == Mode::ReplicaTeacher || m == Mode::ReplicaKd ||
         m == Mode::ReplicaBoKd;
}

/// Which ridge, if any, is chosen per grid point by minimizing the replica
/// test error before anything else is evaluated there.
enum class Optimize { None, LambdaT, LambdaS };

enum class SimTeacher { Erm, BoProxy };

struct Axis {
  std::string name;
  std::vector<double> values;
};

struct SweepSpec {
  std::string name;
  ModelParamsInit base;
  std::vector<Axis> axes;  // outermost first; alpha, if swept, is innermost
  std::vector<Mode> modes;
  int n_dim = 1000;
  int n_seeds = 10;
  std::uint64_t seed = 0;
  long n_test = 100000;
  double train_tol = 1e-8;
  SimTeacher sim_teacher = SimTeacher::Erm;
  bool simulate_student = true;
  Optimize optimize = Optimize::None;
  double optimize_min = 1e-5;
  double optimize_max = 1e4;
  SolverConfig solver;
  std::string output_path;

  std::size_t grid_size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }

  bool has_mode(Mode m) const {
    return std::find(modes.begin(), modes.end(), m) != modes.end();
  }

  /// Parameters of grid point `index` (last axis fastest).
  ModelParams point(std::size_t index) const {
    ModelParams p(base);
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const std::size_t n = it->values.size();
      p = p.with(it->name, it->values[index % n]);
      index /= n;
    }
    return p;
  }

  /// Length of a continuation line: the alpha axis when it is swept.
  std::size_t line_length() const {
    if (!axes.empty() && axes.back().name == "alpha") return axes.back().values.size();
    return 1;
  }

  void validate() const {
    if (modes.empty()) throw ConfigError("sweep: no modes requested");
    for (const auto& a : axes) {
      if (!ModelParams::is_field(a.name)) {
        throw ConfigError("sweep: '" + a.name + "' is not a model parameter");
      }
      if (a.values.empty()) throw ConfigError("sweep: empty grid for " + a.name);
      if (!std::is_sorted(a.values.begin(), a.values.end())) {
        throw ConfigError("sweep: grid for " + a.name + " must be sorted");
      }
    }
    const bool sim = has_mode(Mode::Simulate) || has_mode(Mode::Estimators);
    if (sim && n_seeds < 1) throw ConfigError("sweep: n_seeds must be >= 1");
    if (sim && n_dim < 2) throw ConfigError("sweep: n_dim must be >= 2");
    if (n_test < 1) throw ConfigError("sweep: n_test must be >= 1");
    if (!(train_tol > 0)) throw ConfigError("sweep: train_tol must be > 0");
    if (!(optimize_min > 0 && optimize_max > optimize_min)) {
      throw ConfigError("sweep: need 0 < optimize_min < optimize_max");
    }
    try {
      solver.validate();
      for (std::size_t i = 0; i < grid_size(); ++i) (void)point(i);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sweep: ") + e.what());
    }
  }
};

/// Builds a spec from a resolved configuration. List-valued model
/// parameters become axes, ordered as in ModelParams::kFieldNames with alpha
/// moved last so that replica solves can be continued along it.
inline SweepSpec spec_from_config(const Config& cfg) {
  SweepSpec s;
  s.name = cfg.get_string("name", "");
  ModelParams defaults;
  std::vector<Axis> axes;
  std::optional<Axis> alpha_axis;
  for (auto field : ModelParams::kFieldNames) {
    const std::string key(field);
    if (!cfg.has(key)) continue;
    const auto values = cfg.get_numbers(key);
    ModelParamsInit& b = s.base;
    const double first = values.front();
    if (key == "alpha") b.alpha = first;
    else if (key == "delta") b.delta = first;
    else if (key == "rho") b.rho = first;
    else if (key == "eta") b.eta = first;
    else if (key == "lambda_t") b.lambda_t = first;
    else if (key == "lambda_s") b.lambda_s = first;
    else if (key == "chi") b.chi = first;
    else if (key == "temp") b.temp = first;
    else if (key == "eps_smooth") b.eps_smooth = first;
    if (cfg.at(key).is_list) {
      Axis a{key, values};
      if (key == "alpha") alpha_axis = a; else axes.push_back(a);
    }
  }
  if (alpha_axis) axes.push_back(*alpha_axis);
  s.axes = axes;

  if (cfg.has("modes")) {
    for (const auto& m : cfg.get_strings("modes")) {
      const Mode mode = parse_mode(m);
      if (!s.has_mode(mode)) s.modes.push_back(mode);
    }
  }
  s.n_dim = static_cast<int>(cfg.get_integer("n_dim", s.n_dim));
  s.n_seeds = static_cast<int>(cfg.get_integer("n_seeds", s.n_seeds));
  s.seed = cfg.get_unsigned("seed", s.seed);
  s.n_test = static_cast<long>(cfg.get_integer("n_test", s.n_test));
  s.train_tol = cfg.get_number("train_tol", s.train_tol);
  const std::string teacher = cfg.get_string("sim_teacher", "erm");
  if (teacher == "erm") s.sim_teacher = SimTeacher::Erm;
  else if (teacher == "bo_proxy") s.sim_teacher = SimTeacher::BoProxy;
  else throw ConfigError("sim_teacher must be erm or bo_proxy");
  s.simulate_student = cfg.get_bool("simulate_student", s.simulate_student);
  const std::string opt = cfg.get_string("optimize", "none");
  if (opt == "none") s.optimize = Optimize::None;
  else if (opt == "lambda_t") s.optimize = Optimize::LambdaT;
  else if (opt == "lambda_s") s.optimize = Optimize::LambdaS;
  else throw ConfigError("optimize must be none, lambda_t or lambda_s");
  s.optimize_min = cfg.get_number("optimize_min", s.optimize_min);
  s.optimize_max = cfg.get_number("optimize_max", s.optimize_max);
  s.solver.damping = cfg.get_number("damping", s.solver.damping);
  s.solver.tol = cfg.get_number("tol", s.solver.tol);
  s.solver.max_iters = static_cast<int>(cfg.get_integer("max_iters", s.solver.max_iters));
  s.solver.quad_order = static_cast<int>(cfg.get_integer("quad_order", s.solver.quad_order));
  s.solver.anderson = static_cast<int>(cfg.get_integer("anderson", s.solver.anderson));
  s.solver.divergence_q = cfg.get_number("divergence_q", s.solver.divergence_q);
  s.output_path = cfg.get_string("out", "");
  s.validate();
  return s;
}

/// Mean and standard error over seeds.
struct Stat {
  double mean = 0.0;
  double se = 0.0;
};

struct ReplicaBlock {
  double m = 0, q = 0, b = 0, eg = 0;
  std::optional<double> dq, phi, s, ds;
  std::optional<double> m_t, q_t, dq_t, b_t, eg_t;
  std::optional<double> train_loss, out_mse, pre_mse;
  std::optional<int> iterations;  // empty for closed-form rows
};

struct EmpiricalBlock {
  int n_dim = 0;
  int n_seeds = 0;
  int n_converged = 0;
  std::optional<Stat> m, q, s, b, eg, eg_formula;
  std::optional<Stat> m_t, q_t, b_t, eg_t;
  std::optional<Stat> loss, norm, out_mse, pre_mse;
  std::optional<Stat> iterations;
};

/// One output row: a grid point evaluated in one mode.
struct SweepRecord {
  std::size_t index = 0;
  ModelParams params;
  Mode mode = Mode::ReplicaTeacher;
  bool converged = false;
  std::optional<ReplicaBlock> replica;
  std::optional<EmpiricalBlock> empirical;
  std::string status = "ok";
  std::string message;
  double wall_time = 0.0;
};

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of one simulation run; independent of worker count and ordering.
inline std::uint64_t run_seed(std::uint64_t base, std::uint64_t grid_index,
                              std::uint64_t seed_index) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ (grid_index * 0xd1342543de82ef95ULL));
  return splitmix64(h ^ (seed_index * 0xa0761d6478bd642fULL + 1));
}

namespace detail {

/// Everything measured on one dataset.
struct SeedResult {
  bool converged = true;
  std::optional<MacroState> teacher, student, hebbian;
  std::optional<double> teacher_eg, student_eg, student_eg_formula, hebbian_eg;
  std::optional<TrainReport> report;
  double iterations = 0.0;
};

inline SeedResult simulate_seed(const SweepSpec& spec, const ModelParams& p,
                                std::uint64_t seed, bool train) {
  SeedResult r;
  const Dataset data = sample_dataset(spec.n_dim, p, seed);
  const std::uint64_t test_seed = splitmix64(seed ^ 0x7465737400000000ULL);
  if (train) {
    TrainedClassifier teacher;
    if (spec.sim_teacher == SimTeacher::BoProxy) {
      teacher = bo_teacher_proxy(data.signal, p.alpha(), p.delta(), p.rho(),
                                 splitmix64(seed ^ 0x70726f7879000000ULL));
    } else {
      teacher = train_teacher(data, p.lambda_t(), p.eps_smooth(), spec.train_tol);
      r.converged = r.converged && teacher.train_meta.converged;
      r.iterations = teacher.train_meta.iterations;
    }
    r.teacher = measure_macro_state(teacher, data);
    r.teacher_eg =
        empirical_test_error(teacher, data.signal, p, spec.n_test, test_seed).error;
    if (spec.simulate_student) {
      const TrainedClassifier student =
          train_student_kd(data, teacher, p, spec.train_tol);
      r.converged = r.converged && student.train_meta.converged;
      r.iterations = student.train_meta.iterations;
      r.student = measure_macro_state(student, data, teacher);
      r.student_eg = empirical_test_error(student, data.signal, p, spec.n_test,
                                          splitmix64(test_seed))
                         .error;
      r.student_eg_formula = generalization_error(
          r.student->m, std::max(r.student->q, 1e-300), r.student->b, p.delta(),
          p.rho());
      r.report = diagnostics(teacher, student, data, p);
    }
  }
  if (spec.has_mode(Mode::Estimators)) {
    const TrainedClassifier h =
        sparse_hebbian_estimator(data, p.eta(), p.delta(), p.rho());
    r.hebbian = measure_macro_state(h, data);
    r.hebbian_eg = empirical_test_error(h, data.signal, p, spec.n_test,
                                        splitmix64(test_seed ^ 1))
                       .error;
  }
  return r;
}

template <class Get>
std::optional<Stat> stat_over(const std::vector<SeedResult>& runs, Get get) {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (auto x = get(r)) v.push_back(*x);
  }
  if (v.empty()) return std::nullopt;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double se =
      v.size() > 1 ? std::sqrt(var / (v.size() - 1) / v.size()) : 0.0;
  return Stat{mean, se};
}

inline std::string failure_status(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return "diverged";
  if (dynamic_cast<const NonConvergenceError*>(&e)) return "nonconverged";
  return "failed";
}

/// Replica state carried along a continuation line.
struct Warm {
  std::optional<TeacherOrderParams> teacher;
  std::optional<StudentOrderParams> student;
  std::optional<StudentOrderParams> bo;
};

class Runner {
 public:
  explicit Runner(const SweepSpec& spec) : spec_(spec) {
    const std::size_t n = spec.grid_size();
    params_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) params_.push_back(spec.point(i));
    replica_.resize(n);
    runs_.resize(n);
    opt_failed_.assign(n, std::string());
    for (auto& r : runs_) r.resize(spec.n_seeds);
    remaining_.reset(new std::atomic<int>[n]);
    done_.assign(n, 0);
  }

  std::vector<SweepRecord> run(int workers,
                               const std::function<void(const SweepRecord&)>& sink) {
    sink_ = sink;
    const std::size_t n = params_.size();
    const std::size_t line = spec_.line_length();
    const bool need_replica =
        spec_.optimize != Optimize::None ||
        std::any_of(spec_.modes.begin(), spec_.modes.end(), is_replica);
    if (need_replica) {
      parallel_for(n / line, workers, [&](std::size_t l) { run_line(l * line, line); });
    }
    const bool need_sim =
        spec_.has_mode(Mode::Simulate) || spec_.has_mode(Mode::Estimators);
    out_.resize(n);
    if (!need_sim) {
      for (std::size_t i = 0; i < n; ++i) finish_point(i);
      return flatten();
    }
    for (std::size_t i = 0; i < n; ++i) remaining_[i] = spec_.n_seeds;
    seed_time_.assign(n * spec_.n_seeds, 0.0);
    seed_error_.assign(n * spec_.n_seeds, std::string());
    const std::size_t s = spec_.n_seeds;
    parallel_for(n * s, workers, [&](std::size_t item) {
      const std::size_t i = item / s, k = item % s;
      const auto t0 = std::chrono::steady_clock::now();
      if (opt_failed_[i].empty()) {
        try {
          runs_[i][k] = simulate_seed(spec_, params_[i], run_seed(spec_.seed, i, k),
                                      spec_.has_mode(Mode::Simulate));
        } catch (const std::exception& e) {
          seed_error_[item] = e.what();
        }
      }
      seed_time_[item] = seconds_since(t0);
      if (--remaining_[i] == 0) finish_point(i);
    });
    return flatten();
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  template <class F>
  static void parallel_for(std::size_t count, int workers, F body) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    };
    const int k = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    std::vector<std::thread> pool;
    for (int t = 1; t < k; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  struct ReplicaOutcome {
    std::optional<TeacherOrderParams> teacher;
    std::optional<StudentOrderParams> student;
    std::optional<StudentOrderParams> bo;
    std::string teacher_status, student_status, bo_status;
    double teacher_time = 0, student_time = 0, bo_time = 0;
  };

  void run_line(std::size_t first, std::size_t length) {
    Warm warm;
    for (std::size_t i = first; i < first + length; ++i) {
      ReplicaOutcome& out = replica_[i];
      if (spec_.optimize != Optimize::None) {
        try {
          const auto t0 = std::chrono::steady_clock::now();
          if (spec_.optimize == Optimize::LambdaT) {
            const auto o = optimal_teacher_lambda(params_[i], spec_.optimize_min,
                                                  spec_.optimize_max, spec_.solver);
            params_[i] = params_[i].with("lambda_t", o.lambda);
          } else {
            const auto o = optimal_student_lambda(params_[i], spec_.optimize_min,
                                                  spec_.optimize_max, spec_.solver);
            params_[i] = params_[i].with("lambda_s", o.lambda);
          }
          out.teacher_time += seconds_since(t0);
          warm = {};
        } catch (const std::exception& e) {
          opt_failed_[i] = e.what();
          continue;
        }
      }
      const ModelParams& p = params_[i];
      const bool want_teacher =
          spec_.has_mode(Mode::ReplicaTeacher) || spec_.has_mode(Mode::ReplicaKd);
      if (want_teacher) {
        const auto t0 = std::chrono::steady_clock::now();
        out.teacher = solve_with_warm(
            [&](const auto& init) { return solve_teacher(p, spec_.solver, init); },
            warm.teacher, out.teacher_status);
        out.teacher_time += seconds_since(t0);
      }
      if (spec_.has_mode(Mode::ReplicaKd)) {
        const auto t0 = std::chrono::steady_clock::now();
        if (out.teacher) {
          out.student = solve_with_warm(
              [&](const auto& init) {
                return solve_kd(p, *out.teacher, spec_.solver, init);
              },
              warm.student, out.student_status);
        } else {
          out.student_status = "failed";
          warm.student.reset();
        }
        out.student_time = seconds_since(t0);
      }
      if (spec_.has_mode(Mode::ReplicaBoKd)) {
        const auto t0 = std::chrono::steady_clock::now();
        out.bo = solve_with_warm(
            [&](const auto& init) { return solve_bo_kd(p, spec_.solver, init); },
            warm.bo, out.bo_status);
        out.bo_time = seconds_since(t0);
      }
    }
  }

  /// Tries the warm start first and a cold start if that fails; on success
  /// the result becomes the next warm start, on failure the line restarts
  /// cold.
  template <class Solve, class T>
  static std::optional<T> solve_with_warm(Solve solve, std::optional<T>& warm,
                                          std::string& status) {
    if (warm) {
      try {
        T r = solve(warm);
        warm = r;
        return r;
      } catch (const SolverError&) {
      } catch (const ProxError&) {
      }
    }
    try {
      T r = solve(std::optional<T>{});
      warm = r;
      return r;
    } catch (const std::exception& e) {
      status = failure_status(e);
      warm.reset();
      return std::nullopt;
    }
  }

  SweepRecord replica_record(std::size_t i, Mode mode) const {
    SweepRecord rec;
    rec.index = i;
    rec.params = params_[i];
    rec.mode = mode;
    const ReplicaOutcome& o = replica_[i];
    if (!opt_failed_[i].empty()) {
      rec.status = "failed";
      rec.message = opt_failed_[i];
      return rec;
    }
    if (mode == Mode::ReplicaTeacher) {
      rec.wall_time = o.teacher_time;
      if (!o.teacher) {
        rec.status = o.teacher_status;
        return rec;
      }
      const auto& t = *o.teacher;
      ReplicaBlock b;
      b.m = t.m_t; b.q = t.q_t; b.dq = t.dq_t; b.b = t.b_t; b.eg = t.eg;
      b.phi = t.free_entropy;
      b.train_loss = t.train_loss;
      b.iterations = t.iterations;
      rec.replica = b;
    } else {
      const bool bo = mode == Mode::ReplicaBoKd;
      const auto& s = bo ? o.bo : o.student;
      rec.wall_time = bo ? o.bo_time : o.student_time;
      if (!s) {
        rec.status = bo ? o.bo_status : o.student_status;
        return rec;
      }
      ReplicaBlock b;
      b.m = s->m; b.q = s->q; b.dq = s->dq; b.b = s->b; b.eg = s->eg;
      b.phi = s->free_entropy;
      b.s = s->s;
      b.train_loss = s->train_loss;
      b.out_mse = s->out_mse;
      b.pre_mse = s->pre_mse;
      b.iterations = s->iterations;
      const ModelParams& p = params_[i];
      if (bo) {
        const BoTeacherField field;
        b.m_t = 1.0;
        b.q_t = field.norm(p);
        b.b_t = field.bias(p);
        b.eg_t = bo_teacher_error(p, field);
      } else {
        b.ds = s->ds;
        b.m_t = o.teacher->m_t; b.q_t = o.teacher->q_t;
        b.dq_t = o.teacher->dq_t; b.b_t = o.teacher->b_t;
        b.eg_t = o.teacher->eg;
      }
      rec.replica = b;
    }
    rec.converged = true;
    return rec;
  }

  SweepRecord sim_record(std::size_t i, Mode mode) const {
    SweepRecord rec;
    rec.index = i;
    rec.params = params_[i];
    rec.mode = mode;
    if (!opt_failed_[i].empty()) {
      rec.status = "failed";
      rec.message = opt_failed_[i];
      return rec;
    }
    std::vector<SeedResult> ok;
    for (int k = 0; k < spec_.n_seeds; ++k) {
      const std::size_t item = i * spec_.n_seeds + k;
      rec.wall_time += seed_time_[item];
      if (!seed_error_[item].empty()) {
        rec.status = "failed";
        rec.message = seed_error_[item];
      } else {
        ok.push_back(runs_[i][k]);
      }
    }
    if (rec.status == "failed") return rec;
    EmpiricalBlock e;
    e.n_dim = spec_.n_dim;
    e.n_seeds = spec_.n_seeds;
    const ModelParams& p = params_[i];
    if (mode == Mode::Estimators) {
      e.n_converged = spec_.n_seeds;
      e.m = stat_over(ok, [](const SeedResult& r) { return opt(r.hebbian, &MacroState::m); });
      e.q = stat_over(ok, [](const SeedResult& r) { return opt(r.hebbian, &MacroState::q); });
      e.b = stat_over(ok, [](const SeedResult& r) { return opt(r.hebbian, &MacroState::b); });
      e.eg = stat_over(ok, [](const SeedResult& r) { return r.hebbian_eg; });
      // Replica block: the plug-in macro state and the error floor.
      ReplicaBlock b;
      const double qt = 1.0 + p.delta() / p.alpha();
      b.m = p.eta();
      b.q = p.eta() * qt;
      b.b = plugin_bias(qt, p.delta(), p.rho());
      b.eg = bayes_optimal_error(p.alpha(), p.delta(), p.rho(), p.eta());
      b.eg_t = bayes_optimal_error(p.alpha(), p.delta(), p.rho(), 1.0);
      rec.replica = b;
      rec.converged = true;
    } else {
      for (const auto& r : ok) e.n_converged += r.converged ? 1 : 0;
      e.m_t = stat_over(ok, [](const SeedResult& r) { return opt(r.teacher, &MacroState::m); });
      e.q_t = stat_over(ok, [](const SeedResult& r) { return opt(r.teacher, &MacroState::q); });
      e.b_t = stat_over(ok, [](const SeedResult& r) { return opt(r.teacher, &MacroState::b); });
      e.eg_t = stat_over(ok, [](const SeedResult& r) { return r.teacher_eg; });
      e.m = stat_over(ok, [](const SeedResult& r) { return opt(r.student, &MacroState::m); });
      e.q = stat_over(ok, [](const SeedResult& r) { return opt(r.student, &MacroState::q); });
      e.b = stat_over(ok, [](const SeedResult& r) { return opt(r.student, &MacroState::b); });
      e.s = stat_over(ok, [](const SeedResult& r) -> std::optional<double> {
        if (!r.student) return std::nullopt;
        return r.student->s;
      });
      e.eg = stat_over(ok, [](const SeedResult& r) { return r.student_eg; });
      e.eg_formula = stat_over(ok, [](const SeedResult& r) { return r.student_eg_formula; });
      auto diag = [&](double TrainReport::*f) {
        return stat_over(ok, [f](const SeedResult& r) -> std::optional<double> {
          if (!r.report) return std::nullopt;
          return (*r.report).*f;
        });
      };
      e.loss = diag(&TrainReport::per_pattern_loss);
      e.norm = diag(&TrainReport::weight_norm);
      e.out_mse = diag(&TrainReport::output_mse);
      e.pre_mse = diag(&TrainReport::preact_mse);
      e.iterations = stat_over(ok, [](const SeedResult& r) -> std::optional<double> {
        return r.iterations;
      });
      rec.converged = e.n_converged == e.n_seeds;
      if (!rec.converged) rec.status = "sim_nonconverged";
    }
    rec.empirical = e;
    return rec;
  }

  static std::optional<double> opt(const std::optional<MacroState>& s,
                                   double MacroState::*f) {
    if (!s) return std::nullopt;
    return (*s).*f;
  }

  void finish_point(std::size_t i) {
    std::vector<SweepRecord> recs;
    for (Mode m : spec_.modes) {
      recs.push_back(is_replica(m) ? replica_record(i, m) : sim_record(i, m));
    }
    std::lock_guard<std::mutex> lock(emit_mutex_);
    out_[i] = std::move(recs);
    done_[i] = 1;
    while (next_emit_ < done_.size() && done_[next_emit_]) {
      if (sink_) {
        for (const auto& r : out_[next_emit_]) sink_(r);
      }
      ++next_emit_;
    }
  }

  std::vector<SweepRecord> flatten() {
    std::vector<SweepRecord> all;
    for (auto& v : out_) {
      for (auto& r : v) all.push_back(std::move(r));
    }
    return all;
  }

  const SweepSpec& spec_;
  std::vector<ModelParams> params_;
  std::vector<ReplicaOutcome> replica_;
  std::vector<std::string> opt_failed_;
  std::vector<std::vector<SeedResult>> runs_;
  std::vector<double> seed_time_;
  std::vector<std::string> seed_error_;
  std::unique_ptr<std::atomic<int>[]> remaining_;
  std::vector<char> done_;
  std::vector<std::vector<SweepRecord>> out_;
  std::size_t next_emit_ = 0;
  std::mutex emit_mutex_;
  std::function<void(const SweepRecord&)> sink_;
};

}  // namespace detail

/// Evaluates every grid point in every requested mode. Records reach `sink`
/// in grid order (modes in spec order within a point) as soon as a prefix of
/// the grid is complete; the full list is also returned.
inline std::vector<SweepRecord> run_sweep(
    const SweepSpec& spec, int workers = 1,
    const std::function<void(const SweepRecord&)>& sink = {}) {
  spec.validate();
  detail::Runner runner(spec);
  return runner.run(workers, sink);
}

}  // namespace kdreplica
