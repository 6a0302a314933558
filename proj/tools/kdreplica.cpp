// Command-line front end: replica solves, simulations, sweeps and
// replica-vs-simulation comparison, all driven by flat config files.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "kdreplica/harness/compare.hpp"
#include "kdreplica/harness/config.hpp"
#include "kdreplica/harness/csv.hpp"
#include "kdreplica/harness/output.hpp"
#include "kdreplica/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace kdreplica;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

/// Options shared by every subcommand that runs a sweep.
struct RunOptions {
  std::string config;
  std::string out;
  int workers = 0;
  std::optional<unsigned long long> seed;
  std::optional<int> n_dim;
  std::optional<int> n_seeds;
  std::vector<std::string> sets;
  std::vector<std::optional<std::string>> fields =
      std::vector<std::optional<std::string>>(ModelParams::kFieldNames.size());
};

void add_run_options(CLI::App* app, RunOptions& o, bool with_out = true) {
  app->add_option("--config", o.config, "Sweep config file (key = value)");
  if (with_out) app->add_option("--out", o.out, "Output CSV (default: stdout)");
  app->add_option("--workers", o.workers, "Worker threads (default: all cores)");
  app->add_option("--seed", o.seed, "Base seed of the simulations");
  app->add_option("--n-dim", o.n_dim, "Input dimension N of the simulations");
  app->add_option("--n-seeds", o.n_seeds, "Datasets per grid point");
  app->add_option("--set", o.sets, "Override any config key: key=value")
      ->allow_extra_args(false);
  for (std::size_t i = 0; i < ModelParams::kFieldNames.size(); ++i) {
    std::string name(ModelParams::kFieldNames[i]);
    std::string flag = "--" + name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app->add_option(flag, o.fields[i], "Value or [list] for " + name);
  }
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// file < environment < command line.
Config resolve(const RunOptions& o, const std::string& config_path,
               const std::optional<std::string>& forced_mode) {
  Config cfg = config_path.empty() ? Config() : Config::load(config_path);
  cfg.apply_env();
  for (std::size_t i = 0; i < o.fields.size(); ++i) {
    if (o.fields[i]) {
      cfg.set_assignment(std::string(ModelParams::kFieldNames[i]) + "=" + *o.fields[i]);
    }
  }
  for (const auto& s : o.sets) cfg.set_assignment(s);
  if (o.seed) cfg.set_assignment("seed=" + std::to_string(*o.seed));
  if (o.n_dim) cfg.set_assignment("n_dim=" + std::to_string(*o.n_dim));
  if (o.n_seeds) cfg.set_assignment("n_seeds=" + std::to_string(*o.n_seeds));
  if (!o.out.empty()) cfg.set_assignment("out=" + o.out);
  if (forced_mode) cfg.set_assignment("modes=[" + *forced_mode + "]");
  return cfg;
}

int run_sweep_command(const RunOptions& o, const std::optional<std::string>& mode) {
  const Config cfg = resolve(o, o.config, mode);
  const SweepSpec spec = spec_from_config(cfg);
  const auto summary = write_sweep(spec, cfg, spec.output_path, worker_count(o.workers));
  return summary.failed_rows ? kExitPartial : kExitOk;
}

struct CompareCli {
  std::string replica;
  std::string empirical;
  std::string out;
  double sigma = 3.0;
  double min_fraction = 0.9;
  std::vector<std::string> judged = {"eg"};
};

int run_compare(const CompareCli& c) {
  const CsvTable rep = CsvTable::load(c.replica);
  const CsvTable emp = CsvTable::load(c.empirical);
  CompareOptions opt;
  opt.sigma = c.sigma;
  opt.min_pass_fraction = c.min_fraction;
  opt.judged = c.judged;
  const CompareResult res = compare_tables(rep, emp, opt);

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!c.out.empty()) {
    file.open(c.out);
    if (!file) throw std::runtime_error("cannot write '" + c.out + "'");
    os = &file;
  }
  *os << "point,mode,z_eg,z_m,z_q,z_s,excluded,pass\n";
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    const auto& p = res.points[i];
    *os << i << ',' << p.mode;
    for (const char* q : {"eg", "m", "q", "s"}) {
      auto it = p.z.find(q);
      *os << ',' << (it == p.z.end() ? std::string() : format_real(it->second));
    }
    *os << ',' << (p.excluded ? 1 : 0) << ',' << (p.pass ? 1 : 0) << '\n';
  }
  std::cerr << "compare: " << res.passed << "/" << res.considered
            << " points within " << c.sigma << " sigma ("
            << (res.points.size() - res.considered) << " excluded): "
            << (res.pass ? "PASS" : "FAIL") << '\n';
  for (const auto* p : res.failures()) {
    std::cerr << "  outside: " << p->mode << " {" << p->key << "}\n";
  }
  return res.pass ? kExitOk : kExitPartial;
}

struct FiguresCli {
  RunOptions run;
  std::string specs_dir = "configs/figures";
  std::string out_dir = "data/figures";
  std::vector<std::string> only;
};

int run_figures(const FiguresCli& f) {
  std::vector<fs::path> specs;
  for (const auto& entry : fs::directory_iterator(f.specs_dir)) {
    if (entry.path().extension() == ".cfg") specs.push_back(entry.path());
  }
  std::sort(specs.begin(), specs.end());
  if (specs.empty()) throw ConfigError("no .cfg files in " + f.specs_dir);
  fs::create_directories(f.out_dir);
  int status = kExitOk;
  for (const auto& path : specs) {
    const std::string stem = path.stem().string();
    if (!f.only.empty() &&
        std::find(f.only.begin(), f.only.end(), stem) == f.only.end()) {
      continue;
    }
    RunOptions o = f.run;
    o.out = (fs::path(f.out_dir) / (stem + ".csv")).string();
    std::cerr << "figures-data: " << path.string() << " -> " << o.out << '\n';
    const Config cfg = resolve(o, path.string(), std::nullopt);
    const SweepSpec spec = spec_from_config(cfg);
    const auto summary = write_sweep(spec, cfg, o.out, worker_count(o.workers));
    if (summary.failed_rows) status = kExitPartial;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replica predictions and finite-size experiments for knowledge "
               "distillation in the Gaussian mixture model"};
  app.require_subcommand(1);

  RunOptions teacher_o, kd_o, bo_o, sim_o, sweep_o;
  auto* teacher = app.add_subcommand("solve-teacher", "Replica fixed point of the teacher");
  add_run_options(teacher, teacher_o);
  auto* kd = app.add_subcommand("solve-kd", "Replica fixed point of the distilled student");
  add_run_options(kd, kd_o);
  auto* bo = app.add_subcommand("solve-bo-kd",
                                "Replica fixed point of the student distilled from the "
                                "Bayes-optimal proxy teacher");
  add_run_options(bo, bo_o);
  auto* sim = app.add_subcommand("simulate", "Train teacher and student on sampled data");
  add_run_options(sim, sim_o);
  auto* sweep = app.add_subcommand("sweep", "Run every mode listed in the config");
  add_run_options(sweep, sweep_o);

  CompareCli cmp;
  auto* compare = app.add_subcommand("compare", "z-scores of simulations against replica rows");
  compare->add_option("--replica", cmp.replica, "CSV with replica rows")->required();
  compare->add_option("--empirical", cmp.empirical, "CSV with simulate rows")->required();
  compare->add_option("--sigma", cmp.sigma, "Threshold in standard errors");
  compare->add_option("--min-fraction", cmp.min_fraction,
                      "Fraction of points that must pass");
  compare->add_option("--fields", cmp.judged, "Quantities judged (eg, m, q, s)")
      ->delimiter(',');
  compare->add_option("--out", cmp.out, "Comparison table (default: stdout)");

  FiguresCli fig;
  auto* figures = app.add_subcommand("figures-data", "Run every config in a directory");
  add_run_options(figures, fig.run, false);
  figures->add_option("--specs", fig.specs_dir, "Directory of .cfg files");
  figures->add_option("--out-dir", fig.out_dir, "Directory for the CSVs");
  figures->add_option("--only", fig.only, "Config stems to run (e.g. fig1)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; every usage error maps to the hard-error code.
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*teacher) return run_sweep_command(teacher_o, "replica-teacher");
    if (*kd) return run_sweep_command(kd_o, "replica-kd");
    if (*bo) return run_sweep_command(bo_o, "replica-bo-kd");
    if (*sim) return run_sweep_command(sim_o, "simulate");
    if (*sweep) {
      if (sweep_o.config.empty()) {
        std::cerr << "sweep: --config is required\n";
        return kExitError;
      }
      return run_sweep_command(sweep_o, std::nullopt);
    }
    if (*compare) return run_compare(cmp);
    if (*figures) return run_figures(fig);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
