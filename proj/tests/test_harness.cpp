#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "kdreplica/harness/compare.hpp"
#include "kdreplica/harness/config.hpp"
#include "kdreplica/harness/csv.hpp"
#include "kdreplica/harness/output.hpp"
#include "kdreplica/harness/sweep.hpp"
#include "kdreplica/replica/kd.hpp"
#include "kdreplica/replica/teacher.hpp"

using namespace kdreplica;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kdreplica_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KDR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallSweep = R"(
# two alpha values, both replica modes and the simulator
name = small
alpha = [1.0, 2.0]
lambda_t = 0.1
lambda_s = 0.05
chi = 0.5
eta = 0.5
rho = 0.2
modes = [replica-teacher, replica-kd, simulate]
n_dim = 60
n_seeds = 2
n_test = 2000
seed = 5
)";

std::vector<SweepRecord> run_text(const std::string& text, int workers = 1) {
  return run_sweep(spec_from_config(Config::parse(text)), workers);
}

}  // namespace

TEST(Config, ScalarsListsAndRanges) {
  const Config c = Config::parse(R"(
alpha = [0.5, 1,
         2]          # continued list
lambda_t = logspace(-2, 0, 3)
chi = linspace(0, 1, 5)
name = "quoted"
n_seeds = 4
simulate_student = false
)");
  EXPECT_EQ(c.get_numbers("alpha"), (std::vector<double>{0.5, 1.0, 2.0}));
  const auto lt = c.get_numbers("lambda_t");
  ASSERT_EQ(lt.size(), 3u);
  EXPECT_NEAR(lt[0], 0.01, 1e-16);
  EXPECT_NEAR(lt[1], 0.1, 1e-16);
  EXPECT_NEAR(lt[2], 1.0, 1e-16);
  EXPECT_EQ(c.get_numbers("chi"), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  EXPECT_EQ(c.get_string("name", ""), "quoted");
  EXPECT_EQ(c.get_integer("n_seeds", 0), 4);
  EXPECT_FALSE(c.get_bool("simulate_student", true));
  EXPECT_EQ(c.get_number("delta", 7.0), 7.0);
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse("beta = 1"), ConfigError);
  EXPECT_THROW(Config::parse("alpha 1"), ConfigError);
  EXPECT_THROW(Config::parse("alpha = [1, 2"), ConfigError);
  EXPECT_THROW(Config::parse("alpha = linspace(1, 2)"), ConfigError);
  EXPECT_THROW(Config::parse("alpha = "), ConfigError);
  EXPECT_THROW(Config::parse("alpha = abc").get_number("alpha", 0), ConfigError);
  try {
    Config::parse("\n\nbeta = 1", "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:3"), std::string::npos);
  }
}

TEST(Config, PrecedenceFileEnvCommandLine) {
  Config c = Config::parse("alpha = 1\nrho = 0.3\ndelta = 2");
  setenv("KDR_ALPHA", "4", 1);
  setenv("KDR_RHO", "0.25", 1);
  c.apply_env();
  unsetenv("KDR_ALPHA");
  unsetenv("KDR_RHO");
  c.set_assignment("rho=0.1");
  EXPECT_EQ(c.get_number("alpha", 0), 4.0);
  EXPECT_EQ(c.get_number("rho", 0), 0.1);
  EXPECT_EQ(c.get_number("delta", 0), 2.0);
  EXPECT_THROW(c.set_assignment("nope=1"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  const Config c = Config::parse("alpha = linspace(1, 3, 3)\nname = x\nseed = 9");
  const Config d = Config::parse(c.dump());
  EXPECT_EQ(d.get_numbers("alpha"), c.get_numbers("alpha"));
  EXPECT_EQ(d.dump(), c.dump());
}

TEST(Sweep, AxesAreOrderedWithAlphaLast) {
  const SweepSpec s = spec_from_config(
      Config::parse("alpha = [1, 2, 3]\nchi = [0, 1]\nrho = 0.3\nmodes = [replica-kd]"));
  ASSERT_EQ(s.axes.size(), 2u);
  EXPECT_EQ(s.axes[0].name, "chi");
  EXPECT_EQ(s.axes[1].name, "alpha");
  EXPECT_EQ(s.grid_size(), 6u);
  EXPECT_EQ(s.line_length(), 3u);
  EXPECT_EQ(s.point(0).chi(), 0.0);
  EXPECT_EQ(s.point(1).alpha(), 2.0);
  EXPECT_EQ(s.point(4).chi(), 1.0);
  EXPECT_EQ(s.point(4).alpha(), 2.0);
  EXPECT_EQ(s.point(4).rho(), 0.3);
}

TEST(Sweep, SpecValidation) {
  EXPECT_THROW(spec_from_config(Config::parse("alpha = [2, 1]\nmodes = [replica-teacher]")),
               ConfigError);
  EXPECT_THROW(spec_from_config(Config::parse("rho = 2\nmodes = [replica-teacher]")),
               ConfigError);
  EXPECT_THROW(spec_from_config(Config::parse("modes = [fancy]")), ConfigError);
  EXPECT_THROW(spec_from_config(Config::parse("optimize = lambda_q\nmodes = [simulate]")),
               ConfigError);
}

TEST(Sweep, SeedHashIsStableAndSpread) {
  EXPECT_EQ(run_seed(0, 0, 0), run_seed(0, 0, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t g = 0; g < 20; ++g) {
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(run_seed(7, g, s));
  }
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_NE(run_seed(1, 0, 0), run_seed(2, 0, 0));
  // splitmix64 reference output for input 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Sweep, RowsCoverGridTimesModes) {
  const auto rows = run_text(kSmallSweep);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].index, i / 3);
    EXPECT_EQ(rows[i].status, "ok") << rows[i].message;
  }
  EXPECT_EQ(rows[0].mode, Mode::ReplicaTeacher);
  EXPECT_EQ(rows[2].mode, Mode::Simulate);
  ASSERT_TRUE(rows[2].empirical.has_value());
  EXPECT_EQ(rows[2].empirical->n_seeds, 2);
  EXPECT_TRUE(rows[2].empirical->eg.has_value());
  EXPECT_TRUE(rows[2].empirical->eg_t.has_value());
}

TEST(Sweep, SinglePointMatchesDirectSolve) {
  const auto rows = run_text(
      "alpha = 2.5\nlambda_t = 0.2\nlambda_s = 0.01\nchi = 0.7\ntemp = 2\n"
      "modes = [replica-teacher, replica-kd]");
  ASSERT_EQ(rows.size(), 2u);
  ModelParamsInit v;
  v.alpha = 2.5;
  v.lambda_t = 0.2;
  v.lambda_s = 0.01;
  v.chi = 0.7;
  v.temp = 2;
  const ModelParams p(v);
  const auto t = solve_teacher(p);
  const auto s = solve_kd(p, t);
  EXPECT_NEAR(rows[0].replica->eg, t.eg, 1e-12);
  EXPECT_NEAR(rows[0].replica->m, t.m_t, 1e-10);
  EXPECT_NEAR(rows[1].replica->eg, s.eg, 1e-12);
  EXPECT_NEAR(*rows[1].replica->s, s.s, 1e-10);
  EXPECT_NEAR(*rows[1].replica->eg_t, t.eg, 1e-12);
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
  const auto a = run_text(kSmallSweep, 1);
  const auto b = run_text(kSmallSweep, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(csv_row(a[i]), csv_row(b[i]));
}

TEST(Sweep, EstimatorRowsCarryBayesError) {
  const auto rows = run_text(
      "alpha = 4\neta = 0.5\nmodes = [estimators]\nn_dim = 200\nn_seeds = 3\nn_test = 5000");
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].replica.has_value());
  EXPECT_NEAR(rows[0].replica->eg, bayes_optimal_error(4.0, 1.0, 0.5, 0.5), 1e-15);
  EXPECT_NEAR(*rows[0].replica->eg_t, bayes_optimal_error(4.0, 1.0, 0.5), 1e-15);
}

TEST(Csv, HeaderAndRowShape) {
  const auto rows = run_text(kSmallSweep);
  const auto& cols = csv_columns();
  EXPECT_EQ(cols.front(), "alpha");
  EXPECT_EQ(cols.back(), "status");
  for (const auto& r : rows) EXPECT_EQ(csv_fields(r).size(), cols.size());
  std::stringstream ss;
  ss << csv_header() << '\n';
  for (const auto& r : rows) ss << csv_row(r) << '\n';
  const CsvTable t = CsvTable::parse(ss);
  EXPECT_EQ(t.size(), rows.size());
  EXPECT_EQ(t.field(0, "mode"), "replica-teacher");
  EXPECT_NEAR(*t.number(1, "eg"), rows[1].replica->eg, 1e-11);
  EXPECT_FALSE(t.number(0, "s").has_value());
  EXPECT_EQ(format_real(0.1), "0.1");
}

TEST(Compare, SelfConsistentTablesPassAndCorruptionFails) {
  const auto rows = run_text(kSmallSweep);
  std::stringstream ss;
  ss << csv_header() << '\n';
  for (const auto& r : rows) ss << csv_row(r) << '\n';
  const CsvTable t = CsvTable::parse(ss);

  // Replace each replica row by the simulation mean: every z-score is zero.
  auto as_replica = rows;
  for (auto& r : as_replica) {
    if (!r.replica || r.mode == Mode::Simulate) continue;
    const auto& e = *rows[(r.index * 3) + 2].empirical;
    const bool teacher = r.mode == Mode::ReplicaTeacher;
    r.replica->eg = teacher ? e.eg_t->mean : e.eg->mean;
  }
  std::stringstream self;
  self << csv_header() << '\n';
  for (const auto& r : as_replica) self << csv_row(r) << '\n';
  const auto ok = compare_tables(CsvTable::parse(self), t);
  EXPECT_TRUE(ok.pass);
  EXPECT_EQ(ok.considered, 4);
  EXPECT_EQ(ok.passed, 4);

  for (auto& r : as_replica) {
    if (r.replica && r.mode != Mode::Simulate) r.replica->eg += 0.3;
  }
  std::stringstream bad;
  bad << csv_header() << '\n';
  for (const auto& r : as_replica) bad << csv_row(r) << '\n';
  const auto ko = compare_tables(CsvTable::parse(bad), t);
  EXPECT_FALSE(ko.pass);
  EXPECT_EQ(ko.passed, 0);
  EXPECT_EQ(ko.failures().size(), 4u);
}

TEST(Compare, MismatchedGridsAreAnError) {
  const auto a = run_text("alpha = [1, 2]\nmodes = [replica-teacher]");
  const auto b = run_text(
      "alpha = [1, 3]\nmodes = [simulate]\nn_dim = 40\nn_seeds = 1\nn_test = 100");
  std::stringstream sa, sb;
  sa << csv_header() << '\n';
  for (const auto& r : a) sa << csv_row(r) << '\n';
  sb << csv_header() << '\n';
  for (const auto& r : b) sb << csv_row(r) << '\n';
  EXPECT_THROW(compare_tables(CsvTable::parse(sa), CsvTable::parse(sb)), CompareError);
}

TEST(Output, WritesTableConfigAndTimings) {
  const fs::path dir = scratch_dir("output");
  Config cfg = Config::parse(kSmallSweep);
  cfg.set_assignment("out=" + (dir / "small.csv").string());
  const SweepSpec spec = spec_from_config(cfg);
  const auto summary = write_sweep(spec, cfg, spec.output_path, 2);
  EXPECT_EQ(summary.rows, 6u);
  EXPECT_EQ(summary.failed_rows, 0u);
  const CsvTable t = CsvTable::load((dir / "small.csv").string());
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.header(), csv_columns());
  const Config back = Config::load((dir / "small.csv.config").string());
  EXPECT_EQ(back.get_numbers("alpha"), (std::vector<double>{1.0, 2.0}));
  const CsvTable timing = CsvTable::load((dir / "small.csv.timing.csv").string());
  EXPECT_EQ(timing.size(), 6u);
  EXPECT_TRUE(timing.has_column("wall_time_s"));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir("cli");
  write_file(dir / "small.cfg", kSmallSweep);
  write_file(dir / "bad.cfg", "beta = 3\nmodes = [replica-teacher]\n");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("solve-teacher --alpha 2 --lambda-t 0.1"), 0);
  EXPECT_EQ(run_cli("solve-teacher --alpha -1"), 1);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli("sweep"), 1);
  EXPECT_EQ(run_cli("sweep --config " + (dir / "bad.cfg").string()), 1);
  const std::string out = (dir / "small.csv").string();
  EXPECT_EQ(run_cli("sweep --config " + (dir / "small.cfg").string() + " --out " + out), 0);
  EXPECT_EQ(CsvTable::load(out).size(), 6u);
  // A 1e-9 threshold cannot be met by a finite simulation.
  EXPECT_EQ(run_cli("compare --replica " + out + " --empirical " + out + " --sigma 1e-9"), 2);
  EXPECT_EQ(run_cli("compare --replica " + out + " --empirical /no/such/file"), 1);
}

TEST(Cli, CommandLineOverridesConfigAndEnvironment) {
  const fs::path dir = scratch_dir("cli_precedence");
  write_file(dir / "one.cfg", "alpha = 1\nlambda_t = 0.1\nmodes = [replica-teacher]\n");
  const std::string cfg = (dir / "one.cfg").string();
  const std::string out = (dir / "one.csv").string();
  ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + out + " --alpha 3"), 0);
  EXPECT_EQ(*CsvTable::load(out).number(0, "alpha"), 3.0);
  setenv("KDR_ALPHA", "2", 1);
  ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + out), 0);
  EXPECT_EQ(*CsvTable::load(out).number(0, "alpha"), 2.0);
  ASSERT_EQ(run_cli("sweep --config " + cfg + " --out " + out + " --set alpha=4"), 0);
  EXPECT_EQ(*CsvTable::load(out).number(0, "alpha"), 4.0);
  unsetenv("KDR_ALPHA");
}
