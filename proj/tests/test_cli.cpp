#include <doctest.h>

#include <timeopt/cli.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace timeopt;
namespace fs = std::filesystem;

namespace {

fs::path corpus(const std::string& name)
{
  return fs::path(TIMEOPT_SOURCE_DIR) / "scenarios" / (name + ".scn");
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir
{
  fs::path path;
  TempDir()
  {
    std::random_device rd;
    path = fs::temp_directory_path() / ("timeopt_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

OptimizeOptions options_in(const fs::path& dir)
{
  OptimizeOptions o;
  o.out_dir = dir;
  return o;
}

} // namespace

TEST_CASE("optimize writes the four run files")
{
  TempDir tmp;
  std::ostringstream err;
  RunReport rep;
  REQUIRE(cmd_optimize(corpus("minimal"), options_in(tmp.path / "run"), err, &rep) == kExitOk);
  for (const char* f : {"trajectory.csv", "controls.csv", "activations.csv", "report.json"})
    CHECK(fs::exists(tmp.path / "run" / f));
  CHECK(rep.files.size() == 4);
  for (const auto& [role, name] : rep.files)
    CHECK(fs::exists(tmp.path / "run" / name));
  CHECK(rep.status == RefineStatus::Converged);
  CHECK(rep.time_mode == TimeMode::FixedTime);
  CHECK(err.str().empty());
}

TEST_CASE("program dump of the convex-only relaxation")
{
  TempDir tmp;
  std::ostringstream err;
  auto o = options_in(tmp.path / "run");
  o.dump_program = tmp.path / "minimal.prog";
  o.time_mode = TimeMode::TimeOptFreeHorizon;
  RunReport rep;
  REQUIRE(cmd_optimize(corpus("minimal"), o, err, &rep) == kExitOk);
  std::ifstream in(o.dump_program);
  const auto prog = read_program(in);
  CHECK(kkt_stats(prog) == rep.kkt);
  const auto sol = solve(prog, 1e-9, 200);
  CHECK(sol.status == SolveStatus::Optimal);
}

TEST_CASE("optimize exit codes")
{
  TempDir tmp;
  std::ostringstream err;
  SUBCASE("infeasible scenario gives 3 with a note")
  {
    CHECK(cmd_optimize(corpus("infeasible"), options_in(tmp.path), err) == kExitInfeasible);
    CHECK(err.str().find("infeasible") != std::string::npos);
  }
  SUBCASE("outer iteration limit gives 2")
  {
    auto o = options_in(tmp.path);
    o.max_outer = 0;
    CHECK(cmd_optimize(corpus("stairs"), o, err) == kExitNotConverged);
  }
  SUBCASE("missing scenario gives 1")
  {
    CHECK(cmd_optimize(tmp.path / "missing.scn", options_in(tmp.path), err) == kExitError);
    CHECK(err.str().find("missing.scn") != std::string::npos);
  }
  SUBCASE("bad override gives 1")
  {
    auto o = options_in(tmp.path);
    o.sigma0 = -1.0;
    CHECK(cmd_optimize(corpus("minimal"), o, err) == kExitError);
    CHECK(err.str().find("sigma0") != std::string::npos);
  }
}

TEST_CASE("free horizon on the low-friction walk lengthens the motion")
{
  TempDir tmp;
  std::ostringstream err;
  auto o = options_in(tmp.path);
  o.time_mode = TimeMode::TimeOptFreeHorizon;
  RunReport rep;
  REQUIRE(cmd_optimize(corpus("low_friction"), o, err, &rep) == kExitOk);
  CHECK(rep.duration > rep.nominal_horizon);
  CHECK(rep.time_mode == TimeMode::TimeOptFreeHorizon);
}

TEST_CASE("property: runs are reproducible byte for byte")
{
  TempDir tmp;
  std::ostringstream err;
  for (const auto mode : {TimeMode::FixedTime, TimeMode::TimeOptFreeHorizon}) {
    auto a = options_in(tmp.path / "a");
    auto b = options_in(tmp.path / "b");
    a.time_mode = b.time_mode = mode;
    a.seed = b.seed = 7;
    REQUIRE(cmd_optimize(corpus("minimal"), a, err) == kExitOk);
    REQUIRE(cmd_optimize(corpus("minimal"), b, err) == kExitOk);
    for (const char* f : {"trajectory.csv", "controls.csv", "activations.csv"})
      CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
  }
}

TEST_CASE("property: exported runs re-audit to the reported violation")
{
  TempDir tmp;
  std::ostringstream err;
  for (const auto& [name, mode] : {std::pair{"minimal", TimeMode::TimeOptFreeHorizon},
                                   std::pair{"hands_under_bar", TimeMode::FixedTime}}) {
    auto o = options_in(tmp.path / name);
    o.time_mode = mode;
    o.max_outer = 3; // the audit need not be small to round-trip
    cmd_optimize(corpus(name), o, err);
    const auto run = load_run(tmp.path / name);
    auto sc = load_scenario_file(corpus(name));
    sc.config.time_mode = mode;
    const auto v = violation_metrics(run.trajectory, run.controls, sc.plan, sc.config, sc.initial);
    CAPTURE(name);
    CHECK(std::abs(v.com_err - run.report.violation.com_err) <= 1e-12);
    CHECK(std::abs(v.lin_err - run.report.violation.lin_err) <= 1e-12);
    CHECK(std::abs(v.ang_err - run.report.violation.ang_err) <= 1e-12);

    // Writing the loaded tables again reproduces the files.
    std::ostringstream traj, ctrl;
    write_trajectory_csv(traj, run.trajectory);
    write_controls_csv(ctrl, run.controls);
    CHECK(traj.str() == slurp(tmp.path / name / "trajectory.csv"));
    CHECK(ctrl.str() == slurp(tmp.path / name / "controls.csv"));
  }
}

TEST_CASE("trajectory CSV layout")
{
  CentroidalTrajectory traj;
  CentroidalState s;
  s.r = Vec3(1, 2, 3);
  s.kdot = Vec3(0.1, -0.2, 1e-300);
  traj.states = {s, s};
  traj.dt = {0.1, 0.25};
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream lines(os.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "step,dt,r_x,r_y,r_z,l_x,l_y,l_z,k_x,k_y,k_z,ldot_x,ldot_y,ldot_z,kdot_x,kdot_y,kdot_z");
  CHECK(row == "0,0.1,1,2,3,0,0,0,0,0,0,0,0,0,0.1,-0.2,1e-300");

  std::istringstream in(os.str());
  const auto back = read_trajectory_csv(in);
  REQUIRE(back.states.size() == 2);
  CHECK(back.dt == traj.dt);
  CHECK(back.states[1].kdot == s.kdot);
}

TEST_CASE("CSV readers reject malformed input")
{
  SUBCASE("wrong header")
  {
    std::istringstream in("step,dt\n0,0.1\n");
    CHECK_THROWS_AS(read_trajectory_csv(in), std::runtime_error);
  }
  SUBCASE("short row")
  {
    std::istringstream in("step,eef,f_x,f_y,f_z,tau,z_x,z_y\n0,left,1,2\n");
    CHECK_THROWS_AS(read_controls_csv(in, {0.1}), std::runtime_error);
  }
  SUBCASE("step out of range")
  {
    std::istringstream in("step,eef,f_x,f_y,f_z,tau,z_x,z_y\n3,left,1,2,3,0,0,0\n");
    CHECK_THROWS_AS(read_controls_csv(in, {0.1}), std::runtime_error);
  }
  SUBCASE("not a number")
  {
    std::istringstream in("step,eef,f_x,f_y,f_z,tau,z_x,z_y\n0,left,1,2,x,0,0,0\n");
    CHECK_THROWS_AS(read_controls_csv(in, {0.1}), std::runtime_error);
  }
  SUBCASE("duplicate contact")
  {
    std::istringstream in("step,eef,f_x,f_y,f_z,tau,z_x,z_y\n0,left,1,2,3,0,0,0\n0,left,1,2,3,0,0,0\n");
    CHECK_THROWS_AS(read_controls_csv(in, {0.1}), std::runtime_error);
  }
}

TEST_CASE("activations CSV")
{
  ContactPlan plan;
  plan.eef_ids = {"left", "right"};
  plan.n_timesteps = 3;
  ContactPhase a;
  a.eef_id = "left";
  a.start_step = 0;
  a.end_step = 2;
  ContactPhase b = a;
  b.eef_id = "right";
  b.start_step = 1;
  b.end_step = 3;
  plan.phases = {a, b};
  std::ostringstream os;
  write_activations_csv(os, plan, {0.1, 0.25, 0.05});
  CHECK(os.str() == "step,t_start,dt,left,right\n0,0,0.1,1,0\n1,0.1,0.25,1,1\n2,0.35,0.05,0,1\n");
}

TEST_CASE("report JSON round trip")
{
  RunReport r;
  r.scenario = "s";
  r.time_mode = TimeMode::TimeOptFixedHorizon;
  r.relaxation_mode = RelaxationMode::SoftConstraint;
  r.status = RefineStatus::SolverFailure;
  r.kkt = {10, 2, 3, 4, 19, 40};
  r.outer_iterations = 5;
  r.total_solve_time = 1.25;
  r.violation = {1e-9, 2e-8, 3e-3, 4e-9, 5e-8, 6e-3};
  r.duration = 2.5;
  r.nominal_horizon = 2.0;
  r.mass = 30.0;
  r.seed = 42;
  r.files = {{"report", "report.json"}};
  IterationRecord rec;
  rec.iteration = 1;
  rec.phase = 2;
  rec.sigma = 0.5;
  rec.solver_status = SolveStatus::MaxIter;
  rec.accepted = false;
  rec.violation.com_err = 0.1;
  rec.slack = {-1e-9, 0.5};
  rec.solver_iterations = 17;
  r.iterations = {rec};

  const auto back = parse_report_json(report_json(r));
  CHECK(report_json(back) == report_json(r));
  CHECK(back.kkt == r.kkt);
  CHECK(back.iterations.at(0).solver_status == SolveStatus::MaxIter);
  CHECK(back.violation.ang_max == 6e-3);
  CHECK_THROWS_AS(parse_report_json("{\"scenario\": 1}"), std::runtime_error);
  CHECK_THROWS_AS(parse_report_json("not json"), std::runtime_error);
}

TEST_CASE("report command")
{
  TempDir tmp;
  std::ostringstream out, err;
  auto fixed = options_in(tmp.path / "fixed");
  fixed.time_mode = TimeMode::FixedTime;
  auto timed = options_in(tmp.path / "timed");
  timed.time_mode = TimeMode::TimeOptFreeHorizon;
  REQUIRE(cmd_optimize(corpus("minimal"), fixed, err) == kExitOk);
  REQUIRE(cmd_optimize(corpus("minimal"), timed, err) == kExitOk);

  SUBCASE("two runs side by side")
  {
    REQUIRE(cmd_report({tmp.path / "fixed", tmp.path / "timed"}, out, err) == kExitOk);
    const auto text = out.str();
    CHECK(text.find("minimal (fixed_time)") != std::string::npos);
    CHECK(text.find("minimal (time_opt_free_horizon)") != std::string::npos);
    for (const char* row : {"variables", "equalities", "inequalities", "SOC constraints", "KKT size", "KKT nnz",
                            "time [sec]"})
      CHECK(text.find(row) != std::string::npos);
  }
  SUBCASE("single run has three violation rows")
  {
    REQUIRE(cmd_report({tmp.path / "fixed"}, out, err) == kExitOk);
    const auto text = out.str();
    const auto table = text.substr(text.find("\n\n") + 2);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    CHECK(table.find("CoM [m]") != std::string::npos);
    CHECK(table.find("linear momentum") != std::string::npos);
    CHECK(table.find("angular momentum") != std::string::npos);
  }
  SUBCASE("empty directory")
  {
    fs::create_directories(tmp.path / "empty");
    CHECK(cmd_report({tmp.path / "empty"}, out, err) == kExitError);
    CHECK(cmd_report({}, out, err) == kExitError);
  }
}

TEST_CASE("validate command")
{
  TempDir tmp;
  std::ostringstream out, err;
  CHECK(cmd_validate(corpus("stairs"), out, err) == kExitOk);
  CHECK(cmd_validate(tmp.path / "none.scn", out, err) == kExitError);

  auto text = slurp(corpus("stairs"));
  const auto pos = text.find("dt_bounds = 0.05 0.25");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 21, "dt_bounds = 0.3 0.1");
  {
    std::ofstream f(tmp.path / "bad.scn");
    f << text;
  }
  err.str("");
  CHECK(cmd_validate(tmp.path / "bad.scn", out, err) == kExitError);
  CHECK(err.str().find("dt_bounds") != std::string::npos);
}
