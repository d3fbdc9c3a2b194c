#pragma once

#include <timeopt/relax.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace timeopt {

/// Summary of one optimize run, stored as report.json in the run directory.
struct RunReport
{
  std::string scenario;
  TimeMode time_mode = TimeMode::FixedTime;
  RelaxationMode relaxation_mode = RelaxationMode::TrustRegion;
  RefineStatus status = RefineStatus::NotConverged;
  KktStats kkt;
  int outer_iterations = 0;
  double total_solve_time = 0.0;
  ViolationReport violation;
  double duration = 0.0;
  double nominal_horizon = 0.0;
  double mass = 0.0;
  unsigned seed = 0;
  std::map<std::string, std::string> files; ///< role -> file name in the run directory
  std::vector<IterationRecord> iterations;
};

std::string report_json(const RunReport& report);
/// Throws std::runtime_error on malformed input.
RunReport parse_report_json(std::string_view text);

/// step, dt, r_xyz, l_xyz, k_xyz, ldot_xyz, kdot_xyz; one row per timestep.
void write_trajectory_csv(std::ostream& os, const CentroidalTrajectory& traj);
CentroidalTrajectory read_trajectory_csv(std::istream& is);

/// step, eef, f_xyz, tau, z_xy; active contacts only.
void write_controls_csv(std::ostream& os, const ControlTrajectory& controls);
/// `dt` comes from the trajectory table.
ControlTrajectory read_controls_csv(std::istream& is, const std::vector<double>& dt);

/// step, t_start, dt, then one 0/1 column per end-effector.
void write_activations_csv(std::ostream& os, const ContactPlan& plan, const std::vector<double>& dt);

struct RunArtifacts
{
  RunReport report;
  CentroidalTrajectory trajectory;
  ControlTrajectory controls;
};

/// Throws std::runtime_error when a file is missing or malformed.
RunArtifacts load_run(const std::filesystem::path& dir);

/// Problem size and solve time, one column per run.
std::string format_size_table(const std::vector<RunReport>& runs, const std::vector<std::string>& labels);
/// Audit errors, one column per run.
std::string format_violation_table(const std::vector<RunReport>& runs, const std::vector<std::string>& labels);

struct OptimizeOptions
{
  std::optional<TimeMode> time_mode;
  std::optional<RelaxationMode> relaxation_mode;
  std::optional<double> sigma0;
  std::optional<double> w0;
  std::optional<int> max_outer;
  std::optional<double> tol; ///< conic solver tolerance
  unsigned seed = 0;
  std::filesystem::path out_dir = "run";
  std::ostream* log = nullptr; ///< JSON-lines iteration log
  /// When set, the convex-only relaxation is written here in the program
  /// dump format before solving.
  std::filesystem::path dump_program;
};

/// Exit codes of the commands.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitNotConverged = 2, kExitInfeasible = 3 };

/// Runs the refinement and writes trajectory.csv, controls.csv,
/// activations.csv and report.json into `out_dir`. Messages go to `err`.
int cmd_optimize(const std::filesystem::path& scenario_path, const OptimizeOptions& options, std::ostream& err,
                 RunReport* report = nullptr);
/// Prints the size and violation tables for the given run directories.
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out, std::ostream& err);
/// Parses and validates a scenario file.
int cmd_validate(const std::filesystem::path& scenario_path, std::ostream& out, std::ostream& err);

} // namespace timeopt
