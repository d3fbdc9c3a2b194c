#pragma once

#include <timeopt/conic.hpp>
#include <timeopt/dc.hpp>
#include <timeopt/dynamics.hpp>
#include <timeopt/model.hpp>

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace timeopt {

enum class PairKind { Cross, Time };

/// Variable indices of one timestep t = 1..n (stored at t-1).
struct StepBlock
{
  int r = -1, l = -1, k = -1, ldot = -1, kdot = -1; ///< first index of each 3-block
  int dt = -1;                                      ///< -1 in fixed-time mode
  std::array<int, 9> time_pairs{-1, -1, -1, -1, -1, -1, -1, -1, -1}; ///< l*dt, ldot*dt, kdot*dt
};

/// One active end-effector at one timestep.
struct ContactBlock
{
  int step = 0; ///< 0-based
  std::string eef;
  int f = -1, tau = -1, z = -1;
  std::array<int, 3> cross_pairs{-1, -1, -1};
};

struct RelaxedProblemLayout
{
  int n_vars = 0;
  TimeMode time_mode = TimeMode::FixedTime;
  std::vector<StepBlock> steps;
  std::vector<ContactBlock> contacts;
  std::vector<DcPair> pairs;
  std::vector<PairKind> kinds;
  std::vector<int> cost_vars; ///< epigraph variables of the objective

  int count(PairKind kind) const;
  /// Indices of all variables referenced by the layout, each exactly once
  /// when the layout is consistent.
  std::vector<int> claimed_indices() const;
};

/// Convex-only relaxation kept in builder form so that refinement rows can
/// be appended.
struct RelaxedProblem
{
  ProgramBuilder builder;
  RelaxedProblemLayout layout;
};

struct RelaxOptions
{
  /// Linear cost on every auxiliary; keeps pbar, qbar from drifting up in
  /// the convex-only solve.
  double dc_reg = 1e-3;
  /// When set, the auxiliary cost is taken relative to the linearization at
  /// this point, dc_reg * (pbar - lin(|plus|^2) + qbar - lin(|minus|^2)), so
  /// it no longer pulls the operands toward zero.
  std::span<const double> dc_reg_center;
  /// When set, time products are replaced by their first-order expansion at
  /// this point (phase 2).
  std::span<const double> time_linearization;
  /// With a linearization point, |dt - dt_prior| <= dt_step; 0 fixes dt.
  std::optional<double> dt_step;
};

RelaxedProblem build_convex_relaxation(const Scenario& scenario, const RelaxOptions& options = {});

/// lin(p) >= pbar - sigma and lin(q) >= qbar - sigma for every pair.
ConicProgram add_trust_regions(const RelaxedProblem& problem, std::span<const double> prior, double sigma);
/// Separate width for the time pairs; no rows for them when it is infinite.
ConicProgram add_trust_regions(const RelaxedProblem& problem, std::span<const double> prior, double sigma,
                               double sigma_time);

/// Adds w * (pbar - lin(p))^2 + w * (qbar - lin(q))^2 for every pair.
ConicProgram add_soft_penalties(const RelaxedProblem& problem, std::span<const double> prior, double w);

/// Largest and smallest pbar - |p|^2 over all auxiliaries.
struct SlackRange
{
  double min = 0.0;
  double max = 0.0;
};
SlackRange auxiliary_slack(const RelaxedProblemLayout& layout, std::span<const double> x);

CentroidalTrajectory extract_trajectory(const RelaxedProblemLayout& layout, const Scenario& scenario,
                                        std::span<const double> x);
ControlTrajectory extract_controls(const RelaxedProblemLayout& layout, const Scenario& scenario,
                                   std::span<const double> x);

struct ConvergenceThresholds
{
  double com = 1e-6;
  double lin = 1e-5;
  double ang = 1e-2;
};

struct RefinementSettings
{
  double sigma0 = 1.0;
  double sigma_shrink = 0.5;
  double w0 = 1.0;
  double w_growth = 5.0;
  double w_max = 1e8;
  int max_outer = 20;
  ConvergenceThresholds thresholds;
  bool phase2_enabled = true;
  /// Audit level of CoM and linear momentum at which time products switch
  /// to their first-order expansion.
  ConvergenceThresholds phase2_switch{.com = 5e-2, .lin = 1.0, .ang = 0.0};
  /// Phase 2 bounds the timestep change by dt_step0 * dt_step_shrink^k and
  /// fixes dt once the bound drops below dt_step_freeze.
  double dt_step0 = 0.02;
  double dt_step_shrink = 0.1;
  double dt_step_freeze = 1e-6;
  double infeasibility_backoff = 2.0;
  double dc_reg = 1e-3;
  SolverSettings solver{.tol = 1e-9, .max_iter = 200};

  /// Throws std::invalid_argument when a field is out of range.
  void check() const;
};

/// sigma0 and w0 taken from the scenario's cost weights.
RefinementSettings default_settings(const Scenario& scenario);

enum class RefineStatus { Converged, NotConverged, Infeasible, SolverFailure };
std::string_view to_string(RefineStatus status);

struct IterationRecord
{
  int iteration = 0;
  int phase = 0; ///< 0 convex-only, 1 all products relaxed, 2 time products linearized
  double sigma = 0.0; ///< trust width, 0 when not used
  double w = 0.0;     ///< penalty weight, 0 when not used
  SolveStatus solver_status = SolveStatus::Optimal;
  bool accepted = false;
  ViolationReport violation;
  SlackRange slack;
  int solver_iterations = 0;
  double solve_time = 0.0;
};

struct SolveReport
{
  RefineStatus status = RefineStatus::NotConverged;
  int outer_iterations = 0;
  double total_solve_time = 0.0;
  KktStats kkt;
  std::vector<IterationRecord> iterations;
};

struct RefineResult
{
  CentroidalTrajectory trajectory;
  ControlTrajectory controls;
  ViolationReport violation;
  SolveReport report;
  std::vector<double> x;
};

/// Convex-only solve followed by trust-region or penalty refinement until the
/// audit falls below the thresholds. `log`, when given, receives one JSON
/// object per outer iteration.
RefineResult refine(const Scenario& scenario, const RefinementSettings& settings, std::ostream* log = nullptr);

std::string iteration_json(const IterationRecord& rec);

} // namespace timeopt
