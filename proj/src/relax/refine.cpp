#include <timeopt/relax.hpp>

#include <json.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace timeopt {

namespace {

bool below(const ViolationReport& v, const ConvergenceThresholds& th)
{
  return v.com_err < th.com && v.lin_err < th.lin && v.ang_err < th.ang;
}

/// Worst ratio of audit error to threshold; used to rank iterates.
double audit_score(const ViolationReport& v, const ConvergenceThresholds& th)
{
  return std::max({v.com_err / th.com, v.lin_err / th.lin, v.ang_err / th.ang});
}

} // namespace

void RefinementSettings::check() const
{
  const auto fail = [](const char* what) { throw std::invalid_argument(fmt::format("refinement settings: {}", what)); };
  if (!(sigma0 > 0.0))
    fail("sigma0 must be positive");
  if (!(sigma_shrink > 0.0 && sigma_shrink < 1.0))
    fail("sigma_shrink must lie in (0, 1)");
  if (!(w0 >= 0.0))
    fail("w0 must be nonnegative");
  if (!(w_growth > 1.0))
    fail("w_growth must exceed 1");
  if (!(w_max >= w0))
    fail("w_max must be at least w0");
  if (max_outer < 0)
    fail("max_outer must be nonnegative");
  if (!(thresholds.com > 0.0 && thresholds.lin > 0.0 && thresholds.ang > 0.0))
    fail("thresholds must be positive");
  if (!(infeasibility_backoff >= 1.0))
    fail("infeasibility_backoff must be at least 1");
  if (!(dt_step0 > 0.0 && dt_step_shrink > 0.0 && dt_step_shrink < 1.0 && dt_step_freeze >= 0.0))
    fail("dt step schedule must be positive and shrinking");
  if (!(dc_reg >= 0.0))
    fail("dc_reg must be nonnegative");
  if (!(solver.tol > 0.0))
    fail("solver tolerance must be positive");
}

RefinementSettings default_settings(const Scenario& scenario)
{
  RefinementSettings s;
  s.sigma0 = scenario.config.cost_weights.trust_sigma0;
  s.w0 = scenario.config.cost_weights.soft_penalty_w0;
  return s;
}

std::string_view to_string(RefineStatus status)
{
  switch (status) {
  case RefineStatus::Converged:
    return "converged";
  case RefineStatus::NotConverged:
    return "not_converged";
  case RefineStatus::Infeasible:
    return "infeasible";
  case RefineStatus::SolverFailure:
    return "solver_failure";
  }
  return "unknown";
}

std::string iteration_json(const IterationRecord& rec)
{
  nlohmann::json j;
  j["iteration"] = rec.iteration;
  j["phase"] = rec.phase;
  j["sigma"] = rec.sigma;
  j["w"] = rec.w;
  j["status"] = std::string(to_string(rec.solver_status));
  j["accepted"] = rec.accepted;
  j["com_err"] = rec.violation.com_err;
  j["lin_err"] = rec.violation.lin_err;
  j["ang_err"] = rec.violation.ang_err;
  j["slack_min"] = rec.slack.min;
  j["slack_max"] = rec.slack.max;
  j["solver_iterations"] = rec.solver_iterations;
  j["solve_time"] = rec.solve_time;
  return j.dump();
}

RefineResult refine(const Scenario& scenario, const RefinementSettings& settings, std::ostream* log)
{
  settings.check();
  const bool trust = scenario.config.relaxation_mode == RelaxationMode::TrustRegion;
  const bool timed = optimizes_time(scenario.config.time_mode);
  const auto& th = settings.thresholds;

  RelaxOptions opts;
  opts.dc_reg = settings.dc_reg;
  RelaxedProblem problem = build_convex_relaxation(scenario, opts);
  const auto nv = static_cast<std::size_t>(problem.layout.n_vars);

  RefineResult res;
  auto& report = res.report;
  report.kkt = kkt_stats(problem.builder.build());

  std::vector<double> x;
  double best_score = std::numeric_limits<double>::infinity();
  const auto audit = [&](std::span<const double> v) {
    const auto traj = extract_trajectory(problem.layout, scenario, v);
    const auto ctrl = extract_controls(problem.layout, scenario, v);
    return violation_metrics(traj, ctrl, scenario.plan, scenario.config, scenario.initial);
  };
  const auto emit = [&](IterationRecord rec) {
    report.total_solve_time += rec.solve_time;
    if (log)
      *log << iteration_json(rec) << '\n';
    report.iterations.push_back(std::move(rec));
  };
  const auto accept = [&](const ConicSolution& sol, IterationRecord& rec) {
    std::vector<double> v(sol.x.data(), sol.x.data() + nv);
    rec.accepted = true;
    rec.violation = audit(v);
    rec.slack = auxiliary_slack(problem.layout, v);
    const double score = audit_score(rec.violation, th);
    if (score <= best_score) {
      best_score = score;
      res.x = v;
      res.violation = rec.violation;
    }
    x = std::move(v);
  };

  // Convex-only relaxation.
  {
    const ConicSolution sol = solve(problem.builder.build(), settings.solver);
    IterationRecord rec;
    rec.solver_status = sol.status;
    rec.solver_iterations = sol.iterations;
    rec.solve_time = sol.solve_time;
    if (sol.status != SolveStatus::Optimal) {
      report.status = sol.status == SolveStatus::PrimalInfeasible ? RefineStatus::Infeasible : RefineStatus::SolverFailure;
      emit(rec);
      res.x.assign(nv, 0.0);
      res.trajectory = extract_trajectory(problem.layout, scenario, res.x);
      res.controls = extract_controls(problem.layout, scenario, res.x);
      return res;
    }
    accept(sol, rec);
    emit(rec);
  }

  int phase = 1;
  double sigma = settings.sigma0;
  double w = settings.w0;
  double dt_step = settings.dt_step0;
  ViolationReport last = report.iterations.back().violation; // of the latest accepted iterate
  bool converged = below(last, th);
  for (int it = 1; it <= settings.max_outer && !converged; ++it) {
    report.outer_iterations = it;
    if (timed && settings.phase2_enabled && phase == 1 && last.com_err < settings.phase2_switch.com &&
        last.lin_err < settings.phase2_switch.lin)
      phase = 2;
    opts.dc_reg_center = x;
    if (phase == 2) {
      opts.time_linearization = x;
      opts.dt_step = dt_step < settings.dt_step_freeze ? 0.0 : dt_step;
      dt_step *= settings.dt_step_shrink;
    }
    problem = build_convex_relaxation(scenario, opts);

    IterationRecord rec;
    rec.iteration = it;
    rec.phase = phase;
    ConicSolution sol;
    if (trust) {
      for (int attempt = 0; attempt < 2; ++attempt) {
        // Linearized time products need no trust rows.
        const double sigma_time = phase == 2 ? std::numeric_limits<double>::infinity() : sigma;
        sol = solve(add_trust_regions(problem, x, sigma, sigma_time), settings.solver);
        rec.solve_time += sol.solve_time;
        rec.solver_iterations += sol.iterations;
        if (sol.status == SolveStatus::Optimal)
          break;
        if (attempt == 0)
          sigma *= settings.infeasibility_backoff;
      }
      rec.sigma = sigma;
    } else {
      sol = solve(add_soft_penalties(problem, x, w), settings.solver);
      rec.solve_time = sol.solve_time;
      rec.solver_iterations = sol.iterations;
      rec.w = w;
    }
    rec.solver_status = sol.status;
    if (sol.status != SolveStatus::Optimal) {
      emit(rec);
      // An infeasible trust region keeps the prior; sigma stays backed off.
      if (trust && sol.status == SolveStatus::PrimalInfeasible)
        continue;
      break;
    }
    accept(sol, rec);
    last = rec.violation;
    converged = below(last, th);
    emit(rec);
    sigma *= settings.sigma_shrink;
    w = std::min(w * settings.w_growth, settings.w_max);
  }

  report.status = converged ? RefineStatus::Converged : RefineStatus::NotConverged;
  if (converged) {
    res.x = x;
    res.violation = report.iterations.back().violation;
  }
  res.trajectory = extract_trajectory(problem.layout, scenario, res.x);
  res.controls = extract_controls(problem.layout, scenario, res.x);
  return res;
}

} // namespace timeopt
