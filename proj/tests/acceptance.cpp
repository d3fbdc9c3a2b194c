// One line per acceptance criterion; exit status 1 when any fails.

#include "oracles.hpp"

#include <timeopt/dc.hpp>
#include <timeopt/model.hpp>
#include <timeopt/relax.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace timeopt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail)
{
  fmt::print("{} {}: {}\n", ok ? "PASS" : "FAIL", name, detail);
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

Scenario corpus(const std::string& name)
{
  return load_scenario_file(std::string(TIMEOPT_SOURCE_DIR) + "/scenarios/" + name + ".scn");
}

RefineResult run(Scenario sc, TimeMode time, RelaxationMode relax)
{
  sc.config.time_mode = time;
  sc.config.relaxation_mode = relax;
  return refine(sc, default_settings(sc));
}

// Trust-region runs kept for the containment check.
std::vector<std::pair<std::string, RefineResult>> trust_runs;

void dc_exactness()
{
  const auto t0 = Clock::now();
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> mag(-3.0, 3.0);
  VariablePool pool;
  Vec3Expr a, b;
  for (std::size_t i = 0; i < 3; ++i) {
    a[i] = AffineExpr::variable(pool.add("a"));
    b[i] = AffineExpr::variable(pool.add("b"));
  }
  const auto dt = AffineExpr::variable(pool.add("dt"));
  std::vector<double> x(7, 0.0);

  // Operand magnitudes span six decades; the pair scaling is matched to
  // them the way the relaxation matches lever and force bounds.
  double worst = 0.0;
  int count = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Vec3 va, vb;
    const double sa = std::pow(10.0, mag(rng)), sb = std::pow(10.0, mag(rng));
    for (int i = 0; i < 3; ++i) {
      va[i] = sa * u(rng);
      vb[i] = sb * u(rng);
      x[static_cast<std::size_t>(2 * i)] = va[i];
      x[static_cast<std::size_t>(2 * i + 1)] = vb[i];
    }
    const double vdt = 0.05 + 0.2 * (0.5 + 0.5 * u(rng));
    x[6] = vdt;
    if (trial % 2 == 0) {
      const auto pairs = decompose_cross_product(a, b, pool, "c", std::sqrt(sb / sa));
      const Vec3 want = va.cross(vb);
      const double scale = va.norm() * vb.norm();
      for (std::size_t i = 0; i < 3; ++i)
        worst = std::max(worst, std::abs(dc_value(pairs[i], x) - want[static_cast<int>(i)]) / scale);
    } else {
      const auto pairs = decompose_time_bilinear(a, dt, pool, "t", sa, 0.15);
      const double scale = va.norm() * vdt;
      for (std::size_t i = 0; i < 3; ++i)
        worst = std::max(worst, std::abs(dc_value(pairs[i], x) - va[static_cast<int>(i)] * vdt) / scale);
    }
    ++count;
  }
  const double secs = seconds_since(t0);
  report(worst <= 1e-12 && secs < 1.0, "DC exactness",
         fmt::format("{} decompositions, max relative error {:.2e} (limit 1e-12), {:.3f} s (limit 1 s)", count, worst,
                     secs));
}

void conic_correctness()
{
  const auto t0 = Clock::now();
  std::mt19937 rng(202);
  int solved = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    double want = 0.0;
    ConicSolution sol;
    if (trial % 2 == 0) {
      const auto qp = oracle::random_qp(rng, 10, 6, 2);
      const auto ref = oracle::solve_qp_active_set(qp);
      if (!ref)
        continue;
      want = ref->objective;
      sol = solve(oracle::qp_as_socp(qp));
    } else {
      const auto inst = oracle::random_ball_lp(rng, 8);
      want = inst.objective;
      sol = solve(inst.program);
    }
    if (sol.status != SolveStatus::Optimal)
      continue;
    const double err = std::abs(sol.pobj - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, err);
    if (err <= 1e-6)
      ++solved;
  }
  int certified = 0;
  double worst_cert = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto prog = oracle::random_infeasible(rng, trial);
    const auto sol = solve(prog);
    if (sol.status != SolveStatus::PrimalInfeasible)
      continue;
    const double err = oracle::certificate_error(prog, sol);
    worst_cert = std::max(worst_cert, err);
    if (err <= 1e-6)
      ++certified;
  }
  const double secs = seconds_since(t0);
  report(solved == 100 && certified == 20 && secs < 30.0, "Conic solver correctness",
         fmt::format("{}/100 objectives within 1e-6 (worst {:.1e}), {}/20 certificates valid (worst {:.1e}), {:.2f} s "
                     "(limit 30 s)",
                     solved, worst, certified, worst_cert, secs));
}

void stairs_convergence()
{
  const auto sc = corpus("stairs");
  const auto t0 = Clock::now();
  auto res = run(sc, sc.config.time_mode, RelaxationMode::TrustRegion);
  const double secs = seconds_since(t0);
  const auto& v = res.violation;
  const bool ok = res.report.status == RefineStatus::Converged && v.com_err < 1e-6 && v.lin_err < 1e-5 &&
                  v.ang_err < 0.02 && secs < 60.0;
  report(ok, "Oracle-audited convergence (stairs)",
         fmt::format("{} after {} outer iterations, CoM {:.3e} m, lin {:.3e} kg m/s, ang {:.3e} kg m^2/s, {:.2f} s",
                     to_string(res.report.status), res.report.outer_iterations, v.com_err, v.lin_err, v.ang_err,
                     secs));
  trust_runs.emplace_back("stairs", std::move(res));
}

void relaxation_agreement()
{
  const auto sc = corpus("hands_under_bar");
  auto tr = run(sc, sc.config.time_mode, RelaxationMode::TrustRegion);
  const auto soft = run(sc, sc.config.time_mode, RelaxationMode::SoftConstraint);
  const double m = sc.config.mass;
  double num = 0.0, den = 0.0;
  const auto& a = tr.trajectory.states;
  const auto& b = soft.trajectory.states;
  const bool same_shape = a.size() == b.size();
  for (std::size_t t = 0; same_shape && t < a.size(); ++t) {
    num += ((a[t].l - b[t].l) / m).squaredNorm() + ((a[t].k - b[t].k) / m).squaredNorm();
    den += (a[t].l / m).squaredNorm() + (a[t].k / m).squaredNorm();
  }
  const double rms = den > 0.0 ? std::sqrt(num / den) : 0.0;
  const bool ok = same_shape && tr.report.status == RefineStatus::Converged &&
                  soft.report.status == RefineStatus::Converged && rms <= 0.05;
  report(ok, "Relaxation agreement (hands_under_bar)",
         fmt::format("trust {}, soft {}, relative RMS of mass-normalized momenta {:.3f}% (limit 5%)",
                     to_string(tr.report.status), to_string(soft.report.status), 100.0 * rms));
  trust_runs.emplace_back("hands_under_bar", std::move(tr));
}

void time_necessity()
{
  const auto sc = corpus("low_friction");
  const auto fixed = run(sc, TimeMode::FixedTime, RelaxationMode::TrustRegion);
  auto free = run(sc, TimeMode::TimeOptFreeHorizon, RelaxationMode::TrustRegion);
  const double dmax = sc.config.dt_bounds.max;
  const auto& dts = free.trajectory.dt;
  const double longest = dts.empty() ? 0.0 : *std::max_element(dts.begin(), dts.end());
  const double nominal = sc.config.nominal_horizon();
  const double duration = free.trajectory.duration();
  const bool ok = fixed.report.status != RefineStatus::Converged && free.report.status == RefineStatus::Converged &&
                  duration > nominal && std::abs(longest - dmax) <= 1e-6;
  report(ok, "Time-optimization necessity (low_friction)",
         fmt::format("fixed time {}, free horizon {} with T = {:.3f} s (nominal {:.3f} s), max dt {:.6f} s (bound {} s)",
                     to_string(fixed.report.status), to_string(free.report.status), duration, nominal, longest,
                     dmax));
  trust_runs.emplace_back("low_friction", std::move(free));
}

void containment()
{
  double worst_low = 0.0, worst_excess = -std::numeric_limits<double>::infinity();
  int checked = 0;
  for (const auto& [name, res] : trust_runs)
    for (const auto& rec : res.report.iterations) {
      if (rec.iteration == 0 || !rec.accepted)
        continue;
      ++checked;
      worst_low = std::min(worst_low, rec.slack.min);
      worst_excess = std::max(worst_excess, rec.slack.max - rec.sigma);
    }
  const bool ok = checked > 0 && worst_low >= -1e-7 && worst_excess <= 1e-7;
  report(ok, "Trust-region containment",
         fmt::format("{} accepted iterates, min slack {:.2e}, max slack - sigma {:.2e} (limits -1e-7, 1e-7)", checked,
                     worst_low, worst_excess));
}

void size_and_timing()
{
  const auto sc = corpus("stairs");
  const auto fixed = run(sc, TimeMode::FixedTime, RelaxationMode::TrustRegion);
  const auto timed = run(sc, TimeMode::TimeOptFreeHorizon, RelaxationMode::TrustRegion);
  const auto horizon = run(sc, TimeMode::TimeOptFixedHorizon, RelaxationMode::TrustRegion);
  const long n = sc.config.n_timesteps;
  const auto& a = fixed.report.kkt;
  const auto& b = timed.report.kkt;
  const auto& c = horizon.report.kkt;
  // One dt per step and three time products per step, two auxiliaries each.
  const long extra_vars = n + 3 * 3 * 2 * n;
  const bool sizes = b.variables - a.variables == extra_vars && c.variables - a.variables == extra_vars &&
                     b.lin_eq == a.lin_eq && c.lin_eq == a.lin_eq + 1;
  const bool order = timed.report.total_solve_time > fixed.report.total_solve_time;
  report(sizes && order, "Problem size and timing (stairs)",
         fmt::format("variables {} -> {} (+{}, expected +{}), equalities {} -> {} free / {} fixed horizon, solve time "
                     "{:.3f} s fixed vs {:.3f} s time-opt",
                     a.variables, b.variables, b.variables - a.variables, extra_vars, a.lin_eq, b.lin_eq, c.lin_eq,
                     fixed.report.total_solve_time, timed.report.total_solve_time));
}

} // namespace

int main()
{
  const std::vector<std::function<void()>> criteria{dc_exactness,  conic_correctness, stairs_convergence,
                                                    relaxation_agreement, time_necessity, containment, size_and_timing};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      report(false, "criterion threw", e.what());
    }
  }
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
