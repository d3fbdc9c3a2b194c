#include <timeopt/relax.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace timeopt {

namespace {

Vec3Expr var3(int first)
{
  return {AffineExpr::variable(first), AffineExpr::variable(first + 1), AffineExpr::variable(first + 2)};
}

Vec3Expr const3(const Vec3& v) { return {AffineExpr(v.x()), AffineExpr(v.y()), AffineExpr(v.z())}; }

int add3(ProgramBuilder& b, const std::string& name)
{
  const int first = b.add_variable(name + ".x");
  b.add_variable(name + ".y");
  b.add_variable(name + ".z");
  return first;
}

double value_at(std::span<const double> x, int i) { return x[static_cast<std::size_t>(i)]; }

Vec3 vec3_at(std::span<const double> x, int first)
{
  return {value_at(x, first), value_at(x, first + 1), value_at(x, first + 2)};
}

/// Typical magnitudes used to bring every product to order one.
struct Units
{
  double force;  // m |g|
  double lever;  // longest reach
  double dt;
};

Units units_of(const ScenarioConfig& cfg)
{
  Units u{};
  u.force = cfg.mass * std::max(cfg.gravity.norm(), 1.0);
  u.lever = 0.1;
  for (const auto& e : cfg.eefs)
    u.lever = std::max(u.lever, e.max_length);
  u.dt = cfg.nominal_dt;
  return u;
}

} // namespace

int RelaxedProblemLayout::count(PairKind kind) const
{
  return static_cast<int>(std::count(kinds.begin(), kinds.end(), kind));
}

std::vector<int> RelaxedProblemLayout::claimed_indices() const
{
  std::vector<int> out;
  const auto push3 = [&](int first) {
    for (int i = 0; i < 3; ++i)
      out.push_back(first + i);
  };
  for (const auto& s : steps) {
    push3(s.r);
    push3(s.l);
    push3(s.k);
    push3(s.ldot);
    push3(s.kdot);
    if (s.dt >= 0)
      out.push_back(s.dt);
  }
  for (const auto& c : contacts) {
    push3(c.f);
    out.push_back(c.tau);
    out.push_back(c.z);
    out.push_back(c.z + 1);
  }
  for (const auto& p : pairs) {
    out.push_back(p.pbar);
    out.push_back(p.qbar);
  }
  out.insert(out.end(), cost_vars.begin(), cost_vars.end());
  return out;
}

RelaxedProblem build_convex_relaxation(const Scenario& scenario, const RelaxOptions& options)
{
  validate(scenario);
  const auto& cfg = scenario.config;
  const auto& plan = scenario.plan;
  const auto& x0 = scenario.initial;
  const auto& w = cfg.cost_weights;
  const int n = cfg.n_timesteps;
  const double m = cfg.mass;
  const bool timed = optimizes_time(cfg.time_mode);
  const bool linearize_time = timed && !options.time_linearization.empty();
  const Units u = units_of(cfg);

  RelaxedProblem P;
  auto& b = P.builder;
  auto& L = P.layout;
  L.time_mode = cfg.time_mode;

  const auto add_pair = [&](DcPair pair, PairKind kind) {
    L.pairs.push_back(std::move(pair));
    L.kinds.push_back(kind);
    return static_cast<int>(L.pairs.size()) - 1;
  };

  // Variables, one timestep at a time.
  for (int t = 0; t < n; ++t) {
    const int T = t + 1;
    StepBlock s;
    s.r = add3(b, fmt::format("r[{}]", T));
    s.l = add3(b, fmt::format("l[{}]", T));
    s.k = add3(b, fmt::format("k[{}]", T));
    s.ldot = add3(b, fmt::format("ldot[{}]", T));
    s.kdot = add3(b, fmt::format("kdot[{}]", T));
    if (timed)
      s.dt = b.add_variable(fmt::format("dt[{}]", T));
    for (const auto& id : active_contacts(plan, t)) {
      ContactBlock c;
      c.step = t;
      c.eef = id;
      c.f = add3(b, fmt::format("f[{}][{}]", T, id));
      c.tau = b.add_variable(fmt::format("tau[{}][{}]", T, id));
      c.z = b.add_variable(fmt::format("z[{}][{}].x", T, id));
      b.add_variable(fmt::format("z[{}][{}].y", T, id));

      const ContactPhase& ph = *active_phase(plan, id, t);
      const Eigen::Matrix3d R = ph.orientation.toRotationMatrix();
      Vec3Expr ell, f = var3(c.f);
      for (int i = 0; i < 3; ++i) {
        auto& e = ell[static_cast<std::size_t>(i)];
        e = AffineExpr(ph.position[i]) + AffineExpr::variable(c.z, R(i, 0)) + AffineExpr::variable(c.z + 1, R(i, 1)) -
            AffineExpr::variable(s.r + i);
        e *= 1.0 / u.lever;
        f[static_cast<std::size_t>(i)] *= 1.0 / u.force;
      }
      auto cross = decompose_cross_product(ell, f, b.pool(), fmt::format("kappa[{}][{}]", T, id));
      for (std::size_t i = 0; i < 3; ++i) {
        cross[i].scale *= u.lever * u.force;
        c.cross_pairs[i] = add_pair(std::move(cross[i]), PairKind::Cross);
      }
      L.contacts.push_back(std::move(c));
    }
    if (timed) {
      const AffineExpr dt = AffineExpr::variable(s.dt);
      const std::array<std::pair<int, double>, 3> prods = {
          {{s.l, m}, {s.ldot, u.force}, {s.kdot, 0.1 * u.force * u.lever}}};
      const char* names[3] = {"l_dt", "ldot_dt", "kdot_dt"};
      for (std::size_t q = 0; q < 3; ++q) {
        auto tp = decompose_time_bilinear(var3(prods[q].first), dt, b.pool(), fmt::format("{}[{}]", names[q], T),
                                          prods[q].second, u.dt);
        for (std::size_t i = 0; i < 3; ++i)
          s.time_pairs[3 * q + i] = add_pair(std::move(tp[i]), PairKind::Time);
      }
    }
    L.steps.push_back(s);
  }

  // v * dt as an affine expression in the current mode.
  const auto product = [&](const StepBlock& s, int q, int i) -> AffineExpr {
    const int v = (q == 0 ? s.l : q == 1 ? s.ldot : s.kdot) + i;
    if (!timed)
      return AffineExpr::variable(v, cfg.nominal_dt);
    const DcPair& pair = L.pairs[static_cast<std::size_t>(s.time_pairs[static_cast<std::size_t>(3 * q + i)])];
    return linearize_time ? linearized_product(pair, options.time_linearization) : relaxed_expr(pair);
  };

  // Dynamics.
  std::size_t ci = 0;
  for (int t = 0; t < n; ++t) {
    const StepBlock& s = L.steps[static_cast<std::size_t>(t)];
    const Vec3Expr r_prev = t == 0 ? const3(x0.r0) : var3(L.steps[static_cast<std::size_t>(t - 1)].r);
    const Vec3Expr l_prev = t == 0 ? const3(x0.l0) : var3(L.steps[static_cast<std::size_t>(t - 1)].l);
    const Vec3Expr k_prev = t == 0 ? const3(x0.k0) : var3(L.steps[static_cast<std::size_t>(t - 1)].k);
    std::array<AffineExpr, 3> ldot_row, kdot_row;
    for (int i = 0; i < 3; ++i) {
      ldot_row[static_cast<std::size_t>(i)] = AffineExpr::variable(s.ldot + i) - m * cfg.gravity[i];
      kdot_row[static_cast<std::size_t>(i)] = AffineExpr::variable(s.kdot + i);
    }
    for (; ci < L.contacts.size() && L.contacts[ci].step == t; ++ci) {
      const ContactBlock& c = L.contacts[ci];
      const Eigen::Matrix3d R = active_phase(plan, c.eef, t)->orientation.toRotationMatrix();
      for (int i = 0; i < 3; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        ldot_row[iu] -= AffineExpr::variable(c.f + i);
        kdot_row[iu] -= relaxed_expr(L.pairs[static_cast<std::size_t>(c.cross_pairs[iu])]);
        kdot_row[iu] -= AffineExpr::variable(c.tau, R(i, 2));
      }
    }
    for (int i = 0; i < 3; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      b.add_equality(ldot_row[iu]);
      b.add_equality(kdot_row[iu]);
      b.add_equality(AffineExpr::variable(s.l + i) - l_prev[iu] - product(s, 1, i));
      b.add_equality(AffineExpr::variable(s.r + i) - r_prev[iu] - product(s, 0, i) * (1.0 / m));
      b.add_equality(AffineExpr::variable(s.k + i) - k_prev[iu] - product(s, 2, i));
    }
  }
  if (cfg.time_mode == TimeMode::TimeOptFixedHorizon) {
    AffineExpr sum(-cfg.nominal_horizon());
    for (const auto& s : L.steps)
      sum += AffineExpr::variable(s.dt);
    b.add_equality(sum);
  }

  // Physical constraints.
  for (const auto& c : L.contacts) {
    const ContactPhase& ph = *active_phase(plan, c.eef, c.step);
    const Eigen::Matrix3d R = ph.orientation.toRotationMatrix();
    Vec3Expr fl; // R^T f
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        fl[static_cast<std::size_t>(i)] += AffineExpr::variable(c.f + j, R(j, i));
    b.add_soc({fl[2] * cfg.friction_mu, fl[0], fl[1]});
    b.add_nonneg(AffineExpr::variable(c.z) - cfg.cop_x.min);
    b.add_nonneg(cfg.cop_x.max - AffineExpr::variable(c.z));
    b.add_nonneg(AffineExpr::variable(c.z + 1) - cfg.cop_y.min);
    b.add_nonneg(cfg.cop_y.max - AffineExpr::variable(c.z + 1));
    b.add_nonneg(AffineExpr::variable(c.tau) - cfg.torque_bounds.min);
    b.add_nonneg(cfg.torque_bounds.max - AffineExpr::variable(c.tau));
    const EndEffector& eef = cfg.eef(c.eef);
    const StepBlock& s = L.steps[static_cast<std::size_t>(c.step)];
    std::vector<AffineExpr> reach{AffineExpr(eef.max_length)};
    for (int i = 0; i < 3; ++i)
      reach.push_back(AffineExpr(ph.position[i] - (i == 2 ? eef.offset : 0.0)) - AffineExpr::variable(s.r + i));
    b.add_soc(reach);
  }
  if (timed)
    for (const auto& s : L.steps) {
      b.add_nonneg(AffineExpr::variable(s.dt) - cfg.dt_bounds.min);
      b.add_nonneg(cfg.dt_bounds.max - AffineExpr::variable(s.dt));
      if (linearize_time && options.dt_step) {
        const double prior = value_at(options.time_linearization, s.dt);
        if (*options.dt_step <= 0.0) {
          b.add_equality(AffineExpr::variable(s.dt) - prior);
        } else {
          b.add_nonneg(AffineExpr::variable(s.dt) - prior + *options.dt_step);
          b.add_nonneg(prior + *options.dt_step - AffineExpr::variable(s.dt));
        }
      }
    }

  // Objective.
  const auto state_expr = [&](const StepBlock& s, int i) { return AffineExpr::variable((i < 3 ? s.r : i < 6 ? s.l : s.k) + i % 3); };
  {
    std::vector<AffineExpr> terminal;
    for (int i = 0; i < 9; ++i)
      if (w.terminal_state[i] > 0.0)
        terminal.push_back((state_expr(L.steps.back(), i) - x0.h_terminal[i]) * std::sqrt(w.terminal_state[i]));
    if (!terminal.empty())
      L.cost_vars.push_back(b.add_squared_norm_cost(terminal, 1.0, "cost.terminal"));
  }
  ci = 0;
  for (int t = 0; t < n; ++t) {
    const StepBlock& s = L.steps[static_cast<std::size_t>(t)];
    std::vector<AffineExpr> e;
    if (t + 1 < n)
      for (int i = 0; i < 9; ++i)
        if (w.running_momentum_tracking[i] > 0.0)
          e.push_back((state_expr(s, i) - x0.h_des[static_cast<std::size_t>(t)][i]) *
                      std::sqrt(w.running_momentum_tracking[i]));
    for (; ci < L.contacts.size() && L.contacts[ci].step == t; ++ci) {
      const ContactBlock& c = L.contacts[ci];
      if (w.force_reg > 0.0)
        for (int i = 0; i < 3; ++i)
          e.push_back(AffineExpr::variable(c.f + i, std::sqrt(w.force_reg)));
      if (w.torque_reg > 0.0)
        e.push_back(AffineExpr::variable(c.tau, std::sqrt(w.torque_reg)));
      if (w.cop_reg > 0.0)
        for (int i = 0; i < 2; ++i)
          e.push_back(AffineExpr::variable(c.z + i, std::sqrt(w.cop_reg)));
    }
    if (timed && w.dt_reg > 0.0)
      e.push_back((AffineExpr::variable(s.dt) - cfg.nominal_dt) * std::sqrt(w.dt_reg));
    if (!e.empty())
      L.cost_vars.push_back(b.add_squared_norm_cost(e, 1.0, fmt::format("cost[{}]", t + 1)));
  }
  if (options.dc_reg > 0.0) {
    // Without a center, use zero with nominal timesteps so that dt is not
    // pulled toward its lower bound.
    std::vector<double> neutral;
    std::span<const double> center = options.dc_reg_center;
    if (center.empty() && timed) {
      neutral.assign(static_cast<std::size_t>(b.pool().size()), 0.0);
      for (const auto& s : L.steps)
        neutral[static_cast<std::size_t>(s.dt)] = cfg.nominal_dt;
      center = neutral;
    }
    for (const auto& p : L.pairs) {
      AffineExpr reg = AffineExpr::variable(p.pbar) + AffineExpr::variable(p.qbar);
      if (!center.empty())
        reg = reg - linearize_squared_norm(p.plus, center) - linearize_squared_norm(p.minus, center);
      b.add_cost(reg * options.dc_reg);
    }
  }

  // pbar >= |plus|^2, qbar >= |minus|^2 as (v + 1, v - 1, 2e).
  for (const auto& p : L.pairs)
    for (const auto& [aux, parts] : {std::pair{p.pbar, &p.plus}, std::pair{p.qbar, &p.minus}}) {
      std::vector<AffineExpr> cone{AffineExpr::variable(aux) + 1.0, AffineExpr::variable(aux) - 1.0};
      for (const auto& e : *parts)
        cone.push_back(e * 2.0);
      b.add_soc(cone);
    }

  L.n_vars = b.pool().size();
  return P;
}

ConicProgram add_trust_regions(const RelaxedProblem& problem, std::span<const double> prior, double sigma)
{
  return add_trust_regions(problem, prior, sigma, sigma);
}

ConicProgram add_trust_regions(const RelaxedProblem& problem, std::span<const double> prior, double sigma,
                               double sigma_time)
{
  ProgramBuilder b = problem.builder;
  const auto& layout = problem.layout;
  for (std::size_t i = 0; i < layout.pairs.size(); ++i) {
    const auto& p = layout.pairs[i];
    const double s = layout.kinds[i] == PairKind::Time ? sigma_time : sigma;
    if (!std::isfinite(s))
      continue;
    b.add_nonneg(linearize_squared_norm(p.plus, prior) - AffineExpr::variable(p.pbar) + s);
    b.add_nonneg(linearize_squared_norm(p.minus, prior) - AffineExpr::variable(p.qbar) + s);
  }
  return b.build();
}

ConicProgram add_soft_penalties(const RelaxedProblem& problem, std::span<const double> prior, double w)
{
  ProgramBuilder b = problem.builder;
  if (w <= 0.0)
    return b.build();
  // Small cones keep the scaling blocks of the KKT system sparse.
  constexpr std::size_t kChunk = 12;
  std::vector<AffineExpr> e;
  int chunk = 0;
  const auto flush = [&] {
    if (!e.empty())
      b.add_squared_norm_cost(e, w, fmt::format("soft[{}]", chunk++));
    e.clear();
  };
  for (const auto& p : problem.layout.pairs) {
    e.push_back(AffineExpr::variable(p.pbar) - linearize_squared_norm(p.plus, prior));
    e.push_back(AffineExpr::variable(p.qbar) - linearize_squared_norm(p.minus, prior));
    if (e.size() >= kChunk)
      flush();
  }
  flush();
  return b.build();
}

SlackRange auxiliary_slack(const RelaxedProblemLayout& layout, std::span<const double> x)
{
  if (layout.pairs.empty())
    return {};
  SlackRange out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : layout.pairs) {
    for (const double s : {value_at(x, p.pbar) - squared_norm(p.plus, x), value_at(x, p.qbar) - squared_norm(p.minus, x)}) {
      out.min = std::min(out.min, s);
      out.max = std::max(out.max, s);
    }
  }
  return out;
}

CentroidalTrajectory extract_trajectory(const RelaxedProblemLayout& layout, const Scenario& scenario,
                                        std::span<const double> x)
{
  CentroidalTrajectory traj;
  for (const auto& s : layout.steps) {
    CentroidalState st;
    st.r = vec3_at(x, s.r);
    st.l = vec3_at(x, s.l);
    st.k = vec3_at(x, s.k);
    st.ldot = vec3_at(x, s.ldot);
    st.kdot = vec3_at(x, s.kdot);
    traj.states.push_back(st);
    traj.dt.push_back(s.dt >= 0 ? value_at(x, s.dt) : scenario.config.nominal_dt);
  }
  return traj;
}

ControlTrajectory extract_controls(const RelaxedProblemLayout& layout, const Scenario& scenario,
                                   std::span<const double> x)
{
  ControlTrajectory out(layout.steps.size());
  for (std::size_t t = 0; t < layout.steps.size(); ++t) {
    const int dt = layout.steps[t].dt;
    out[t].dt = dt >= 0 ? value_at(x, dt) : scenario.config.nominal_dt;
  }
  for (const auto& c : layout.contacts) {
    EefControl e;
    e.force = vec3_at(x, c.f);
    e.torque = value_at(x, c.tau);
    e.cop = Vec2(value_at(x, c.z), value_at(x, c.z + 1));
    out[static_cast<std::size_t>(c.step)].eefs[c.eef] = e;
  }
  return out;
}

} // namespace timeopt
