#include <timeopt/dynamics.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace timeopt {

double CentroidalTrajectory::duration() const { return std::accumulate(dt.begin(), dt.end(), 0.0); }

Vec3 lever_arm(const Vec3& p, const Eigen::Quaterniond& R, const Vec2& z, const Vec3& r)
{
  const Eigen::Matrix3d rot = R.toRotationMatrix();
  return p + rot.col(0) * z.x() + rot.col(1) * z.y() - r;
}

Vec3 kappa(const Vec3& p, const Eigen::Quaterniond& R, const Vec2& z, const Vec3& r, const Vec3& f, double tau)
{
  const Eigen::Matrix3d rot = R.toRotationMatrix();
  return lever_arm(p, R, z, r).cross(f) + rot.col(2) * tau;
}

namespace {

void check_step_controls(const ControlStep& step, const ContactPlan& plan, int t)
{
  const auto active = active_contacts(plan, t);
  for (const auto& [id, c] : step.eefs)
    if (std::find(active.begin(), active.end(), id) == active.end())
      throw std::invalid_argument(fmt::format("step {}: control given for inactive end-effector '{}'", t, id));
  for (const auto& id : active)
    if (!step.eefs.contains(id))
      throw std::invalid_argument(fmt::format("step {}: missing control for active end-effector '{}'", t, id));
}

} // namespace

std::vector<CentroidalState> integrate(const InitialState& x0, const ControlTrajectory& controls,
                                       const ContactPlan& plan, const ScenarioConfig& cfg,
                                       const std::vector<Vec3>* lever_com)
{
  const auto n = static_cast<std::size_t>(plan.n_timesteps);
  if (controls.size() != n)
    throw std::invalid_argument(fmt::format("controls length {} differs from {} timesteps", controls.size(), n));
  if (lever_com != nullptr && lever_com->size() != n)
    throw std::invalid_argument("lever CoM length differs from timestep count");

  std::vector<CentroidalState> out(n);
  Vec3 r = x0.r0, l = x0.l0, k = x0.k0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& step = controls[t];
    check_step_controls(step, plan, static_cast<int>(t));
    const double dt = step.dt;

    Vec3 ldot = cfg.mass * cfg.gravity;
    for (const auto& [id, c] : step.eefs)
      ldot += c.force;
    l = l + ldot * dt;
    r = r + l * (dt / cfg.mass);

    const Vec3& rc = lever_com ? (*lever_com)[t] : r;
    Vec3 kdot = Vec3::Zero();
    for (const auto& [id, c] : step.eefs) {
      const auto* ph = active_phase(plan, id, static_cast<int>(t));
      kdot += kappa(ph->position, ph->orientation, c.cop, rc, c.force, c.torque);
    }
    k = k + kdot * dt;

    out[t] = {r, l, k, ldot, kdot};
  }
  return out;
}

Vec3 reach_origin(const EndEffector& eef, const Vec3& com) { return com + Vec3(0.0, 0.0, eef.offset); }

std::vector<PhysicalViolation> check_physical(const ControlTrajectory& controls, const ContactPlan& plan,
                                              const ScenarioConfig& cfg, const std::vector<CentroidalState>& states,
                                              double tol)
{
  std::vector<PhysicalViolation> out;
  const auto report = [&](int t, const std::string& eef, const char* kind, double mag) {
    if (mag > tol)
      out.push_back({t, eef, kind, mag});
  };

  const auto n = std::min(controls.size(), states.size());
  for (std::size_t ti = 0; ti < n; ++ti) {
    const int t = static_cast<int>(ti);
    const auto& step = controls[ti];
    report(t, "", "dt", cfg.dt_bounds.excess(step.dt));
    for (const auto& [id, c] : step.eefs) {
      const auto* ph = active_phase(plan, id, t);
      if (ph == nullptr) {
        report(t, id, "inactive", c.force.norm());
        continue;
      }
      const Vec3 fl = ph->orientation.toRotationMatrix().transpose() * c.force;
      report(t, id, "unilateral", -fl.z());
      report(t, id, "friction", fl.head<2>().norm() - cfg.friction_mu * fl.z());
      report(t, id, "cop_x", cfg.cop_x.excess(c.cop.x()));
      report(t, id, "cop_y", cfg.cop_y.excess(c.cop.y()));
      report(t, id, "torque", cfg.torque_bounds.excess(c.torque));
      const auto& eef = cfg.eef(id);
      report(t, id, "reach", (ph->position - reach_origin(eef, states[ti].r)).norm() - eef.max_length);
    }
  }
  return out;
}

ViolationReport violation_metrics(const CentroidalTrajectory& relaxed, const ControlTrajectory& controls,
                                  const ContactPlan& plan, const ScenarioConfig& cfg, const InitialState& x0)
{
  const auto n = relaxed.states.size();
  if (controls.size() != n || relaxed.dt.size() != n)
    throw std::invalid_argument("relaxed trajectory, dt and controls lengths differ");
  for (std::size_t t = 0; t < n; ++t)
    if (relaxed.dt[t] != controls[t].dt)
      throw std::invalid_argument(fmt::format("step {}: dt differs between trajectory and controls", t));

  std::vector<Vec3> com(n);
  for (std::size_t t = 0; t < n; ++t)
    com[t] = relaxed.states[t].r;
  const auto oracle = integrate(x0, controls, plan, cfg, &com);

  ViolationReport rep;
  for (std::size_t t = 0; t < n; ++t) {
    const double ec = (relaxed.states[t].r - oracle[t].r).norm();
    const double el = (relaxed.states[t].l - oracle[t].l).norm();
    const double ea = (relaxed.states[t].k - oracle[t].k).norm();
    rep.com_err += ec;
    rep.lin_err += el;
    rep.ang_err += ea;
    rep.com_max = std::max(rep.com_max, ec);
    rep.lin_max = std::max(rep.lin_max, el);
    rep.ang_max = std::max(rep.ang_max, ea);
  }
  if (n > 0) {
    rep.com_err /= static_cast<double>(n);
    rep.lin_err /= static_cast<double>(n);
    rep.ang_err /= static_cast<double>(n);
  }
  return rep;
}

} // namespace timeopt
