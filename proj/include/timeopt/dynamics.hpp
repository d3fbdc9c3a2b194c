#pragma once

#include <timeopt/model.hpp>

#include <map>
#include <string>
#include <vector>

namespace timeopt {

struct CentroidalState
{
  Vec3 r = Vec3::Zero();
  Vec3 l = Vec3::Zero();
  Vec3 k = Vec3::Zero();
  Vec3 ldot = Vec3::Zero();
  Vec3 kdot = Vec3::Zero();
};

struct EefControl
{
  Vec3 force = Vec3::Zero(); ///< world frame
  double torque = 0.0;       ///< about the local z axis
  Vec2 cop = Vec2::Zero();   ///< local frame
};

struct ControlStep
{
  std::map<std::string, EefControl> eefs; ///< active end-effectors only
  double dt = 0.0;
};

using ControlTrajectory = std::vector<ControlStep>;

struct CentroidalTrajectory
{
  std::vector<CentroidalState> states;
  std::vector<double> dt;

  double duration() const;
};

struct ViolationReport
{
  double com_err = 0.0;
  double lin_err = 0.0;
  double ang_err = 0.0;
  double com_max = 0.0;
  double lin_max = 0.0;
  double ang_max = 0.0;
};

struct PhysicalViolation
{
  int step = 0;
  std::string eef; ///< empty for per-step constraints (dt)
  std::string kind; ///< friction, unilateral, cop_x, cop_y, torque, dt, reach
  double magnitude = 0.0;
};

/// Lever arm p + R^{xy} z - r.
Vec3 lever_arm(const Vec3& p, const Eigen::Quaterniond& R, const Vec2& z, const Vec3& r);

/// End-effector contribution to the angular momentum rate.
Vec3 kappa(const Vec3& p, const Eigen::Quaterniond& R, const Vec2& z, const Vec3& r, const Vec3& f, double tau);

/// Forward recursion of the discrete dynamics. `lever_com`, when given,
/// supplies the CoM used in the lever arms instead of the integrated one.
std::vector<CentroidalState> integrate(const InitialState& x0, const ControlTrajectory& controls,
                                       const ContactPlan& plan, const ScenarioConfig& cfg,
                                       const std::vector<Vec3>* lever_com = nullptr);

/// Reach origin of an end-effector for a CoM position.
Vec3 reach_origin(const EndEffector& eef, const Vec3& com);

std::vector<PhysicalViolation> check_physical(const ControlTrajectory& controls, const ContactPlan& plan,
                                              const ScenarioConfig& cfg, const std::vector<CentroidalState>& states,
                                              double tol = 0.0);

/// Audits a relaxed trajectory against the integration of its own controls.
ViolationReport violation_metrics(const CentroidalTrajectory& relaxed, const ControlTrajectory& controls,
                                  const ContactPlan& plan, const ScenarioConfig& cfg, const InitialState& x0);

} // namespace timeopt
