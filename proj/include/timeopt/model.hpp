#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace timeopt {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;

inline constexpr int kScenarioSchemaVersion = 1;

struct Interval
{
  double min = 0.0;
  double max = 0.0;

  bool contains(double v) const { return v >= min && v <= max; }
  /// Distance from v to the interval (0 inside).
  double excess(double v) const { return v < min ? min - v : (v > max ? v - max : 0.0); }
  double clamp(double v) const { return v < min ? min : (v > max ? max : v); }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class TimeMode { FixedTime, TimeOptFreeHorizon, TimeOptFixedHorizon };
enum class RelaxationMode { TrustRegion, SoftConstraint };

std::string_view to_string(TimeMode mode);
std::string_view to_string(RelaxationMode mode);
TimeMode parse_time_mode(std::string_view text);
RelaxationMode parse_relaxation_mode(std::string_view text);

inline bool optimizes_time(TimeMode mode) { return mode != TimeMode::FixedTime; }

/// Weights of the terminal and running costs. Vectors are ordered (r, l, k).
struct CostWeights
{
  Vec9 terminal_state = Vec9::Zero();
  Vec9 running_momentum_tracking = Vec9::Zero();
  double force_reg = 1e-4;
  double torque_reg = 1e-3;
  double cop_reg = 1e-3;
  double dt_reg = 1.0;
  double soft_penalty_w0 = 1.0;
  double trust_sigma0 = 1.0;

  bool operator==(const CostWeights& o) const;
};

struct EndEffector
{
  std::string id;
  double max_length = 0.0;
  /// Height of the reach origin above the CoM (shoulders for arms).
  double offset = 0.0;

  friend bool operator==(const EndEffector&, const EndEffector&) = default;
};

struct ScenarioConfig
{
  std::string name = "scenario";
  double mass = 0.0;
  Vec3 gravity{0.0, 0.0, -9.81};
  double friction_mu = 0.0;
  Interval cop_x{0.0, 0.0};
  Interval cop_y{0.0, 0.0};
  Interval torque_bounds{0.0, 0.0};
  Interval dt_bounds{0.0, 0.0};
  std::vector<EndEffector> eefs;
  int n_timesteps = 0;
  double nominal_dt = 0.0;
  TimeMode time_mode = TimeMode::FixedTime;
  RelaxationMode relaxation_mode = RelaxationMode::TrustRegion;
  CostWeights cost_weights;

  double nominal_horizon() const { return n_timesteps * nominal_dt; }
  const EndEffector& eef(std::string_view id) const;

  bool operator==(const ScenarioConfig& o) const;
};

struct ContactPhase
{
  std::string eef_id;
  int start_step = 0; ///< inclusive
  int end_step = 0;   ///< exclusive
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity(); ///< (w,x,y,z)

  bool contains(int t) const { return t >= start_step && t < end_step; }
  bool operator==(const ContactPhase& o) const;
};

struct ContactPlan
{
  std::vector<std::string> eef_ids;
  std::vector<ContactPhase> phases;
  int n_timesteps = 0;

  bool operator==(const ContactPlan&) const = default;
};

struct InitialState
{
  Vec3 r0 = Vec3::Zero();
  Vec3 l0 = Vec3::Zero();
  Vec3 k0 = Vec3::Zero();
  std::vector<Vec9> h_des;   ///< desired (r, l, k) per timestep
  Vec9 h_terminal = Vec9::Zero();

  bool operator==(const InitialState& o) const;
};

struct Scenario
{
  ScenarioConfig config;
  ContactPlan plan;
  InitialState initial;

  bool operator==(const Scenario&) const = default;
};

/// Parse or validation failure. `field()` names the offending key
/// ("section.key"); `line()` is 1-based, 0 when not tied to a line.
class ScenarioError : public std::runtime_error
{
public:
  ScenarioError(const std::string& field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

private:
  std::string field_;
  int line_;
};

Scenario load_scenario(std::string_view text);
Scenario load_scenario_file(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& scenario);

/// Throws ScenarioError naming the first violated invariant.
void validate(const Scenario& scenario);

/// End-effector ids active at timestep t, in `plan.eef_ids` order.
std::vector<std::string> active_contacts(const ContactPlan& plan, int t);

/// Phase of `eef_id` covering timestep t, or nullptr.
const ContactPhase* active_phase(const ContactPlan& plan, std::string_view eef_id, int t);

} // namespace timeopt
