#include <timeopt/model.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace timeopt {

namespace {

std::string_view trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t'))
      ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t')
      ++j;
    if (j > i)
      out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

struct Entry
{
  std::string field; // section.key
  int line;
  std::vector<std::string_view> values;
};

class Reader
{
public:
  explicit Reader(const Entry& e) : e_(e) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(e_.field, e_.line, msg); }

  void expect_count(std::size_t n) const
  {
    if (e_.values.size() != n)
      fail(fmt::format("expected {} value(s), got {}", n, e_.values.size()));
  }

  double number(std::size_t i) const
  {
    const auto tok = e_.values.at(i);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
      fail(fmt::format("'{}' is not a finite number", tok));
    return v;
  }

  int integer(std::size_t i) const
  {
    const auto tok = e_.values.at(i);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      fail(fmt::format("'{}' is not an integer", tok));
    return v;
  }

  double scalar() const { expect_count(1); return number(0); }
  int whole() const { expect_count(1); return integer(0); }

  Vec3 vec3() const
  {
    expect_count(3);
    return {number(0), number(1), number(2)};
  }

  Vec9 vec9(std::size_t offset = 0) const
  {
    expect_count(9 + offset);
    Vec9 v;
    for (int i = 0; i < 9; ++i)
      v[i] = number(offset + static_cast<std::size_t>(i));
    return v;
  }

  Interval interval() const
  {
    expect_count(2);
    return {number(0), number(1)};
  }

  std::string word() const
  {
    expect_count(1);
    return std::string(e_.values[0]);
  }

private:
  const Entry& e_;
};

// Formats doubles so that parsing recovers the exact value.
std::string num(double v) { return fmt::format("{}", v); }

std::string join(const Vec9& v)
{
  std::string s;
  for (int i = 0; i < 9; ++i)
    s += (i ? " " : "") + num(v[i]);
  return s;
}

} // namespace

ScenarioError::ScenarioError(const std::string& field, int line, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("{} (line {}): {}", field, line, message)
                                  : fmt::format("{}: {}", field, message)),
      field_(field), line_(line)
{
}

std::string_view to_string(TimeMode mode)
{
  switch (mode) {
  case TimeMode::FixedTime: return "fixed_time";
  case TimeMode::TimeOptFreeHorizon: return "time_opt_free_horizon";
  case TimeMode::TimeOptFixedHorizon: return "time_opt_fixed_horizon";
  }
  return "unknown";
}

std::string_view to_string(RelaxationMode mode)
{
  return mode == RelaxationMode::TrustRegion ? "trust_region" : "soft_constraint";
}

TimeMode parse_time_mode(std::string_view text)
{
  if (text == "fixed_time" || text == "fixed")
    return TimeMode::FixedTime;
  if (text == "time_opt_free_horizon" || text == "free")
    return TimeMode::TimeOptFreeHorizon;
  if (text == "time_opt_fixed_horizon" || text == "fixed-horizon")
    return TimeMode::TimeOptFixedHorizon;
  throw std::invalid_argument(fmt::format("unknown time mode '{}'", text));
}

RelaxationMode parse_relaxation_mode(std::string_view text)
{
  if (text == "trust_region" || text == "trust")
    return RelaxationMode::TrustRegion;
  if (text == "soft_constraint" || text == "soft")
    return RelaxationMode::SoftConstraint;
  throw std::invalid_argument(fmt::format("unknown relaxation mode '{}'", text));
}

bool CostWeights::operator==(const CostWeights& o) const
{
  return terminal_state == o.terminal_state && running_momentum_tracking == o.running_momentum_tracking &&
         force_reg == o.force_reg && torque_reg == o.torque_reg && cop_reg == o.cop_reg &&
         dt_reg == o.dt_reg && soft_penalty_w0 == o.soft_penalty_w0 && trust_sigma0 == o.trust_sigma0;
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const
{
  return name == o.name && mass == o.mass && gravity == o.gravity && friction_mu == o.friction_mu &&
         cop_x == o.cop_x && cop_y == o.cop_y && torque_bounds == o.torque_bounds &&
         dt_bounds == o.dt_bounds && eefs == o.eefs && n_timesteps == o.n_timesteps &&
         nominal_dt == o.nominal_dt && time_mode == o.time_mode && relaxation_mode == o.relaxation_mode &&
         cost_weights == o.cost_weights;
}

const EndEffector& ScenarioConfig::eef(std::string_view id) const
{
  for (const auto& e : eefs)
    if (e.id == id)
      return e;
  throw std::out_of_range(fmt::format("unknown end-effector '{}'", id));
}

bool ContactPhase::operator==(const ContactPhase& o) const
{
  return eef_id == o.eef_id && start_step == o.start_step && end_step == o.end_step &&
         position == o.position && orientation.coeffs() == o.orientation.coeffs();
}

bool InitialState::operator==(const InitialState& o) const
{
  return r0 == o.r0 && l0 == o.l0 && k0 == o.k0 && h_des == o.h_des && h_terminal == o.h_terminal;
}

Scenario load_scenario(std::string_view text)
{
  static const std::map<std::string, std::set<std::string>> known = {
      {"", {"schema_version", "name"}},
      {"robot", {"mass", "gravity", "friction_mu", "cop_bounds", "torque_bounds", "eef"}},
      {"time", {"n_timesteps", "nominal_dt", "dt_bounds", "time_mode", "relaxation_mode"}},
      {"costs",
       {"terminal_state", "running_momentum_tracking", "force_reg", "torque_reg", "cop_reg", "dt_reg",
        "soft_penalty_w0", "trust_sigma0"}},
      {"contacts", {}},
      {"initial", {"com", "lin_mom", "ang_mom", "terminal", "desired_all", "desired"}},
  };

  std::vector<Entry> entries;
  std::vector<Entry> contact_rows;
  std::string section;
  std::set<std::string> seen_sections;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = raw.find('#'); hash != std::string_view::npos)
      raw = raw.substr(0, hash);
    const auto line = trim(raw);
    if (line.empty())
      continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ScenarioError("section", line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known.contains(section) || section.empty())
        throw ScenarioError(section, line_no, "unknown section");
      if (!seen_sections.insert(section).second)
        throw ScenarioError(section, line_no, "duplicate section");
      continue;
    }

    if (section == "contacts") {
      Entry row{"contacts", line_no, split_ws(line)};
      contact_rows.push_back(std::move(row));
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ScenarioError(section.empty() ? "document" : section, line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string field = section.empty() ? key : section + "." + key;
    if (!known.at(section).contains(key))
      throw ScenarioError(field, line_no, "unknown key");
    entries.push_back({field, line_no, split_ws(trim(line.substr(eq + 1)))});
  }

  Scenario sc;
  auto& cfg = sc.config;
  bool have_version = false, have_mass = false, have_mu = false, have_n = false, have_dt = false,
       have_dt_bounds = false, have_com = false;
  std::map<std::string, int> single_keys;
  const Vec9* desired_all = nullptr;
  Vec9 desired_all_value;
  std::vector<std::pair<int, Vec9>> desired_rows;

  for (const auto& e : entries) {
    const Reader rd(e);
    if (e.field != "robot.eef" && e.field != "initial.desired" && single_keys[e.field]++ > 0)
      rd.fail("duplicate key");

    if (e.field == "schema_version") {
      const int v = rd.whole();
      if (v != kScenarioSchemaVersion)
        rd.fail(fmt::format("unsupported schema version {} (expected {})", v, kScenarioSchemaVersion));
      have_version = true;
    } else if (e.field == "name") {
      cfg.name = rd.word();
    } else if (e.field == "robot.mass") {
      cfg.mass = rd.scalar();
      have_mass = true;
    } else if (e.field == "robot.gravity") {
      cfg.gravity = rd.vec3();
    } else if (e.field == "robot.friction_mu") {
      cfg.friction_mu = rd.scalar();
      have_mu = true;
    } else if (e.field == "robot.cop_bounds") {
      rd.expect_count(4);
      cfg.cop_x = {rd.number(0), rd.number(1)};
      cfg.cop_y = {rd.number(2), rd.number(3)};
    } else if (e.field == "robot.torque_bounds") {
      cfg.torque_bounds = rd.interval();
    } else if (e.field == "robot.eef") {
      if (e.values.size() != 2 && e.values.size() != 3)
        rd.fail("expected 'id max_length [offset]'");
      EndEffector eef{std::string(e.values[0]), rd.number(1), e.values.size() == 3 ? rd.number(2) : 0.0};
      cfg.eefs.push_back(eef);
    } else if (e.field == "time.n_timesteps") {
      cfg.n_timesteps = rd.whole();
      have_n = true;
    } else if (e.field == "time.nominal_dt") {
      cfg.nominal_dt = rd.scalar();
      have_dt = true;
    } else if (e.field == "time.dt_bounds") {
      cfg.dt_bounds = rd.interval();
      have_dt_bounds = true;
    } else if (e.field == "time.time_mode") {
      try {
        cfg.time_mode = parse_time_mode(rd.word());
      } catch (const std::invalid_argument& ex) {
        rd.fail(ex.what());
      }
    } else if (e.field == "time.relaxation_mode") {
      try {
        cfg.relaxation_mode = parse_relaxation_mode(rd.word());
      } catch (const std::invalid_argument& ex) {
        rd.fail(ex.what());
      }
    } else if (e.field == "costs.terminal_state") {
      cfg.cost_weights.terminal_state = rd.vec9();
    } else if (e.field == "costs.running_momentum_tracking") {
      cfg.cost_weights.running_momentum_tracking = rd.vec9();
    } else if (e.field == "costs.force_reg") {
      cfg.cost_weights.force_reg = rd.scalar();
    } else if (e.field == "costs.torque_reg") {
      cfg.cost_weights.torque_reg = rd.scalar();
    } else if (e.field == "costs.cop_reg") {
      cfg.cost_weights.cop_reg = rd.scalar();
    } else if (e.field == "costs.dt_reg") {
      cfg.cost_weights.dt_reg = rd.scalar();
    } else if (e.field == "costs.soft_penalty_w0") {
      cfg.cost_weights.soft_penalty_w0 = rd.scalar();
    } else if (e.field == "costs.trust_sigma0") {
      cfg.cost_weights.trust_sigma0 = rd.scalar();
    } else if (e.field == "initial.com") {
      sc.initial.r0 = rd.vec3();
      have_com = true;
    } else if (e.field == "initial.lin_mom") {
      sc.initial.l0 = rd.vec3();
    } else if (e.field == "initial.ang_mom") {
      sc.initial.k0 = rd.vec3();
    } else if (e.field == "initial.terminal") {
      sc.initial.h_terminal = rd.vec9();
    } else if (e.field == "initial.desired_all") {
      desired_all_value = rd.vec9();
      desired_all = &desired_all_value;
    } else if (e.field == "initial.desired") {
      desired_rows.emplace_back(rd.integer(0), rd.vec9(1));
      if (desired_rows.back().first < 0)
        rd.fail("negative timestep");
    }
  }

  const auto require = [](bool have, const char* field) {
    if (!have)
      throw ScenarioError(field, 0, "missing required field");
  };
  require(have_version, "schema_version");
  require(have_mass, "robot.mass");
  require(have_mu, "robot.friction_mu");
  require(!cfg.eefs.empty(), "robot.eef");
  require(have_n, "time.n_timesteps");
  require(have_dt, "time.nominal_dt");
  require(have_com, "initial.com");
  if (!have_dt_bounds)
    cfg.dt_bounds = {cfg.nominal_dt, cfg.nominal_dt};

  sc.plan.n_timesteps = cfg.n_timesteps;
  for (const auto& e : cfg.eefs)
    sc.plan.eef_ids.push_back(e.id);

  for (const auto& row : contact_rows) {
    const Reader rd(row);
    if (row.values.size() != 6 && row.values.size() != 10)
      rd.fail("expected 'eef start end px py pz [qw qx qy qz]'");
    ContactPhase ph;
    ph.eef_id = std::string(row.values[0]);
    ph.start_step = rd.integer(1);
    ph.end_step = rd.integer(2);
    ph.position = {rd.number(3), rd.number(4), rd.number(5)};
    if (row.values.size() == 10)
      ph.orientation = Eigen::Quaterniond(rd.number(6), rd.number(7), rd.number(8), rd.number(9));
    if (std::find(sc.plan.eef_ids.begin(), sc.plan.eef_ids.end(), ph.eef_id) == sc.plan.eef_ids.end())
      rd.fail(fmt::format("phase references undeclared end-effector '{}'", ph.eef_id));
    sc.plan.phases.push_back(ph);
  }

  if (cfg.n_timesteps > 0) {
    sc.initial.h_des.assign(static_cast<std::size_t>(cfg.n_timesteps), desired_all ? *desired_all : Vec9::Zero());
    for (const auto& [t, v] : desired_rows) {
      if (t >= cfg.n_timesteps)
        throw ScenarioError("initial.desired", 0, fmt::format("timestep {} out of range", t));
      sc.initial.h_des[static_cast<std::size_t>(t)] = v;
    }
  }

  validate(sc);
  return sc;
}

Scenario load_scenario_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error(fmt::format("cannot open scenario file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str());
}

void validate(const Scenario& sc)
{
  const auto& cfg = sc.config;
  const auto fail = [](const char* field, const std::string& msg) { throw ScenarioError(field, 0, msg); };
  const auto ordered = [&](const Interval& iv, const char* field) {
    if (!(iv.min <= iv.max))
      fail(field, "min > max");
  };

  if (!(cfg.mass > 0.0) || !std::isfinite(cfg.mass))
    fail("robot.mass", "must be > 0");
  if (!cfg.gravity.allFinite())
    fail("robot.gravity", "must be finite");
  if (!(cfg.friction_mu > 0.0) || !std::isfinite(cfg.friction_mu))
    fail("robot.friction_mu", "must be > 0");
  ordered(cfg.cop_x, "robot.cop_bounds");
  ordered(cfg.cop_y, "robot.cop_bounds");
  ordered(cfg.torque_bounds, "robot.torque_bounds");
  if (cfg.eefs.empty())
    fail("robot.eef", "at least one end-effector required");
  std::set<std::string> ids;
  for (const auto& e : cfg.eefs) {
    if (!ids.insert(e.id).second)
      fail("robot.eef", fmt::format("duplicate end-effector '{}'", e.id));
    if (!(e.max_length > 0.0) || !std::isfinite(e.max_length))
      fail("robot.eef", fmt::format("max_length of '{}' must be > 0", e.id));
    if (!std::isfinite(e.offset))
      fail("robot.eef", fmt::format("offset of '{}' must be finite", e.id));
  }
  if (cfg.n_timesteps < 1)
    fail("time.n_timesteps", "must be >= 1");
  ordered(cfg.dt_bounds, "time.dt_bounds");
  if (!(cfg.dt_bounds.min > 0.0))
    fail("time.dt_bounds", "min must be > 0");
  if (!(cfg.nominal_dt > 0.0))
    fail("time.nominal_dt", "must be > 0");
  if (!cfg.dt_bounds.contains(cfg.nominal_dt))
    fail("time.nominal_dt", "must lie within dt_bounds");

  const auto& w = cfg.cost_weights;
  if ((w.terminal_state.array() < 0.0).any() || !w.terminal_state.allFinite())
    fail("costs.terminal_state", "weights must be >= 0");
  if ((w.running_momentum_tracking.array() < 0.0).any() || !w.running_momentum_tracking.allFinite())
    fail("costs.running_momentum_tracking", "weights must be >= 0");
  const std::pair<const char*, double> scalars[] = {
      {"costs.force_reg", w.force_reg},     {"costs.torque_reg", w.torque_reg},
      {"costs.cop_reg", w.cop_reg},         {"costs.dt_reg", w.dt_reg},
      {"costs.soft_penalty_w0", w.soft_penalty_w0}};
  for (const auto& [field, v] : scalars)
    if (!(v >= 0.0) || !std::isfinite(v))
      fail(field, "weight must be >= 0");
  if (!(w.trust_sigma0 > 0.0) || !std::isfinite(w.trust_sigma0))
    fail("costs.trust_sigma0", "must be > 0");

  const auto& plan = sc.plan;
  if (plan.n_timesteps != cfg.n_timesteps)
    fail("contacts", "plan length differs from time.n_timesteps");
  for (const auto& ph : plan.phases) {
    if (std::find(plan.eef_ids.begin(), plan.eef_ids.end(), ph.eef_id) == plan.eef_ids.end())
      fail("contacts", fmt::format("phase references unknown end-effector '{}'", ph.eef_id));
    if (!(0 <= ph.start_step && ph.start_step < ph.end_step && ph.end_step <= cfg.n_timesteps))
      fail("contacts", fmt::format("phase of '{}' [{}, {}) outside [0, {}) or empty", ph.eef_id, ph.start_step,
                                   ph.end_step, cfg.n_timesteps));
    if (!ph.position.allFinite())
      fail("contacts", "position must be finite");
    if (std::abs(ph.orientation.norm() - 1.0) > 1e-9)
      fail("contacts", fmt::format("orientation of '{}' is not a unit quaternion", ph.eef_id));
  }
  for (std::size_t i = 0; i < plan.phases.size(); ++i)
    for (std::size_t j = i + 1; j < plan.phases.size(); ++j) {
      const auto& a = plan.phases[i];
      const auto& b = plan.phases[j];
      if (a.eef_id == b.eef_id && a.start_step < b.end_step && b.start_step < a.end_step)
        fail("contacts", fmt::format("overlapping phases for '{}'", a.eef_id));
    }

  const auto& init = sc.initial;
  if (!init.r0.allFinite())
    fail("initial.com", "must be finite");
  if (!init.l0.allFinite())
    fail("initial.lin_mom", "must be finite");
  if (!init.k0.allFinite())
    fail("initial.ang_mom", "must be finite");
  if (!init.h_terminal.allFinite())
    fail("initial.terminal", "must be finite");
  if (init.h_des.size() != static_cast<std::size_t>(cfg.n_timesteps))
    fail("initial.desired", "desired trajectory length differs from time.n_timesteps");
  for (const auto& h : init.h_des)
    if (!h.allFinite())
      fail("initial.desired", "must be finite");
}

std::string serialize_scenario(const Scenario& sc)
{
  const auto& cfg = sc.config;
  const auto& w = cfg.cost_weights;
  std::string out;
  auto line = [&out](const std::string& s) { out += s + "\n"; };

  line(fmt::format("schema_version = {}", kScenarioSchemaVersion));
  line(fmt::format("name = {}", cfg.name));
  line("");
  line("[robot]");
  line(fmt::format("mass = {}", num(cfg.mass)));
  line(fmt::format("gravity = {} {} {}", num(cfg.gravity.x()), num(cfg.gravity.y()), num(cfg.gravity.z())));
  line(fmt::format("friction_mu = {}", num(cfg.friction_mu)));
  line(fmt::format("cop_bounds = {} {} {} {}", num(cfg.cop_x.min), num(cfg.cop_x.max), num(cfg.cop_y.min),
                   num(cfg.cop_y.max)));
  line(fmt::format("torque_bounds = {} {}", num(cfg.torque_bounds.min), num(cfg.torque_bounds.max)));
  for (const auto& e : cfg.eefs)
    line(fmt::format("eef = {} {} {}", e.id, num(e.max_length), num(e.offset)));
  line("");
  line("[time]");
  line(fmt::format("n_timesteps = {}", cfg.n_timesteps));
  line(fmt::format("nominal_dt = {}", num(cfg.nominal_dt)));
  line(fmt::format("dt_bounds = {} {}", num(cfg.dt_bounds.min), num(cfg.dt_bounds.max)));
  line(fmt::format("time_mode = {}", to_string(cfg.time_mode)));
  line(fmt::format("relaxation_mode = {}", to_string(cfg.relaxation_mode)));
  line("");
  line("[costs]");
  line(fmt::format("terminal_state = {}", join(w.terminal_state)));
  line(fmt::format("running_momentum_tracking = {}", join(w.running_momentum_tracking)));
  line(fmt::format("force_reg = {}", num(w.force_reg)));
  line(fmt::format("torque_reg = {}", num(w.torque_reg)));
  line(fmt::format("cop_reg = {}", num(w.cop_reg)));
  line(fmt::format("dt_reg = {}", num(w.dt_reg)));
  line(fmt::format("soft_penalty_w0 = {}", num(w.soft_penalty_w0)));
  line(fmt::format("trust_sigma0 = {}", num(w.trust_sigma0)));
  line("");
  line("[contacts]");
  line("# eef start end px py pz qw qx qy qz");
  for (const auto& ph : sc.plan.phases) {
    const auto& q = ph.orientation;
    line(fmt::format("{} {} {} {} {} {} {} {} {} {}", ph.eef_id, ph.start_step, ph.end_step, num(ph.position.x()),
                     num(ph.position.y()), num(ph.position.z()), num(q.w()), num(q.x()), num(q.y()), num(q.z())));
  }
  line("");
  line("[initial]");
  const auto& init = sc.initial;
  line(fmt::format("com = {} {} {}", num(init.r0.x()), num(init.r0.y()), num(init.r0.z())));
  line(fmt::format("lin_mom = {} {} {}", num(init.l0.x()), num(init.l0.y()), num(init.l0.z())));
  line(fmt::format("ang_mom = {} {} {}", num(init.k0.x()), num(init.k0.y()), num(init.k0.z())));
  line(fmt::format("terminal = {}", join(init.h_terminal)));
  for (std::size_t t = 0; t < init.h_des.size(); ++t)
    line(fmt::format("desired = {} {}", t, join(init.h_des[t])));
  return out;
}

std::vector<std::string> active_contacts(const ContactPlan& plan, int t)
{
  if (t < 0 || t >= plan.n_timesteps)
    throw std::out_of_range(fmt::format("timestep {} outside [0, {})", t, plan.n_timesteps));
  std::vector<std::string> out;
  for (const auto& id : plan.eef_ids)
    if (active_phase(plan, id, t) != nullptr)
      out.push_back(id);
  return out;
}

const ContactPhase* active_phase(const ContactPlan& plan, std::string_view eef_id, int t)
{
  for (const auto& ph : plan.phases)
    if (ph.eef_id == eef_id && ph.contains(t))
      return &ph;
  return nullptr;
}

} // namespace timeopt
