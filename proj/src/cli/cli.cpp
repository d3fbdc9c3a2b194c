#include <timeopt/cli.hpp>

#include <json.hpp>

#include <fmt/format.h>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace timeopt {

namespace {

using nlohmann::json;

constexpr const char* kTrajectoryFile = "trajectory.csv";
constexpr const char* kControlsFile = "controls.csv";
constexpr const char* kActivationsFile = "activations.csv";
constexpr const char* kReportFile = "report.json";

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const Enum (&values)[N], const char* what)
{
  for (const Enum v : values)
    if (to_string(v) == text)
      return v;
  throw std::runtime_error(fmt::format("unknown {} '{}'", what, text));
}

RefineStatus parse_refine_status(std::string_view text)
{
  constexpr RefineStatus all[] = {RefineStatus::Converged, RefineStatus::NotConverged, RefineStatus::Infeasible,
                                  RefineStatus::SolverFailure};
  return parse_enum(text, all, "refine status");
}

SolveStatus parse_solve_status(std::string_view text)
{
  constexpr SolveStatus all[] = {SolveStatus::Optimal, SolveStatus::PrimalInfeasible, SolveStatus::DualInfeasible,
                                 SolveStatus::MaxIter, SolveStatus::NumericalFailure};
  return parse_enum(text, all, "solver status");
}

// Shortest text that reads back to the same double.
std::string num(double v) { return fmt::format("{}", v); }

std::vector<std::string> split(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

double to_double(const std::string& s, int line)
{
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size())
    throw std::runtime_error(fmt::format("line {}: '{}' is not a number", line, s));
  return v;
}

int to_int(const std::string& s, int line)
{
  const double v = to_double(s, line);
  if (v != static_cast<int>(v))
    throw std::runtime_error(fmt::format("line {}: '{}' is not an integer", line, s));
  return static_cast<int>(v);
}

/// Rows of a CSV with the expected header; returns cells per row.
std::vector<std::vector<std::string>> read_table(std::istream& is, const std::vector<std::string>& header,
                                                 const char* what)
{
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(fmt::format("{}: empty file", what));
  if (split(line) != header)
    throw std::runtime_error(fmt::format("{}: unexpected header '{}'", what, line));
  std::vector<std::vector<std::string>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty())
      continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw std::runtime_error(
          fmt::format("{}: line {} has {} columns, expected {}", what, lineno, cells.size(), header.size()));
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<std::string> xyz(const std::string& name) { return {name + "_x", name + "_y", name + "_z"}; }

std::vector<std::string> trajectory_header()
{
  std::vector<std::string> h{"step", "dt"};
  for (const char* n : {"r", "l", "k", "ldot", "kdot"})
    for (auto& c : xyz(n))
      h.push_back(c);
  return h;
}

std::vector<std::string> controls_header() { return {"step", "eef", "f_x", "f_y", "f_z", "tau", "z_x", "z_y"}; }

json violation_json(const ViolationReport& v)
{
  return {{"com_err", v.com_err}, {"lin_err", v.lin_err}, {"ang_err", v.ang_err},
          {"com_max", v.com_max}, {"lin_max", v.lin_max}, {"ang_max", v.ang_max}};
}

ViolationReport parse_violation(const json& j)
{
  ViolationReport v;
  v.com_err = j.at("com_err").get<double>();
  v.lin_err = j.at("lin_err").get<double>();
  v.ang_err = j.at("ang_err").get<double>();
  v.com_max = j.at("com_max").get<double>();
  v.lin_max = j.at("lin_max").get<double>();
  v.ang_max = j.at("ang_max").get<double>();
  return v;
}

IterationRecord parse_iteration(const json& j)
{
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.phase = j.at("phase").get<int>();
  r.sigma = j.at("sigma").get<double>();
  r.w = j.at("w").get<double>();
  r.solver_status = parse_solve_status(j.at("status").get<std::string>());
  r.accepted = j.at("accepted").get<bool>();
  r.violation.com_err = j.at("com_err").get<double>();
  r.violation.lin_err = j.at("lin_err").get<double>();
  r.violation.ang_err = j.at("ang_err").get<double>();
  r.slack.min = j.at("slack_min").get<double>();
  r.slack.max = j.at("slack_max").get<double>();
  r.solver_iterations = j.at("solver_iterations").get<int>();
  r.solve_time = j.at("solve_time").get<double>();
  return r;
}

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out)
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

std::string table(const std::vector<std::string>& labels, const std::vector<std::vector<std::string>>& rows)
{
  std::vector<std::size_t> width(labels.size() + 1, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  for (std::size_t c = 0; c < labels.size(); ++c)
    width[c + 1] = std::max(width[c + 1], labels[c].size());
  std::string out = fmt::format("{:<{}}", "", width[0]);
  for (std::size_t c = 0; c < labels.size(); ++c)
    out += fmt::format("  {:>{}}", labels[c], width[c + 1]);
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("{:<{}}", row[0], width[0]);
    for (std::size_t c = 1; c < row.size(); ++c)
      out += fmt::format("  {:>{}}", row[c], width[c]);
    out += '\n';
  }
  return out;
}

} // namespace

std::string report_json(const RunReport& r)
{
  json j;
  j["scenario"] = r.scenario;
  j["time_mode"] = std::string(to_string(r.time_mode));
  j["relaxation_mode"] = std::string(to_string(r.relaxation_mode));
  j["status"] = std::string(to_string(r.status));
  j["kkt"] = {{"variables", r.kkt.variables}, {"lin_eq", r.kkt.lin_eq},     {"lin_ineq", r.kkt.lin_ineq},
              {"soc_count", r.kkt.soc_count}, {"kkt_size", r.kkt.kkt_size}, {"kkt_nnz", r.kkt.kkt_nnz}};
  j["outer_iterations"] = r.outer_iterations;
  j["total_solve_time"] = r.total_solve_time;
  j["violation"] = violation_json(r.violation);
  j["duration"] = r.duration;
  j["nominal_horizon"] = r.nominal_horizon;
  j["mass"] = r.mass;
  j["seed"] = r.seed;
  j["files"] = r.files;
  json its = json::array();
  for (const auto& rec : r.iterations)
    its.push_back(json::parse(iteration_json(rec)));
  j["iterations"] = its;
  return j.dump(2) + "\n";
}

RunReport parse_report_json(std::string_view text)
{
  try {
    const json j = json::parse(text);
    RunReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.time_mode = parse_time_mode(j.at("time_mode").get<std::string>());
    r.relaxation_mode = parse_relaxation_mode(j.at("relaxation_mode").get<std::string>());
    r.status = parse_refine_status(j.at("status").get<std::string>());
    const auto& k = j.at("kkt");
    r.kkt.variables = k.at("variables").get<long>();
    r.kkt.lin_eq = k.at("lin_eq").get<long>();
    r.kkt.lin_ineq = k.at("lin_ineq").get<long>();
    r.kkt.soc_count = k.at("soc_count").get<long>();
    r.kkt.kkt_size = k.at("kkt_size").get<long>();
    r.kkt.kkt_nnz = k.at("kkt_nnz").get<long>();
    r.outer_iterations = j.at("outer_iterations").get<int>();
    r.total_solve_time = j.at("total_solve_time").get<double>();
    r.violation = parse_violation(j.at("violation"));
    r.duration = j.at("duration").get<double>();
    r.nominal_horizon = j.at("nominal_horizon").get<double>();
    r.mass = j.at("mass").get<double>();
    r.seed = j.at("seed").get<unsigned>();
    r.files = j.at("files").get<std::map<std::string, std::string>>();
    for (const auto& it : j.at("iterations"))
      r.iterations.push_back(parse_iteration(it));
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("report: {}", e.what()));
  }
}

void write_trajectory_csv(std::ostream& os, const CentroidalTrajectory& traj)
{
  const auto h = trajectory_header();
  for (std::size_t i = 0; i < h.size(); ++i)
    os << (i ? "," : "") << h[i];
  os << '\n';
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const auto& s = traj.states[t];
    os << t << ',' << num(t < traj.dt.size() ? traj.dt[t] : 0.0);
    for (const Vec3* v : {&s.r, &s.l, &s.k, &s.ldot, &s.kdot})
      for (int i = 0; i < 3; ++i)
        os << ',' << num((*v)[i]);
    os << '\n';
  }
}

CentroidalTrajectory read_trajectory_csv(std::istream& is)
{
  CentroidalTrajectory traj;
  int line = 1;
  for (const auto& row : read_table(is, trajectory_header(), "trajectory")) {
    ++line;
    if (to_int(row[0], line) != static_cast<int>(traj.states.size()))
      throw std::runtime_error(fmt::format("trajectory: line {}: steps must count up from 0", line));
    traj.dt.push_back(to_double(row[1], line));
    CentroidalState s;
    std::size_t c = 2;
    for (Vec3* v : {&s.r, &s.l, &s.k, &s.ldot, &s.kdot})
      for (int i = 0; i < 3; ++i)
        (*v)[i] = to_double(row[c++], line);
    traj.states.push_back(s);
  }
  return traj;
}

void write_controls_csv(std::ostream& os, const ControlTrajectory& controls)
{
  const auto h = controls_header();
  for (std::size_t i = 0; i < h.size(); ++i)
    os << (i ? "," : "") << h[i];
  os << '\n';
  for (std::size_t t = 0; t < controls.size(); ++t)
    for (const auto& [id, c] : controls[t].eefs)
      os << t << ',' << id << ',' << num(c.force.x()) << ',' << num(c.force.y()) << ',' << num(c.force.z()) << ','
         << num(c.torque) << ',' << num(c.cop.x()) << ',' << num(c.cop.y()) << '\n';
}

ControlTrajectory read_controls_csv(std::istream& is, const std::vector<double>& dt)
{
  ControlTrajectory controls(dt.size());
  for (std::size_t t = 0; t < dt.size(); ++t)
    controls[t].dt = dt[t];
  int line = 1;
  for (const auto& row : read_table(is, controls_header(), "controls")) {
    ++line;
    const int t = to_int(row[0], line);
    if (t < 0 || t >= static_cast<int>(dt.size()))
      throw std::runtime_error(fmt::format("controls: line {}: step {} out of range", line, t));
    EefControl c;
    c.force = Vec3(to_double(row[2], line), to_double(row[3], line), to_double(row[4], line));
    c.torque = to_double(row[5], line);
    c.cop = Vec2(to_double(row[6], line), to_double(row[7], line));
    if (!controls[static_cast<std::size_t>(t)].eefs.emplace(row[1], c).second)
      throw std::runtime_error(fmt::format("controls: line {}: duplicate row for {} at step {}", line, row[1], t));
  }
  return controls;
}

void write_activations_csv(std::ostream& os, const ContactPlan& plan, const std::vector<double>& dt)
{
  os << "step,t_start,dt";
  for (const auto& id : plan.eef_ids)
    os << ',' << id;
  os << '\n';
  double t0 = 0.0;
  for (std::size_t t = 0; t < dt.size(); ++t) {
    os << t << ',' << num(t0) << ',' << num(dt[t]);
    for (const auto& id : plan.eef_ids)
      os << ',' << (active_phase(plan, id, static_cast<int>(t)) ? 1 : 0);
    os << '\n';
    t0 += dt[t];
  }
}

RunArtifacts load_run(const std::filesystem::path& dir)
{
  RunArtifacts run;
  run.report = parse_report_json(read_file(dir / kReportFile));
  {
    std::istringstream in(read_file(dir / kTrajectoryFile));
    run.trajectory = read_trajectory_csv(in);
  }
  std::istringstream in(read_file(dir / kControlsFile));
  run.controls = read_controls_csv(in, run.trajectory.dt);
  return run;
}

std::string format_size_table(const std::vector<RunReport>& runs, const std::vector<std::string>& labels)
{
  std::vector<std::vector<std::string>> rows;
  const auto add = [&](const char* name, auto get) {
    std::vector<std::string> row{name};
    for (const auto& r : runs)
      row.push_back(get(r));
    rows.push_back(std::move(row));
  };
  add("variables", [](const RunReport& r) { return std::to_string(r.kkt.variables); });
  add("equalities", [](const RunReport& r) { return std::to_string(r.kkt.lin_eq); });
  add("inequalities", [](const RunReport& r) { return std::to_string(r.kkt.lin_ineq); });
  add("SOC constraints", [](const RunReport& r) { return std::to_string(r.kkt.soc_count); });
  add("KKT size", [](const RunReport& r) { return std::to_string(r.kkt.kkt_size); });
  add("KKT nnz", [](const RunReport& r) { return std::to_string(r.kkt.kkt_nnz); });
  add("outer iterations", [](const RunReport& r) { return std::to_string(r.outer_iterations); });
  add("time [sec]", [](const RunReport& r) { return fmt::format("{:.3f}", r.total_solve_time); });
  return table(labels, rows);
}

std::string format_violation_table(const std::vector<RunReport>& runs, const std::vector<std::string>& labels)
{
  std::vector<std::vector<std::string>> rows;
  const auto add = [&](const char* name, double ViolationReport::*field) {
    std::vector<std::string> row{name};
    for (const auto& r : runs)
      row.push_back(fmt::format("{:.3e}", r.violation.*field));
    rows.push_back(std::move(row));
  };
  add("CoM [m]", &ViolationReport::com_err);
  add("linear momentum [kg m/s]", &ViolationReport::lin_err);
  add("angular momentum [kg m^2/s]", &ViolationReport::ang_err);
  return table(labels, rows);
}

int cmd_optimize(const std::filesystem::path& scenario_path, const OptimizeOptions& options, std::ostream& err,
                 RunReport* out_report)
{
  Scenario sc;
  RefinementSettings settings;
  try {
    sc = load_scenario_file(scenario_path);
    if (options.time_mode)
      sc.config.time_mode = *options.time_mode;
    if (options.relaxation_mode)
      sc.config.relaxation_mode = *options.relaxation_mode;
    validate(sc);
    settings = default_settings(sc);
    if (options.sigma0)
      settings.sigma0 = *options.sigma0;
    if (options.w0)
      settings.w0 = *options.w0;
    if (options.max_outer)
      settings.max_outer = *options.max_outer;
    if (options.tol)
      settings.solver.tol = *options.tol;
    settings.w_max = std::max(settings.w_max, settings.w0);
    settings.check();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }

  if (!options.dump_program.empty()) {
    RelaxOptions ro;
    ro.dc_reg = settings.dc_reg;
    std::ostringstream dump;
    write_program(dump, build_convex_relaxation(sc, ro).builder.build());
    try {
      write_file(options.dump_program, dump.str());
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitError;
    }
  }

  const RefineResult res = refine(sc, settings, options.log);

  RunReport rep;
  rep.scenario = sc.config.name;
  rep.time_mode = sc.config.time_mode;
  rep.relaxation_mode = sc.config.relaxation_mode;
  rep.status = res.report.status;
  rep.kkt = res.report.kkt;
  rep.outer_iterations = res.report.outer_iterations;
  rep.total_solve_time = res.report.total_solve_time;
  rep.violation = res.violation;
  rep.duration = res.trajectory.duration();
  rep.nominal_horizon = sc.config.nominal_horizon();
  rep.mass = sc.config.mass;
  rep.seed = options.seed;
  rep.iterations = res.report.iterations;
  rep.files = {{"trajectory", kTrajectoryFile},
               {"controls", kControlsFile},
               {"activations", kActivationsFile},
               {"report", kReportFile}};

  try {
    std::filesystem::create_directories(options.out_dir);
    std::ostringstream traj, ctrl, act;
    write_trajectory_csv(traj, res.trajectory);
    write_controls_csv(ctrl, res.controls);
    write_activations_csv(act, sc.plan, res.trajectory.dt);
    write_file(options.out_dir / kTrajectoryFile, traj.str());
    write_file(options.out_dir / kControlsFile, ctrl.str());
    write_file(options.out_dir / kActivationsFile, act.str());
    write_file(options.out_dir / kReportFile, report_json(rep));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  if (out_report)
    *out_report = rep;

  switch (rep.status) {
  case RefineStatus::Converged:
    return kExitOk;
  case RefineStatus::Infeasible:
    err << fmt::format("{}: the convex relaxation is infeasible in {} mode\n", rep.scenario, to_string(rep.time_mode));
    return kExitInfeasible;
  case RefineStatus::NotConverged:
  case RefineStatus::SolverFailure:
    err << fmt::format("{}: {} after {} outer iterations (CoM {:.3e}, lin {:.3e}, ang {:.3e})\n", rep.scenario,
                       to_string(rep.status), rep.outer_iterations, rep.violation.com_err, rep.violation.lin_err,
                       rep.violation.ang_err);
    return kExitNotConverged;
  }
  return kExitError;
}

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out, std::ostream& err)
{
  if (run_dirs.empty()) {
    err << "error: no run directories given\n";
    return kExitError;
  }
  std::vector<RunReport> runs;
  std::vector<std::string> labels;
  try {
    for (const auto& dir : run_dirs) {
      runs.push_back(parse_report_json(read_file(dir / kReportFile)));
      labels.push_back(fmt::format("{} ({})", runs.back().scenario, to_string(runs.back().time_mode)));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  out << format_size_table(runs, labels) << '\n' << format_violation_table(runs, labels);
  return kExitOk;
}

int cmd_validate(const std::filesystem::path& scenario_path, std::ostream& out, std::ostream& err)
{
  try {
    const Scenario sc = load_scenario_file(scenario_path);
    validate(sc);
    out << fmt::format("{}: ok ({} timesteps, {} end-effectors, {} contact phases)\n", sc.config.name,
                       sc.config.n_timesteps, sc.config.eefs.size(), sc.plan.phases.size());
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitError;
}

} // namespace timeopt
