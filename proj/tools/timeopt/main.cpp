#include <timeopt/cli.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace timeopt;

namespace {

void setup_logging()
{
  auto logger = spdlog::stderr_color_mt("timeopt");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("TIMEOPT_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

} // namespace

int main(int argc, char** argv)
{
  setup_logging();
  CLI::App app{"Centroidal momentum and timing optimization"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string time_mode, relaxation;
  OptimizeOptions opts;
  std::string out_dir = "run";
  std::string log_path;
  auto* optimize = app.add_subcommand("optimize", "Optimize a scenario and write the run directory");
  optimize->add_option("scenario", scenario_path, "Scenario file")->required();
  optimize->add_option("--time-mode", time_mode, "fixed, free or fixed-horizon (default: from the scenario)")
      ->check(CLI::IsMember({"fixed", "free", "fixed-horizon"}));
  optimize->add_option("--relaxation", relaxation, "trust or soft (default: from the scenario)")
      ->check(CLI::IsMember({"trust", "soft"}));
  optimize->add_option("--sigma0", opts.sigma0, "Initial trust-region width (default: scenario, else 1)");
  optimize->add_option("--w0", opts.w0, "Initial penalty weight (default: scenario, else 1)");
  optimize->add_option("--max-outer", opts.max_outer, "Outer iteration limit (default 20)");
  optimize->add_option("--tol", opts.tol, "Conic solver tolerance (default 1e-9)");
  optimize->add_option("--seed", opts.seed, "Recorded in the report; the pipeline is deterministic (default 0)");
  optimize->add_option("--out", out_dir, "Run directory (default ./run)");
  optimize->add_option("--log", log_path, "JSON-lines iteration log, '-' for stdout");
  std::string dump_path;
  optimize->add_option("--dump-program", dump_path, "Write the convex-only relaxation as a program dump");

  std::vector<std::string> run_dirs;
  auto* report = app.add_subcommand("report", "Print size and violation tables for run directories");
  report->add_option("runs", run_dirs, "Run directories")->required();

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file");
  validate_cmd->add_option("scenario", validate_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  if (*optimize) {
    if (!time_mode.empty())
      opts.time_mode = parse_time_mode(time_mode);
    if (!relaxation.empty())
      opts.relaxation_mode = parse_relaxation_mode(relaxation);
    opts.out_dir = out_dir;
    opts.dump_program = dump_path;
    std::ofstream log_file;
    if (log_path == "-") {
      opts.log = &std::cout;
    } else if (!log_path.empty()) {
      log_file.open(log_path);
      if (!log_file) {
        spdlog::error("cannot write {}", log_path);
        return kExitError;
      }
      opts.log = &log_file;
    }
    spdlog::debug("optimizing {} into {}", scenario_path, out_dir);
    RunReport rep;
    const int code = cmd_optimize(scenario_path, opts, std::cerr, &rep);
    if (code != kExitError)
      spdlog::info("{}: {} in {} outer iterations, {:.2f} s solver time, T = {:.3f} s (nominal {:.3f} s)",
                   rep.scenario, to_string(rep.status), rep.outer_iterations, rep.total_solve_time, rep.duration,
                   rep.nominal_horizon);
    for (const auto& rec : rep.iterations)
      spdlog::debug("{}", iteration_json(rec));
    return code;
  }
  if (*report) {
    std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
    return cmd_report(dirs, std::cout, std::cerr);
  }
  return cmd_validate(validate_path, std::cout, std::cerr);
}
