#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wps/config.hpp"
#include "wps/fluid.hpp"
#include "wps/harness.hpp"
#include "wps/io.hpp"
#include "wps/simulator.hpp"

namespace wps {

enum class OutputFormat { Csv, Json };

namespace detail {

inline void write_table(const std::filesystem::path& dir, const std::string& stem,
                        const Table& table, OutputFormat fmt) {
  if (fmt == OutputFormat::Csv)
    write_file_atomic(dir / (stem + ".csv"), table.to_csv());
  else
    write_file_atomic(dir / (stem + ".json"), table.to_json());
}

inline void write_raw_table(const std::filesystem::path& dir,
                            const std::string& stem, const std::string& csv_text,
                            OutputFormat fmt) {
  if (fmt == OutputFormat::Csv) {
    write_file_atomic(dir / (stem + ".csv"), csv_text);
  } else {
    // Re-shape the CSV rows into the JSON table layout.
    std::istringstream is(csv_text);
    std::string line;
    Table t;
    bool first = true;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (first) {
        t.columns = cells;
        first = false;
        continue;
      }
      std::vector<Cell> row;
      for (auto& c : cells) {
        double v{};
        auto res = std::from_chars(c.data(), c.data() + c.size(), v);
        if (res.ec == std::errc{} && res.ptr == c.data() + c.size())
          row.emplace_back(v);
        else
          row.emplace_back(c);
      }
      t.rows.push_back(std::move(row));
    }
    write_file_atomic(dir / (stem + ".json"), t.to_json());
  }
}

inline constexpr const char* kToolVersion = "wps 1.0.0";

inline void write_manifest(const std::filesystem::path& dir,
                           const std::string& subcommand, const RunConfig& cfg) {
  nlohmann::json m;
  m["schema_version"] = 1;
  m["generator"] = kToolVersion;
  m["subcommand"] = subcommand;
  m["config"] = cfg.to_json();
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

inline void write_error(const std::filesystem::path& dir, const std::string& type,
                        const std::string& message) {
  nlohmann::json j;
  j["error"] = {{"type", type}, {"message", message}};
  write_file_atomic(dir / "error.json", j.dump(2) + "\n");
  std::cerr << "error (" << type << "): " << message << "\n";
}

inline Table path_table(const FluidPath& path) {
  Table t;
  t.columns = {"time", "location", "mass"};
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double time = path.time_at(k);
    for (const Atom& a : path.measures[k].atoms())
      t.rows.push_back({time, a.location, a.mass});
  }
  return t;
}

inline nlohmann::json diagnostics_json(const PicardDiagnostics& diag) {
  nlohmann::json j;
  j["converged"] = diag.converged;
  j["total_iterations"] = diag.total_iterations;
  j["window"] = diag.window;
  j["delta_floor"] = diag.delta_floor;
  j["windows"] = nlohmann::json::array();
  for (const auto& w : diag.windows) {
    j["windows"].push_back({{"t_start", w.t_start},
                            {"iterations", w.iterations},
                            {"converged", w.converged},
                            {"distances", w.distances},
                            {"ratios", w.ratios}});
  }
  return j;
}

inline int run_simulate(const RunConfig& cfg, const std::filesystem::path& dir,
                        OutputFormat fmt) {
  const SystemParameters params = cfg.build_params();
  const SimConfig sim = cfg.build_sim();
  std::vector<Job> init;
  for (double v : cfg.sim.initial_requirements) {
    Job j;
    j.requirement = v;
    j.remaining = v;
    init.push_back(j);
  }
  const Trace trace = run(params, init, sim);
  write_raw_table(dir, "events", trace.events_csv(), fmt);
  write_raw_table(dir, "series", trace.series_csv(), fmt);
  write_raw_table(dir, "snapshots", trace.snapshots_csv(), fmt);
  return 0;
}

inline int run_fluid(const RunConfig& cfg, const std::filesystem::path& dir,
                     OutputFormat fmt) {
  if (cfg.theta.empty())
    throw ConfigError("theta: required (fluid initial condition)");
  const SystemParameters params = cfg.build_params();
  const FluidConfig fl = cfg.build_fluid();
  const FluidSolveResult res = solve_direct(cfg.build_theta(), params, fl);
  write_table(dir, "path", path_table(res.path), fmt);
  Table w;
  w.columns = {"time", "workload"};
  for (std::size_t k = 0; k < res.times.size(); ++k)
    w.rows.push_back({res.times[k], res.workload[k]});
  write_table(dir, "workload", w, fmt);
  if (res.hit_floor) {
    write_error(dir, "floor_violation",
                "<w,mu> dropped below delta_floor at t=" +
                    format_double(res.floor_time));
    return 2;
  }
  return 0;
}

inline int run_picard(const RunConfig& cfg, const std::filesystem::path& dir,
                      OutputFormat fmt) {
  if (cfg.theta.empty())
    throw ConfigError("theta: required (picard initial condition)");
  const SystemParameters params = cfg.build_params();
  const FluidConfig fl = cfg.build_fluid();
  const PicardConfig pc = cfg.build_picard();
  PicardResult res;
  try {
    res = picard_iterate(cfg.build_theta(), params, fl, pc);
  } catch (const NonConvergence& e) {
    nlohmann::json j = diagnostics_json(e.diagnostics);
    write_file_atomic(dir / "diagnostics.json", j.dump(2) + "\n");
    write_error(dir, "non_convergence", e.what());
    return 2;
  }
  write_table(dir, "path", path_table(res.path), fmt);
  Table w;
  w.columns = {"time", "workload"};
  const std::vector<double> series = workload_series(res.path);
  for (std::size_t k = 0; k < series.size(); ++k)
    w.rows.push_back({res.path.time_at(k), series[k]});
  write_table(dir, "workload", w, fmt);
  nlohmann::json j = diagnostics_json(res.diagnostics);
  const std::vector<TestFunction> panel = standard_test_panel();
  const std::vector<double> residuals = picard_residual(res.path, params, panel);
  j["residuals"] = nlohmann::json::object();
  for (std::size_t i = 0; i < panel.size(); ++i)
    j["residuals"][panel[i].name] = residuals[i];
  write_file_atomic(dir / "diagnostics.json", j.dump(2) + "\n");
  return 0;
}

inline int run_scaling_cmd(const RunConfig& cfg, const std::filesystem::path& dir,
                           OutputFormat fmt) {
  if (cfg.theta.empty())
    throw ConfigError("theta: required (scaling initial condition)");
  const auto start = std::chrono::steady_clock::now();
  const ScalingExperiment exp = cfg.build_scaling();
  const ConvergenceReport report = run_scaling(exp);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_raw_table(dir, "report", report.csv(), fmt);
  nlohmann::json j;
  j["master_seed"] = report.master_seed;
  j["median_bl_nonincreasing"] = report.median_bl_nonincreasing;
  j["runtime_seconds"] = elapsed;
  j["medians"] = nlohmann::json::array();
  for (const auto& m : report.medians)
    j["medians"].push_back({{"r", m.r},
                            {"checkpoint", m.checkpoint},
                            {"bl_distance", m.bl},
                            {"workload_abs_err", m.workload_err},
                            {"z_abs_err", m.z_err},
                            {"completed", m.completed}});
  int failed = 0;
  for (const auto& c : report.cells)
    if (!c.ok) ++failed;
  j["cells_failed"] = failed;
  write_file_atomic(dir / "summary.json", j.dump(2) + "\n");
  return 0;
}

inline int run_distance(const std::vector<std::string>& extra) {
  if (extra.size() != 2)
    throw ConfigError("distance: expected exactly two measure files");
  const AtomicMeasure a = measure_from_csv(read_file(extra[0]));
  const AtomicMeasure b = measure_from_csv(read_file(extra[1]));
  std::cout << format_double(bl_distance(a, b)) << "\n";
  return 0;
}

}  // namespace detail

// Runs one subcommand against a resolved config. Exit codes: 0 success,
// 1 configuration error, 2 numerical failure; failures leave a
// machine-readable error.json in the output directory.
inline int dispatch(const std::string& subcommand, const RunConfig& cfg,
                    const std::filesystem::path& output_dir,
                    OutputFormat fmt = OutputFormat::Csv,
                    const std::vector<std::string>& extra = {}) {
  namespace fs = std::filesystem;
  // `distance` owns no output directory; its failures go to stderr only.
  const bool file_errors = subcommand != "distance";
  auto report = [&](const std::string& type, const std::string& message) {
    if (file_errors)
      detail::write_error(output_dir, type, message);
    else
      std::cerr << "error (" << type << "): " << message << "\n";
  };
  try {
    if (subcommand == "distance") return detail::run_distance(extra);
    fs::create_directories(output_dir);
    detail::write_manifest(output_dir, subcommand, cfg);
    if (subcommand == "simulate")
      return detail::run_simulate(cfg, output_dir, fmt);
    if (subcommand == "fluid") return detail::run_fluid(cfg, output_dir, fmt);
    if (subcommand == "picard") return detail::run_picard(cfg, output_dir, fmt);
    if (subcommand == "scaling-test")
      return detail::run_scaling_cmd(cfg, output_dir, fmt);
    throw ConfigError("unknown subcommand '" + subcommand + "'");
  } catch (const ConfigError& e) {
    report("config", e.what());
    return 1;
  } catch (const FloorViolation& e) {
    report("floor_violation", e.what());
    return 2;
  } catch (const NonConvergence& e) {
    report("non_convergence", e.what());
    return 2;
  } catch (const StepFailure& e) {
    report("step_failure", e.what());
    return 2;
  } catch (const DegenerateState& e) {
    report("degenerate_state", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    report("config", e.what());
    return 1;
  } catch (const std::exception& e) {
    report("runtime", e.what());
    return 2;
  }
}

}  // namespace wps
