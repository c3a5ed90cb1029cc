#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wps/config.hpp"
#include "wps/dispatch.hpp"
#include "wps/io.hpp"

using namespace wps;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("wps_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kRho1Fixture = R"({
  "seed": 11,
  "arrival": {"family": "exponential", "rate": 1.0},
  "service": {"family": "uniform", "params": {"a": 0.0, "b": 2.0}},
  "weight": {"family": "expsat", "params": {"beta": 1.0}},
  "theta": [[2.0, 1.0]],
  "fluid": {"dt": 0.005, "quadrature": 100, "horizon": 0.5}
})";

}  // namespace

TEST_CASE("parse_config materializes defaults from an empty object") {
  const RunConfig cfg = parse_config("{}");
  CHECK(cfg.schema_version == 1);
  CHECK(cfg.seed == 0);
  CHECK(cfg.arrival.family == "exponential");
  CHECK(cfg.arrival.rate == 1.0);
  CHECK(cfg.service.family == "exponential");
  CHECK(cfg.sim.depart_threshold == 1e-9);
  CHECK(cfg.fluid.dt == 1e-3);
  CHECK(cfg.fluid.record_stride == 1);
  CHECK(cfg.picard.zeta == 0.5);
  CHECK(cfg.scaling.init_mode == "iid");
  CHECK(traffic_intensity(cfg.build_params()) == Catch::Approx(1.0));
}

TEST_CASE("parse_config rejects unknown keys with field paths") {
  try {
    (void)parse_config(R"({"sim": {"hmax": 1.0}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.errors.size() == 1);
    CHECK(e.errors[0].find("sim.hmax") != std::string::npos);
    CHECK(e.errors[0].find("unknown key") != std::string::npos);
  }
}

TEST_CASE("parse_config rejects the constant weight via the model validator") {
  try {
    (void)parse_config(R"({"weight": {"family": "constant", "params": {"level": 1.0}}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE_FALSE(e.errors.empty());
    CHECK(e.errors[0].find("weight.family") != std::string::npos);
    CHECK(e.errors[0].find("w(0)") != std::string::npos);
  }
}

TEST_CASE("parse_config collects several errors in one pass") {
  try {
    (void)parse_config(R"({"fluid": {"dt": "soon"}, "picard": {"zeta": "half"}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.errors.size() == 2);
  }
}

TEST_CASE("parse_config reports syntax errors with line numbers") {
  try {
    (void)parse_config("{\n  \"seed\": 1,\n  oops\n}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.errors[0].find("line 3") != std::string::npos);
  }
}

TEST_CASE("config serialization round-trips exactly") {
  const RunConfig cfg = parse_config(kRho1Fixture);
  const std::string dumped = cfg.to_json().dump(2);
  const RunConfig back = parse_config(dumped);
  CHECK(cfg == back);
  CHECK(back.to_json().dump(2) == dumped);
}

TEST_CASE("parse_config unwraps run manifests") {
  const RunConfig cfg = parse_config(kRho1Fixture);
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["subcommand"] = "fluid";
  manifest["config"] = cfg.to_json();
  const RunConfig back = parse_config(manifest.dump());
  CHECK(cfg == back);
}

TEST_CASE("dispatch fluid writes a constant workload column at rho=1") {
  const fs::path dir = temp_dir("fluid");
  const RunConfig cfg = parse_config(kRho1Fixture);
  const int code = dispatch("fluid", cfg, dir);
  REQUIRE(code == 0);
  REQUIRE(fs::exists(dir / "manifest.json"));
  REQUIRE(fs::exists(dir / "path.csv"));
  REQUIRE(fs::exists(dir / "workload.csv"));

  std::ifstream is(dir / "workload.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "time,workload");
  int rows = 0;
  while (std::getline(is, line)) {
    const auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 2);
    CHECK(std::abs(parse_double(cells[1]) - 2.0) <= 1e-9);
    ++rows;
  }
  CHECK(rows == 101);
}

TEST_CASE("dispatch picard with zero iterations exits 2 with error json") {
  const fs::path dir = temp_dir("picard_fail");
  RunConfig cfg = parse_config(kRho1Fixture);
  cfg.picard.max_iterations = 0;
  cfg.picard.window = 0.05;
  cfg.fluid.delta_floor = 0.4;
  const int code = dispatch("picard", cfg, dir);
  CHECK(code == 2);
  REQUIRE(fs::exists(dir / "error.json"));
  const auto err = nlohmann::json::parse(read_file(dir / "error.json"));
  CHECK(err["error"]["type"] == "non_convergence");
  REQUIRE(fs::exists(dir / "diagnostics.json"));
}

TEST_CASE("dispatch picard succeeds and reports diagnostics with residuals") {
  const fs::path dir = temp_dir("picard_ok");
  RunConfig cfg = parse_config(kRho1Fixture);
  cfg.fluid.horizon = 0.2;
  cfg.fluid.delta_floor = 0.4;
  cfg.picard.window = 0.05;
  cfg.picard.tolerance = 1e-9;
  const int code = dispatch("picard", cfg, dir);
  REQUIRE(code == 0);
  const auto diag = nlohmann::json::parse(read_file(dir / "diagnostics.json"));
  CHECK(diag["converged"].get<bool>());
  CHECK(diag["windows"].size() == 4);
  CHECK(diag["residuals"].size() == 3);
  for (const auto& [name, value] : diag["residuals"].items())
    CHECK(value.get<double>() < 0.05);
}

TEST_CASE("dispatch simulate emits pinned CSV layouts and reruns identically") {
  const fs::path dir1 = temp_dir("sim1");
  RunConfig cfg = parse_config(R"({
    "seed": 5,
    "arrival": {"family": "exponential", "rate": 1.0},
    "service": {"family": "exponential", "params": {"mean": 1.0}},
    "weight": {"family": "expsat", "params": {"beta": 1.0}},
    "sim": {"horizon": 8.0, "initial_requirements": [2.0, 6.0],
             "snapshot_times": [4.0, 8.0]}
  })");
  REQUIRE(dispatch("simulate", cfg, dir1) == 0);
  const std::string events = read_file(dir1 / "events.csv");
  CHECK(events.rfind("time,kind,job_id,requirement", 0) == 0);
  const std::string series = read_file(dir1 / "series.csv");
  CHECK(series.rfind("time,z,workload", 0) == 0);
  const std::string snaps = read_file(dir1 / "snapshots.csv");
  CHECK(snaps.rfind("time,location,mass", 0) == 0);

  // Rerun from the emitted manifest: byte-identical outputs.
  const fs::path dir2 = temp_dir("sim2");
  const RunConfig from_manifest = parse_config(read_file(dir1 / "manifest.json"));
  CHECK(from_manifest == cfg);
  REQUIRE(dispatch("simulate", from_manifest, dir2) == 0);
  CHECK(read_file(dir2 / "events.csv") == events);
  CHECK(read_file(dir2 / "series.csv") == series);
  CHECK(read_file(dir2 / "snapshots.csv") == snaps);
}

TEST_CASE("dispatch distance prints zero for identical files") {
  const fs::path dir = temp_dir("distance");
  const std::string csv = "location,mass\n1.5,2\n3,0.25\n";
  write_file_atomic(dir / "a.csv", csv);
  write_file_atomic(dir / "b.csv", csv);

  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code = dispatch("distance", RunConfig{}, dir, OutputFormat::Csv,
                            {(dir / "a.csv").string(), (dir / "b.csv").string()});
  std::cout.rdbuf(old);
  CHECK(code == 0);
  CHECK(captured.str() == "0\n");
}

TEST_CASE("dispatch rejects unknown subcommands and missing theta") {
  const fs::path dir = temp_dir("bad");
  CHECK(dispatch("transmogrify", RunConfig{}, dir) == 1);
  REQUIRE(fs::exists(dir / "error.json"));

  RunConfig no_theta = parse_config("{}");
  CHECK(dispatch("fluid", no_theta, dir) == 1);
}

TEST_CASE("dispatch fluid exit code 2 on a floor violation, partial outputs kept") {
  const fs::path dir = temp_dir("floor");
  RunConfig cfg = parse_config(R"({
    "arrival": {"family": "none", "rate": 0.0},
    "weight": {"family": "expsat", "params": {"beta": 1.0}},
    "theta": [[5.0, 1.0]],
    "fluid": {"dt": 0.01, "horizon": 10.0, "delta_floor": 0.2}
  })");
  CHECK(dispatch("fluid", cfg, dir) == 2);
  CHECK(fs::exists(dir / "error.json"));
  CHECK(fs::exists(dir / "workload.csv"));
  const auto err = nlohmann::json::parse(read_file(dir / "error.json"));
  CHECK(err["error"]["type"] == "floor_violation");
}

TEST_CASE("json output format mirrors the CSV tables") {
  const fs::path dir = temp_dir("jsonfmt");
  RunConfig cfg = parse_config(kRho1Fixture);
  cfg.fluid.horizon = 0.05;
  REQUIRE(dispatch("fluid", cfg, dir, OutputFormat::Json) == 0);
  REQUIRE(fs::exists(dir / "workload.json"));
  const auto j = nlohmann::json::parse(read_file(dir / "workload.json"));
  REQUIRE(j["columns"].size() == 2);
  CHECK(j["columns"][0] == "time");
  CHECK(j["rows"].size() == 11);
}

TEST_CASE("emitted snapshot values re-parse to the in-memory measure") {
  SimConfig sc;
  sc.horizon = 2.0;
  sc.seed = 3;
  sc.snapshot_times = {2.0};
  SystemParameters params{ArrivalModel::poisson(1.0),
                          Distribution::exponential(1.0),
                          WeightFunction::exp_saturation(1.0)};
  std::vector<Job> init(1);
  init[0].requirement = 4.0;
  init[0].remaining = 4.0;
  const Trace t = run(params, init, sc);
  REQUIRE(t.snapshots.size() == 1);
  const AtomicMeasure back = measure_from_csv(t.snapshots_csv());
  CHECK(back == t.snapshots[0].measure);
  CHECK(bl_distance(back, t.snapshots[0].measure) == 0.0);
}
