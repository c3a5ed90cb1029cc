#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wps/config.hpp"
#include "wps/dispatch.hpp"
#include "wps/io.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output_dir = "wps-out";
  std::string format = "csv";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path,
                            "run configuration (JSON file or manifest)");
  if (config_required) c->required();
  cmd->add_option("--output", opts.output_dir, "output directory");
  cmd->add_option("--format", opts.format, "table format: csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

int run_config_command(const std::string& subcommand, const CommonOpts& opts) {
  wps::RunConfig cfg;
  try {
    cfg = wps::parse_config(wps::read_file(opts.config_path));
  } catch (const std::exception& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 1;
  }
  if (opts.seed_set) cfg.seed = opts.seed;
  const wps::OutputFormat fmt =
      opts.format == "json" ? wps::OutputFormat::Json : wps::OutputFormat::Csv;
  return wps::dispatch(subcommand, cfg, opts.output_dir, fmt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "wps: simulate remaining-service-weighted processor-sharing queues and "
      "solve their measure-valued fluid limits"};
  app.require_subcommand(1);

  CommonOpts sim_opts, fluid_opts, picard_opts, scaling_opts;
  auto* sim = app.add_subcommand("simulate", "run the prelimit queue simulator");
  add_common(sim, sim_opts);
  auto* fluid =
      app.add_subcommand("fluid", "solve the fluid dynamics by direct transport");
  add_common(fluid, fluid_opts);
  auto* picard = app.add_subcommand(
      "picard", "solve the fluid dynamics by windowed fixed-point iteration");
  add_common(picard, picard_opts);
  auto* scaling = app.add_subcommand(
      "scaling-test", "compare scaled simulations against the fluid path");
  add_common(scaling, scaling_opts);

  std::vector<std::string> measure_files;
  auto* distance = app.add_subcommand(
      "distance", "bounded-Lipschitz distance between two measure files");
  distance->add_option("files", measure_files, "two measure CSV files")
      ->expected(2)
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) return run_config_command("simulate", sim_opts);
  if (fluid->parsed()) return run_config_command("fluid", fluid_opts);
  if (picard->parsed()) return run_config_command("picard", picard_opts);
  if (scaling->parsed()) return run_config_command("scaling-test", scaling_opts);
  if (distance->parsed()) {
    try {
      return wps::dispatch("distance", wps::RunConfig{}, ".",
                           wps::OutputFormat::Csv, measure_files);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
