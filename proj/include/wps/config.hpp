#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wps/fluid.hpp"
#include "wps/harness.hpp"
#include "wps/measure.hpp"
#include "wps/model.hpp"
#include "wps/simulator.hpp"

namespace wps {

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> errs)
      : std::runtime_error(join(errs)), errors(std::move(errs)) {}
  explicit ConfigError(const std::string& err)
      : ConfigError(std::vector<std::string>{err}) {}

  std::vector<std::string> errors;

 private:
  static std::string join(const std::vector<std::string>& errs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < errs.size(); ++i) {
      if (i) os << '\n';
      os << errs[i];
    }
    return os.str();
  }
};

struct ArrivalSpec {
  std::string family{"exponential"};
  double rate{1.0};
  std::string first_interval{"equilibrium"};
  std::map<std::string, double> params;
};

struct ServiceSpec {
  std::string family{"exponential"};
  std::map<std::string, double> params{{"mean", 1.0}};
};

struct WeightSpec {
  std::string family{"expsat"};
  std::map<std::string, double> params{{"beta", 1.0}};
};

struct SimSpec {
  double horizon{1.0};
  double depart_threshold{1e-9};
  double h_max{0.25};
  double tolerance{1e-9};
  std::vector<double> snapshot_times;
  std::vector<double> initial_requirements;
};

struct FluidSpec {
  double dt{1e-3};
  int quadrature{100};
  double prune_eps{1e-9};
  double delta_floor{0.0};
  double horizon{1.0};
  double merge_tol{0.0};
  int record_stride{1};
};

struct PicardSpec {
  double window{0.0};
  double zeta{0.5};
  int max_iterations{50};
  double tolerance{1e-8};
};

struct ScalingSpec {
  std::vector<std::int64_t> r_values{1};
  int replications{1};
  std::vector<double> checkpoints{1.0};
  std::string init_mode{"iid"};
  double perturbation{0.0};
  bool require_heavy_traffic{true};
  int threads{1};
};

struct RunConfig {
  int schema_version{1};
  std::uint64_t seed{0};
  ArrivalSpec arrival;
  ServiceSpec service;
  WeightSpec weight;
  std::vector<Atom> theta;
  SimSpec sim;
  FluidSpec fluid;
  PicardSpec picard;
  ScalingSpec scaling;

  WeightFunction build_weight() const {
    if (weight.family == "saturating") return WeightFunction::saturating();
    if (weight.family == "expsat")
      return WeightFunction::exp_saturation(param_or(weight.params, "beta", 1.0));
    if (weight.family == "trunclinear")
      return WeightFunction::truncated_linear(param_or(weight.params, "cap", 1.0));
    if (weight.family == "constant")
      return WeightFunction::constant(param_or(weight.params, "level", 1.0));
    throw ConfigError("weight.family: unknown family '" + weight.family + "'");
  }

  ServiceDistribution build_service() const {
    return build_distribution(service.family, service.params, "service");
  }

  ArrivalModel build_arrival() const {
    if (arrival.family == "none" || arrival.rate == 0.0)
      return ArrivalModel::none();
    const FirstInterval fi = arrival.first_interval == "ordinary"
                                 ? FirstInterval::Ordinary
                                 : FirstInterval::Equilibrium;
    if (arrival.first_interval != "ordinary" &&
        arrival.first_interval != "equilibrium")
      throw ConfigError("arrival.first_interval: expected 'equilibrium' or 'ordinary'");
    if (arrival.family == "exponential")
      return ArrivalModel::renewal(arrival.rate,
                                   Distribution::exponential(1.0 / arrival.rate), fi);
    if (arrival.family == "deterministic")
      return ArrivalModel::renewal(
          arrival.rate, Distribution::deterministic(1.0 / arrival.rate), fi);
    if (arrival.family == "uniform" || arrival.family == "hyperexp") {
      Distribution d = build_distribution(arrival.family, arrival.params, "arrival");
      return ArrivalModel::renewal(arrival.rate, std::move(d), fi);
    }
    throw ConfigError("arrival.family: unknown family '" + arrival.family + "'");
  }

  SystemParameters build_params() const {
    SystemParameters p{build_arrival(), build_service(), build_weight()};
    const WeightValidation v = validate_weight(p.weight, 50.0, 501);
    if (!v.passed) throw ConfigError("weight.family: " + v.failure);
    return p;
  }

  AtomicMeasure build_theta() const {
    return AtomicMeasure(std::vector<Atom>(theta));
  }

  SimConfig build_sim() const {
    SimConfig c;
    c.horizon = sim.horizon;
    c.depart_threshold = sim.depart_threshold;
    c.h_max = sim.h_max;
    c.tolerance = sim.tolerance;
    c.seed = seed;
    c.snapshot_times = sim.snapshot_times;
    return c;
  }

  FluidConfig build_fluid() const {
    FluidConfig c;
    c.dt = fluid.dt;
    c.quadrature = fluid.quadrature;
    c.prune_eps = fluid.prune_eps;
    c.delta_floor = fluid.delta_floor;
    c.horizon = fluid.horizon;
    c.merge_tol = fluid.merge_tol;
    c.record_stride = fluid.record_stride;
    return c;
  }

  PicardConfig build_picard() const {
    PicardConfig c;
    c.window = picard.window;
    c.zeta = picard.zeta;
    c.max_iterations = picard.max_iterations;
    c.tolerance = picard.tolerance;
    return c;
  }

  ScalingExperiment build_scaling() const {
    ScalingExperiment e;
    e.r_values = scaling.r_values;
    e.replications = scaling.replications;
    e.master_seed = seed;
    e.checkpoints = scaling.checkpoints;
    e.params = build_params();
    e.theta = build_theta();
    e.fluid = build_fluid();
    e.sim = build_sim();
    if (scaling.init_mode == "iid")
      e.init_mode = InitMode::Sampled;
    else if (scaling.init_mode == "quantile")
      e.init_mode = InitMode::Quantile;
    else
      throw ConfigError("scaling.init_mode: expected 'iid' or 'quantile'");
    e.perturbation = scaling.perturbation;
    e.require_heavy_traffic = scaling.require_heavy_traffic;
    e.threads = scaling.threads;
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["arrival"] = {{"family", arrival.family},
                    {"rate", arrival.rate},
                    {"first_interval", arrival.first_interval},
                    {"params", arrival.params}};
    j["service"] = {{"family", service.family}, {"params", service.params}};
    j["weight"] = {{"family", weight.family}, {"params", weight.params}};
    nlohmann::json th = nlohmann::json::array();
    for (const Atom& a : theta) th.push_back({a.location, a.mass});
    j["theta"] = th;
    j["sim"] = {{"horizon", sim.horizon},
                {"depart_threshold", sim.depart_threshold},
                {"h_max", sim.h_max},
                {"tolerance", sim.tolerance},
                {"snapshot_times", sim.snapshot_times},
                {"initial_requirements", sim.initial_requirements}};
    j["fluid"] = {{"dt", fluid.dt},
                  {"quadrature", fluid.quadrature},
                  {"prune_eps", fluid.prune_eps},
                  {"delta_floor", fluid.delta_floor},
                  {"horizon", fluid.horizon},
                  {"merge_tol", fluid.merge_tol},
                  {"record_stride", fluid.record_stride}};
    j["picard"] = {{"window", picard.window},
                   {"zeta", picard.zeta},
                   {"max_iterations", picard.max_iterations},
                   {"tolerance", picard.tolerance}};
    j["scaling"] = {{"r_values", scaling.r_values},
                    {"replications", scaling.replications},
                    {"checkpoints", scaling.checkpoints},
                    {"init_mode", scaling.init_mode},
                    {"perturbation", scaling.perturbation},
                    {"require_heavy_traffic", scaling.require_heavy_traffic},
                    {"threads", scaling.threads}};
    return j;
  }

  bool operator==(const RunConfig& o) const {
    return to_json() == o.to_json();
  }

 private:
  static double param_or(const std::map<std::string, double>& params,
                         const std::string& key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  static Distribution build_distribution(const std::string& family,
                                         const std::map<std::string, double>& params,
                                         const std::string& where) {
    try {
      if (family == "exponential")
        return Distribution::exponential(param_or(params, "mean", 1.0));
      if (family == "deterministic")
        return Distribution::deterministic(param_or(params, "value", 1.0));
      if (family == "uniform")
        return Distribution::uniform(param_or(params, "a", 0.0),
                                     param_or(params, "b", 1.0));
      if (family == "hyperexp")
        return Distribution::hyperexp(param_or(params, "p", 0.5),
                                      param_or(params, "mean1", 1.0),
                                      param_or(params, "mean2", 1.0));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ".params: " + e.what());
    }
    throw ConfigError(where + ".family: unknown family '" + family + "'");
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& root) : root_(root) {}

  RunConfig read() {
    RunConfig cfg;
    check_keys(root_, "",
               {"schema_version", "seed", "arrival", "service", "weight", "theta",
                "sim", "fluid", "picard", "scaling"});
    read_int(root_, "schema_version", cfg.schema_version);
    if (cfg.schema_version != 1)
      error("schema_version: unsupported version " +
            std::to_string(cfg.schema_version));
    read_u64(root_, "seed", cfg.seed);

    if (const auto* b = block("arrival")) {
      check_keys(*b, "arrival.", {"family", "rate", "first_interval", "params"});
      read_string(*b, "arrival.", "family", cfg.arrival.family);
      read_double(*b, "arrival.", "rate", cfg.arrival.rate);
      read_string(*b, "arrival.", "first_interval", cfg.arrival.first_interval);
      read_params(*b, "arrival.", cfg.arrival.params);
      if (cfg.arrival.rate < 0.0) error("arrival.rate: must be >= 0");
    }
    if (const auto* b = block("service")) {
      check_keys(*b, "service.", {"family", "params"});
      read_string(*b, "service.", "family", cfg.service.family);
      if (b->contains("params")) cfg.service.params.clear();
      read_params(*b, "service.", cfg.service.params);
    }
    if (const auto* b = block("weight")) {
      check_keys(*b, "weight.", {"family", "params"});
      read_string(*b, "weight.", "family", cfg.weight.family);
      if (b->contains("params")) cfg.weight.params.clear();
      read_params(*b, "weight.", cfg.weight.params);
    }
    if (root_.contains("theta")) {
      const auto& th = root_.at("theta");
      if (!th.is_array()) {
        error("theta: expected an array of [location, mass] pairs");
      } else {
        for (const auto& row : th) {
          if (!row.is_array() || row.size() != 2 || !row[0].is_number() ||
              !row[1].is_number()) {
            error("theta: entries must be [location, mass] number pairs");
            break;
          }
          cfg.theta.push_back({row[0].get<double>(), row[1].get<double>()});
        }
      }
    }
    if (const auto* b = block("sim")) {
      check_keys(*b, "sim.",
                 {"horizon", "depart_threshold", "h_max", "tolerance",
                  "snapshot_times", "initial_requirements"});
      read_double(*b, "sim.", "horizon", cfg.sim.horizon);
      read_double(*b, "sim.", "depart_threshold", cfg.sim.depart_threshold);
      read_double(*b, "sim.", "h_max", cfg.sim.h_max);
      read_double(*b, "sim.", "tolerance", cfg.sim.tolerance);
      read_doubles(*b, "sim.", "snapshot_times", cfg.sim.snapshot_times);
      read_doubles(*b, "sim.", "initial_requirements", cfg.sim.initial_requirements);
    }
    if (const auto* b = block("fluid")) {
      check_keys(*b, "fluid.",
                 {"dt", "quadrature", "prune_eps", "delta_floor", "horizon",
                  "merge_tol", "record_stride"});
      read_double(*b, "fluid.", "dt", cfg.fluid.dt);
      read_int_field(*b, "fluid.", "quadrature", cfg.fluid.quadrature);
      read_double(*b, "fluid.", "prune_eps", cfg.fluid.prune_eps);
      read_double(*b, "fluid.", "delta_floor", cfg.fluid.delta_floor);
      read_double(*b, "fluid.", "horizon", cfg.fluid.horizon);
      read_double(*b, "fluid.", "merge_tol", cfg.fluid.merge_tol);
      read_int_field(*b, "fluid.", "record_stride", cfg.fluid.record_stride);
    }
    if (const auto* b = block("picard")) {
      check_keys(*b, "picard.", {"window", "zeta", "max_iterations", "tolerance"});
      read_double(*b, "picard.", "window", cfg.picard.window);
      read_double(*b, "picard.", "zeta", cfg.picard.zeta);
      read_int_field(*b, "picard.", "max_iterations", cfg.picard.max_iterations);
      read_double(*b, "picard.", "tolerance", cfg.picard.tolerance);
    }
    if (const auto* b = block("scaling")) {
      check_keys(*b, "scaling.",
                 {"r_values", "replications", "checkpoints", "init_mode",
                  "perturbation", "require_heavy_traffic", "threads"});
      if (b->contains("r_values")) {
        cfg.scaling.r_values.clear();
        for (const auto& v : b->at("r_values")) {
          if (!v.is_number_integer())
            error("scaling.r_values: entries must be integers");
          else
            cfg.scaling.r_values.push_back(v.get<std::int64_t>());
        }
      }
      read_int_field(*b, "scaling.", "replications", cfg.scaling.replications);
      read_doubles(*b, "scaling.", "checkpoints", cfg.scaling.checkpoints);
      read_string(*b, "scaling.", "init_mode", cfg.scaling.init_mode);
      read_double(*b, "scaling.", "perturbation", cfg.scaling.perturbation);
      if (b->contains("require_heavy_traffic")) {
        if (!b->at("require_heavy_traffic").is_boolean())
          error("scaling.require_heavy_traffic: expected a boolean");
        else
          cfg.scaling.require_heavy_traffic =
              b->at("require_heavy_traffic").get<bool>();
      }
      read_int_field(*b, "scaling.", "threads", cfg.scaling.threads);
    }

    // Semantic validation through the model-level builders.
    if (errors_.empty()) {
      try {
        (void)cfg.build_params();
      } catch (const ConfigError& e) {
        for (const auto& msg : e.errors) errors_.push_back(msg);
      } catch (const std::invalid_argument& e) {
        errors_.push_back(std::string("config: ") + e.what());
      }
      try {
        (void)cfg.build_theta();
      } catch (const std::invalid_argument& e) {
        errors_.push_back(std::string("theta: ") + e.what());
      }
    }
    if (!errors_.empty()) throw ConfigError(errors_);
    return cfg;
  }

 private:
  const nlohmann::json& root_;
  std::vector<std::string> errors_;

  void error(std::string msg) { errors_.push_back(std::move(msg)); }

  const nlohmann::json* block(const char* name) {
    if (!root_.contains(name)) return nullptr;
    const auto& b = root_.at(name);
    if (!b.is_object()) {
      error(std::string(name) + ": expected an object");
      return nullptr;
    }
    return &b;
  }

  void check_keys(const nlohmann::json& obj, const std::string& prefix,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* k : allowed)
        if (it.key() == k) ok = true;
      if (!ok) error(prefix + it.key() + ": unknown key");
    }
  }

  void read_int(const nlohmann::json& obj, const char* key, int& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_number_integer())
      error(std::string(key) + ": expected an integer");
    else
      out = obj.at(key).get<int>();
  }

  void read_u64(const nlohmann::json& obj, const char* key, std::uint64_t& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_number_integer() || obj.at(key).is_number_float())
      error(std::string(key) + ": expected an unsigned integer");
    else
      out = obj.at(key).get<std::uint64_t>();
  }

  void read_int_field(const nlohmann::json& obj, const std::string& prefix,
                      const char* key, int& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_number_integer())
      error(prefix + key + ": expected an integer");
    else
      out = obj.at(key).get<int>();
  }

  void read_double(const nlohmann::json& obj, const std::string& prefix,
                   const char* key, double& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_number())
      error(prefix + key + ": expected a number");
    else {
      out = obj.at(key).get<double>();
      if (!std::isfinite(out)) error(prefix + key + ": must be finite");
    }
  }

  void read_string(const nlohmann::json& obj, const std::string& prefix,
                   const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string())
      error(prefix + key + ": expected a string");
    else
      out = obj.at(key).get<std::string>();
  }

  void read_doubles(const nlohmann::json& obj, const std::string& prefix,
                    const char* key, std::vector<double>& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_array()) {
      error(prefix + key + ": expected an array of numbers");
      return;
    }
    out.clear();
    for (const auto& v : obj.at(key)) {
      if (!v.is_number()) {
        error(prefix + key + ": expected an array of numbers");
        return;
      }
      out.push_back(v.get<double>());
    }
  }

  void read_params(const nlohmann::json& obj, const std::string& prefix,
                   std::map<std::string, double>& out) {
    if (!obj.contains("params")) return;
    const auto& p = obj.at("params");
    if (!p.is_object()) {
      error(prefix + "params: expected an object");
      return;
    }
    for (auto it = p.begin(); it != p.end(); ++it) {
      if (!it.value().is_number())
        error(prefix + "params." + it.key() + ": expected a number");
      else
        out[it.key()] = it.value().get<double>();
    }
  }
};

inline std::pair<int, int> line_col_of_offset(const std::string& text,
                                              std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& j) {
  if (j.is_object() && j.contains("config")) {
    // Run manifest: the resolved config rides under "config".
    return detail::ConfigReader(j.at("config")).read();
  }
  return detail::ConfigReader(j).read();
}

// Parses JSON text into a fully materialized RunConfig. Syntax errors carry
// line/column; schema and invariant violations carry the offending field path.
inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col_of_offset(text, e.byte);
    throw ConfigError("syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  return parse_config_json(j);
}

}  // namespace wps
