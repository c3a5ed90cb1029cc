#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wps/measure.hpp"
#include "wps/model.hpp"

namespace wps {

// <w, mu> dropped below the configured floor: the velocity denominator is no
// longer safely bounded away from zero.
struct FloorViolation : std::runtime_error {
  FloorViolation(double t, double value, double floor)
      : std::runtime_error("fluid solve hit the <w,mu> floor at t=" +
                           std::to_string(t) + " (value " + std::to_string(value) +
                           " < floor " + std::to_string(floor) + ")"),
        time(t), value(value), floor(floor) {}
  double time;
  double value;
  double floor;
};

using FluidPath = MeasurePath;

struct FluidConfig {
  double dt{1e-3};
  int quadrature{100};     // atoms per source injection
  double prune_eps{1e-9};
  double delta_floor{0.0};  // 0: resolved to 1e-3 * <w, theta> at solve entry
  double horizon{1.0};
  double merge_tol{0.0};    // moment-preserving coarsening; 0 disables
  int record_stride{1};     // path keeps every stride-th internal step
  bool transport_enabled{true};  // test hook: freeze atoms, keep the source
};

inline void validate_fluid_config(const FluidConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("fluid: dt must be > 0");
  if (cfg.quadrature < 1)
    throw std::invalid_argument("fluid: quadrature size must be >= 1");
  if (cfg.prune_eps < 0.0)
    throw std::invalid_argument("fluid: prune threshold must be >= 0");
  if (cfg.horizon < 0.0)
    throw std::invalid_argument("fluid: horizon must be >= 0");
  if (cfg.record_stride < 1)
    throw std::invalid_argument("fluid: record_stride must be >= 1");
  if (cfg.merge_tol < 0.0)
    throw std::invalid_argument("fluid: merge_tol must be >= 0");
}

inline double resolved_floor(const FluidConfig& cfg, const WeightFunction& w,
                             const AtomicMeasure& theta) {
  if (cfg.delta_floor > 0.0) return cfg.delta_floor;
  return 1e-3 * integrate(w, theta);
}

namespace detail {

inline double w_mass(const WeightFunction& w, const std::vector<Atom>& atoms) {
  double s = 0.0;
  for (const Atom& a : atoms) s += a.mass * w(std::max(a.location, 0.0));
  return s;
}

// Source term: quantile atoms of nu carrying total mass alpha * dt.
inline void inject_source(std::vector<Atom>& atoms, const SystemParameters& params,
                          const FluidConfig& cfg) {
  const double alpha = params.arrival.rate();
  if (!(alpha > 0.0)) return;
  const AtomicMeasure q = quantile_atoms(params.service, cfg.quadrature);
  const double scale = alpha * cfg.dt;
  for (const Atom& a : q.atoms()) atoms.push_back({a.location, a.mass * scale});
}

}  // namespace detail

// One grid step of the fluid dynamics: transport every atom along
// dx/dt = -w(x)/<w, mu>, the denominator re-evaluated at each RK4 stage from
// the stage-advanced atom set; then inject the arrival source and prune.
inline AtomicMeasure fluid_step(const AtomicMeasure& mu,
                                const SystemParameters& params,
                                const FluidConfig& cfg, double t_now = 0.0) {
  validate_fluid_config(cfg);
  const WeightFunction& w = params.weight;
  const double floor = cfg.delta_floor > 0.0 ? cfg.delta_floor
                                             : resolved_floor(cfg, w, mu);
  std::vector<Atom> atoms = mu.atoms();
  const std::size_t n = atoms.size();

  const double d0 = detail::w_mass(w, atoms);
  if (d0 < floor) throw FloorViolation(t_now, d0, floor);

  if (cfg.transport_enabled && n > 0) {
    const double h = cfg.dt;
    std::vector<double> x(n), k1(n), k2(n), k3(n), k4(n);
    std::vector<Atom> stage = atoms;
    for (std::size_t i = 0; i < n; ++i) x[i] = atoms[i].location;

    auto rates = [&](const std::vector<Atom>& at, std::vector<double>& k,
                     double stage_time) {
      const double d = detail::w_mass(w, at);
      if (d < floor) throw FloorViolation(stage_time, d, floor);
      for (std::size_t i = 0; i < n; ++i)
        k[i] = -w(std::max(at[i].location, 0.0)) / d;
    };

    rates(atoms, k1, t_now);
    for (std::size_t i = 0; i < n; ++i) stage[i].location = x[i] + 0.5 * h * k1[i];
    rates(stage, k2, t_now + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) stage[i].location = x[i] + 0.5 * h * k2[i];
    rates(stage, k3, t_now + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) stage[i].location = x[i] + h * k3[i];
    rates(stage, k4, t_now + h);
    for (std::size_t i = 0; i < n; ++i) {
      const double moved =
          x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      atoms[i].location = std::max(moved, 0.0);
    }
  }

  detail::inject_source(atoms, params, cfg);
  AtomicMeasure out = prune(AtomicMeasure(std::move(atoms)), cfg.prune_eps);
  if (cfg.merge_tol > 0.0) out = coarsen(out, cfg.merge_tol);
  return out;
}

struct FluidSolveResult {
  FluidPath path;                 // grid step = dt * record_stride
  std::vector<double> times;      // every internal step
  std::vector<double> workload;   // <chi, mu> per internal step
  std::vector<double> wmass;      // <w, mu> per internal step
  bool hit_floor{false};
  double floor_time{0.0};
};

// Marches fluid_step over the horizon. On a floor violation the path built so
// far is returned with the violation recorded instead of being thrown away.
inline FluidSolveResult solve_direct(const AtomicMeasure& theta,
                                     const SystemParameters& params,
                                     const FluidConfig& cfg) {
  validate_fluid_config(cfg);
  const std::int64_t steps = std::llround(cfg.horizon / cfg.dt);
  if (std::abs(static_cast<double>(steps) * cfg.dt - cfg.horizon) >
      1e-9 * std::max(1.0, cfg.horizon))
    throw std::invalid_argument("fluid: dt must divide the horizon");
  if (steps % cfg.record_stride != 0 && steps > 0)
    throw std::invalid_argument("fluid: record_stride must divide the step count");

  FluidConfig step_cfg = cfg;
  step_cfg.delta_floor = resolved_floor(cfg, params.weight, theta);

  FluidSolveResult res;
  res.path.t0 = 0.0;
  res.path.dt = cfg.dt * static_cast<double>(cfg.record_stride);
  res.path.measures.push_back(theta);
  AtomicMeasure mu = theta;
  res.times.push_back(0.0);
  res.workload.push_back(mu.workload());
  res.wmass.push_back(integrate(params.weight, mu));

  for (std::int64_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    try {
      mu = fluid_step(mu, params, step_cfg, t);
    } catch (const FloorViolation& fv) {
      res.hit_floor = true;
      res.floor_time = fv.time;
      // Truncate the recorded path to full strides.
      break;
    }
    res.times.push_back(static_cast<double>(k + 1) * cfg.dt);
    res.workload.push_back(mu.workload());
    res.wmass.push_back(integrate(params.weight, mu));
    if ((k + 1) % cfg.record_stride == 0) res.path.measures.push_back(mu);
  }
  return res;
}

// Linear transport of eta(t0) under the frozen velocity field
// v(x, s) = -w(x)/<w, eta(s)> plus the arrival source: one application of the
// fixed-point operator. Fixed points solve the fluid dynamics.
inline FluidPath picard_apply(const FluidPath& eta, const SystemParameters& params,
                              const FluidConfig& cfg) {
  validate_fluid_config(cfg);
  if (eta.measures.empty())
    throw std::invalid_argument("picard_apply: empty path");
  if (eta.size() > 1 &&
      std::abs(eta.dt - cfg.dt) > 1e-12 * std::max(1.0, cfg.dt))
    throw std::invalid_argument("picard_apply: path grid must match cfg.dt");

  const WeightFunction& w = params.weight;
  const double floor = resolved_floor(cfg, w, eta.measures.front());
  std::vector<double> denom(eta.size());
  for (std::size_t k = 0; k < eta.size(); ++k) {
    denom[k] = integrate(w, eta.measures[k]);
    if (denom[k] < floor)
      throw FloorViolation(eta.time_at(k), denom[k], floor);
  }

  FluidPath out;
  out.t0 = eta.t0;
  out.dt = eta.dt;
  out.measures.push_back(eta.measures.front());

  AtomicMeasure mu = eta.measures.front();
  const double h = cfg.dt;
  for (std::size_t k = 0; k + 1 < eta.size(); ++k) {
    const double d_left = denom[k];
    const double d_mid = 0.5 * (denom[k] + denom[k + 1]);
    const double d_right = denom[k + 1];
    std::vector<Atom> atoms = mu.atoms();
    const std::size_t n = atoms.size();
    if (cfg.transport_enabled && n > 0) {
      std::vector<double> x(n), k1(n), k2(n), k3(n), k4(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = atoms[i].location;
      auto rate = [&](double xi, double d) {
        return -w(std::max(xi, 0.0)) / d;
      };
      for (std::size_t i = 0; i < n; ++i) k1[i] = rate(x[i], d_left);
      for (std::size_t i = 0; i < n; ++i)
        k2[i] = rate(x[i] + 0.5 * h * k1[i], d_mid);
      for (std::size_t i = 0; i < n; ++i)
        k3[i] = rate(x[i] + 0.5 * h * k2[i], d_mid);
      for (std::size_t i = 0; i < n; ++i)
        k4[i] = rate(x[i] + h * k3[i], d_right);
      for (std::size_t i = 0; i < n; ++i) {
        const double moved =
            x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        atoms[i].location = std::max(moved, 0.0);
      }
    }
    detail::inject_source(atoms, params, cfg);
    mu = prune(AtomicMeasure(std::move(atoms)), cfg.prune_eps);
    if (cfg.merge_tol > 0.0) mu = coarsen(mu, cfg.merge_tol);
    out.measures.push_back(mu);
  }
  return out;
}

struct PicardConfig {
  double window{0.0};  // Delta; 0: resolved to zeta * floor / (2 ||w||)
  double zeta{0.5};
  int max_iterations{50};
  double tolerance{1e-8};  // successive path distance target
};

inline void validate_picard_config(const PicardConfig& cfg) {
  if (!(cfg.zeta > 0.0 && cfg.zeta < 1.0))
    throw std::invalid_argument("picard: zeta must lie in (0,1)");
  if (cfg.max_iterations < 0)
    throw std::invalid_argument("picard: max_iterations must be >= 0");
  if (!(cfg.tolerance > 0.0))
    throw std::invalid_argument("picard: tolerance must be > 0");
  if (cfg.window < 0.0)
    throw std::invalid_argument("picard: window must be >= 0");
}

struct PicardWindowDiag {
  double t_start{0.0};
  int iterations{0};
  bool converged{false};
  std::vector<double> distances;  // successive ||eta_{n+1} - eta_n||_c
  std::vector<double> ratios;     // distances[i+1] / distances[i]
};

struct PicardDiagnostics {
  double window{0.0};
  double delta_floor{0.0};
  int total_iterations{0};
  bool converged{false};
  std::vector<PicardWindowDiag> windows;
};

struct NonConvergence : std::runtime_error {
  NonConvergence(const std::string& msg, PicardDiagnostics diag)
      : std::runtime_error(msg), diagnostics(std::move(diag)) {}
  PicardDiagnostics diagnostics;
};

struct PicardResult {
  FluidPath path;
  PicardDiagnostics diagnostics;
};

// Banach fixed-point construction: on each window of length Delta, iterate the
// frozen-velocity operator from the constant path until successive iterates
// are closer than the tolerance, then chain windows across the horizon.
inline PicardResult picard_iterate(const AtomicMeasure& theta,
                                   const SystemParameters& params,
                                   const FluidConfig& cfg,
                                   const PicardConfig& pcfg) {
  validate_fluid_config(cfg);
  validate_picard_config(pcfg);
  const WeightFunction& w = params.weight;
  const double floor = resolved_floor(cfg, w, theta);
  const double sup_w = w.sup_bound();
  const double window_bound = pcfg.zeta * floor / (2.0 * sup_w);
  double window = pcfg.window > 0.0 ? pcfg.window : window_bound;
  if (window > window_bound * (1.0 + 1e-9))
    throw std::invalid_argument(
        "picard: window exceeds zeta*delta_floor/(2*sup w) = " +
        std::to_string(window_bound));

  FluidConfig step_cfg = cfg;
  step_cfg.delta_floor = floor;

  const std::int64_t total_steps = std::llround(cfg.horizon / cfg.dt);
  if (std::abs(static_cast<double>(total_steps) * cfg.dt - cfg.horizon) >
      1e-9 * std::max(1.0, cfg.horizon))
    throw std::invalid_argument("fluid: dt must divide the horizon");
  std::int64_t steps_per_window =
      static_cast<std::int64_t>(std::floor(window / cfg.dt + 1e-9));
  if (cfg.horizon > 0.0 && steps_per_window < 1)
    throw std::invalid_argument(
        "picard: window shorter than one grid step; refine dt or raise the floor");

  PicardResult res;
  res.diagnostics.window = window;
  res.diagnostics.delta_floor = floor;
  res.path.t0 = 0.0;
  res.path.dt = cfg.dt;
  res.path.measures.push_back(theta);

  AtomicMeasure head = theta;
  std::int64_t done = 0;
  bool all_converged = true;
  do {
    const std::int64_t steps =
        std::min(steps_per_window, std::max<std::int64_t>(total_steps - done, 0));
    PicardWindowDiag diag;
    diag.t_start = static_cast<double>(done) * cfg.dt;

    FluidPath eta;
    eta.t0 = diag.t_start;
    eta.dt = cfg.dt;
    eta.measures.assign(static_cast<std::size_t>(steps) + 1, head);

    for (int it = 0; it < pcfg.max_iterations; ++it) {
      FluidPath next = picard_apply(eta, params, step_cfg);
      const double d = path_distance(next, eta);
      ++diag.iterations;
      diag.distances.push_back(d);
      if (diag.distances.size() >= 2) {
        const double prev = diag.distances[diag.distances.size() - 2];
        diag.ratios.push_back(prev > 0.0 ? d / prev : 0.0);
      }
      eta = std::move(next);
      if (d < pcfg.tolerance) {
        diag.converged = true;
        break;
      }
    }
    res.diagnostics.total_iterations += diag.iterations;
    all_converged = all_converged && diag.converged;
    res.diagnostics.windows.push_back(diag);
    if (!diag.converged) {
      res.diagnostics.converged = false;
      throw NonConvergence("picard window at t=" + std::to_string(diag.t_start) +
                               " did not converge in " +
                               std::to_string(pcfg.max_iterations) + " iterations",
                           res.diagnostics);
    }
    for (std::size_t k = 1; k < eta.size(); ++k)
      res.path.measures.push_back(eta.measures[k]);
    head = eta.measures.back();
    done += steps;
  } while (done < total_steps);
  res.diagnostics.converged = all_converged;
  return res;
}

// Direct check of the integral fluid equation: for each admissible g,
// sup_t | <g,mu(t)> - <g,mu(0)> + int_0^t <g'w,mu>/<w,mu> ds - alpha t <g,nu> |
// with the time integral by the trapezoid rule on the path grid.
inline std::vector<double> picard_residual(const FluidPath& path,
                                           const SystemParameters& params,
                                           const std::vector<TestFunction>& panel) {
  if (path.measures.empty())
    throw std::invalid_argument("picard_residual: empty path");
  const WeightFunction& w = params.weight;
  std::vector<double> denom(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    denom[k] = integrate(w, path.measures[k]);
    if (!(denom[k] > 0.0))
      throw std::invalid_argument("picard_residual: <w,mu> vanishes on the path");
  }
  const double alpha = params.arrival.rate();
  std::vector<double> out;
  out.reserve(panel.size());
  for (const TestFunction& g : panel) {
    if (!in_class_c(g))
      throw std::invalid_argument("picard_residual: test function '" + g.name +
                                  "' leaves the admissible class");
    const double source_pairing =
        alpha > 0.0 ? params.service.expectation(g.evaluate) : 0.0;
    const double g0 = integrate(g.evaluate, path.measures.front());
    std::vector<double> drift(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
      const double num = integrate(
          [&](double x) { return g.derivative(x) * w(x); }, path.measures[k]);
      drift[k] = num / denom[k];
    }
    double integral = 0.0;
    double worst = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (k > 0) integral += 0.5 * path.dt * (drift[k - 1] + drift[k]);
      const double t = static_cast<double>(k) * path.dt;
      const double lhs = integrate(g.evaluate, path.measures[k]);
      const double residual = lhs - g0 + integral - alpha * t * source_pairing;
      worst = std::max(worst, std::abs(residual));
    }
    out.push_back(worst);
  }
  return out;
}

inline std::vector<double> workload_series(const FluidPath& path) {
  std::vector<double> out;
  out.reserve(path.size());
  for (const AtomicMeasure& mu : path.measures) out.push_back(mu.workload());
  return out;
}

}  // namespace wps
