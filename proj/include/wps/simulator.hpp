#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wps/io.hpp"
#include "wps/measure.hpp"
#include "wps/model.hpp"

namespace wps {

struct DegenerateState : std::runtime_error {
  explicit DegenerateState(const std::string& msg) : std::runtime_error(msg) {}
};

struct StepFailure : std::runtime_error {
  StepFailure(const std::string& msg, double t)
      : std::runtime_error(msg), time(t) {}
  double time;
};

struct Job {
  std::int64_t id{0};
  double arrival_time{0.0};
  double requirement{0.0};  // nu_j
  double attained{0.0};     // S_j
  double remaining{0.0};    // R_j
  bool initial{false};
};

struct SimConfig {
  double horizon{0.0};
  double depart_threshold{1e-9};
  double h_max{0.25};
  double tolerance{1e-9};  // relative step-doubling error target
  std::uint64_t seed{0};
  std::vector<double> snapshot_times;
};

enum class EventKind { Arrival, Departure };

struct TraceEvent {
  double time{0.0};
  EventKind kind{EventKind::Arrival};
  std::int64_t job_id{0};
  double requirement{0.0};
  std::int64_t z_after{0};
  double workload_before{0.0};
  double workload_after{0.0};
};

struct SeriesPoint {
  double time{0.0};
  std::int64_t z{0};
  double workload{0.0};
};

struct SimSnapshot {
  double time{0.0};
  AtomicMeasure measure;
  std::int64_t z{0};
  std::int64_t arrivals{0};
  double workload{0.0};
  double busy_time{0.0};
};

struct Trace {
  std::vector<TraceEvent> events;
  std::vector<SeriesPoint> series;
  std::vector<SimSnapshot> snapshots;
  std::int64_t initial_jobs{0};
  std::int64_t arrivals{0};
  std::int64_t departures{0};
  std::int64_t departures_initial{0};
  std::int64_t departures_arrived{0};
  double horizon{0.0};
  double busy_time{0.0};

  std::string events_csv() const {
    Table t;
    t.columns = {"time", "kind", "job_id", "requirement"};
    for (const auto& e : events)
      t.rows.push_back({e.time,
                        std::string(e.kind == EventKind::Arrival ? "arrival"
                                                                 : "departure"),
                        e.job_id, e.requirement});
    return t.to_csv();
  }

  std::string series_csv() const {
    Table t;
    t.columns = {"time", "z", "workload"};
    for (const auto& p : series) t.rows.push_back({p.time, p.z, p.workload});
    return t.to_csv();
  }

  std::string snapshots_csv() const {
    Table t;
    t.columns = {"time", "location", "mass"};
    for (const auto& s : snapshots)
      for (const Atom& a : s.measure.atoms())
        t.rows.push_back({s.time, a.location, a.mass});
    return t.to_csv();
  }
};

// Instantaneous capacity shares c_n = w(R_n) / sum_k w(R_k).
inline std::vector<double> service_shares(const std::vector<Job>& jobs,
                                          const WeightFunction& w) {
  if (jobs.empty())
    throw std::invalid_argument("service_shares: no jobs in system");
  std::vector<double> shares(jobs.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    shares[i] = w(std::max(jobs[i].remaining, 0.0));
    denom += shares[i];
  }
  if (!(denom > 0.0))
    throw DegenerateState("service_shares: all weights vanish (every R at 0)");
  for (double& s : shares) s /= denom;
  return shares;
}

struct SimulationState {
  double clock{0.0};
  std::vector<Job> jobs;
  std::int64_t arrivals{0};    // E(t)
  std::int64_t departures{0};  // D(t)
  std::int64_t initial_jobs{0};
  double next_arrival{std::numeric_limits<double>::infinity()};
  double busy_time{0.0};
  std::mt19937_64 rng;
  SimConfig cfg;
  WeightFunction weight{WeightFunction::exp_saturation(1.0)};

  void busy_accum(double dt) { busy_time += dt; }
  std::int64_t z() const { return static_cast<std::int64_t>(jobs.size()); }
  double total_remaining() const {
    double s = 0.0;
    for (const Job& j : jobs) s += j.remaining;
    return s;
  }
};

// State descriptor mu(t): unit mass at each remaining amount above the
// departure threshold.
inline AtomicMeasure snapshot_measure(const SimulationState& st) {
  std::vector<Atom> atoms;
  atoms.reserve(st.jobs.size());
  for (const Job& j : st.jobs)
    if (j.remaining > st.cfg.depart_threshold) atoms.push_back({j.remaining, 1.0});
  return AtomicMeasure(std::move(atoms));
}

namespace detail {

// One classical RK4 step of dR_i/dt = -w(R_i)/sum_k w(R_k), all jobs sharing
// the stage denominator. Stage weights are evaluated at max(R, 0): share sums
// stay exactly one, so total remaining work drains by exactly h per step.
// A stage where every clamped weight vanishes can only be reached by a probe
// step shooting past the final departure; its rates are zero and the crossing
// bisection resolves the step.
inline void rk4_rates(const std::vector<double>& r, const WeightFunction& w,
                      std::vector<double>& k) {
  double denom = 0.0;
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = w(std::max(r[i], 0.0));
    denom += k[i];
  }
  if (!(denom > 0.0)) {
    std::fill(k.begin(), k.end(), 0.0);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) k[i] = -k[i] / denom;
}

inline std::vector<double> rk4_step(const std::vector<double>& r,
                                    const WeightFunction& w, double h) {
  const std::size_t n = r.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  rk4_rates(r, w, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = r[i] + 0.5 * h * k1[i];
  rk4_rates(tmp, w, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = r[i] + 0.5 * h * k2[i];
  rk4_rates(tmp, w, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = r[i] + h * k3[i];
  rk4_rates(tmp, w, k4);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = r[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

inline double min_of(const std::vector<double>& v) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : v) m = std::min(m, x);
  return m;
}

inline void log_departures(SimulationState& st, Trace* trace) {
  // Collect jobs at or below the threshold, depart in job-id order.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < st.jobs.size(); ++i)
    if (st.jobs[i].remaining <= st.cfg.depart_threshold) idx.push_back(i);
  if (idx.empty()) return;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return st.jobs[a].id < st.jobs[b].id;
  });
  std::vector<std::int64_t> ids;
  ids.reserve(idx.size());
  for (std::size_t i : idx) ids.push_back(st.jobs[i].id);
  for (std::int64_t id : ids) {
    auto it = std::find_if(st.jobs.begin(), st.jobs.end(),
                           [&](const Job& j) { return j.id == id; });
    const double before = st.total_remaining();
    Job gone = *it;
    st.jobs.erase(it);
    ++st.departures;
    if (trace) {
      if (gone.initial)
        ++trace->departures_initial;
      else
        ++trace->departures_arrived;
      trace->events.push_back({st.clock, EventKind::Departure, gone.id,
                               gone.requirement, st.z(), before,
                               st.total_remaining()});
      trace->series.push_back({st.clock, st.z(), st.total_remaining()});
    }
  }
}

}  // namespace detail

// Advances the service dynamics by h (no arrival may fall inside the
// interval). Adaptive step-doubling RK4; jobs crossing the departure
// threshold are located by bisection in time and removed at the crossing.
inline void step_service(SimulationState& st, double h, Trace* trace = nullptr) {
  if (h < 0.0) throw std::invalid_argument("step_service: negative step");
  const double target = st.clock + h;
  const double eps = st.cfg.depart_threshold;
  const double rtol = st.cfg.tolerance;
  const double atol = 1e-14;
  double h_suggest = std::min(st.cfg.h_max, h);
  while (st.clock < target) {
    if (st.jobs.empty()) {
      st.clock = target;
      return;
    }
    detail::log_departures(st, trace);  // self-heal any at-threshold stragglers
    if (st.jobs.empty()) continue;
    const double remaining = target - st.clock;
    double h_try = std::min({h_suggest, st.cfg.h_max, remaining});
    std::vector<double> r(st.jobs.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = st.jobs[i].remaining;

    std::vector<double> y1, y2;
    double err = 0.0;
    for (;;) {
      y1 = detail::rk4_step(r, st.weight, h_try);
      std::vector<double> half = detail::rk4_step(r, st.weight, 0.5 * h_try);
      y2 = detail::rk4_step(half, st.weight, 0.5 * h_try);
      err = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double scale = atol + rtol * std::max(std::abs(r[i]), std::abs(y2[i]));
        err = std::max(err, std::abs(y1[i] - y2[i]) / scale);
      }
      if (err <= 1.0) break;
      h_try *= 0.5;
      if (h_try < 1e-13 * std::max(1.0, std::abs(target)))
        throw StepFailure("integrator tolerance not met at minimum step", st.clock);
    }

    const bool crossing = detail::min_of(y1) <= eps;
    if (crossing) {
      // Earliest threshold crossing in (0, h_try]; single-step evaluations
      // keep the bisection predicate consistent with its endpoints.
      double lo = 0.0, hi = h_try;
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        std::vector<double> ym = detail::rk4_step(r, st.weight, mid);
        (detail::min_of(ym) <= eps ? hi : lo) = mid;
      }
      std::vector<double> yc = detail::rk4_step(r, st.weight, hi);
      for (std::size_t i = 0; i < yc.size(); ++i) {
        st.jobs[i].attained += st.jobs[i].remaining - yc[i];
        st.jobs[i].remaining = yc[i];
      }
      st.clock += hi;
      st.busy_accum(hi);
      detail::log_departures(st, trace);
      h_suggest = h_try;
      continue;
    }

    for (std::size_t i = 0; i < y2.size(); ++i) {
      st.jobs[i].attained += st.jobs[i].remaining - y2[i];
      st.jobs[i].remaining = y2[i];
    }
    st.clock = (h_try == remaining) ? target : st.clock + h_try;
    st.busy_accum(h_try);
    h_suggest = err < 0.03125 ? 2.0 * h_try : h_try;
  }
}

// Runs the prelimit system: renewal arrivals, weighted processor sharing,
// snapshots at the requested times. Deterministic given the seed.
inline Trace run(const SystemParameters& params, const std::vector<Job>& init,
                 const SimConfig& cfg) {
  if (!(cfg.horizon > 0.0)) throw std::invalid_argument("run: horizon must be > 0");
  if (!(cfg.depart_threshold > 0.0))
    throw std::invalid_argument("run: depart_threshold must be > 0");
  if (!(cfg.h_max > 0.0)) throw std::invalid_argument("run: h_max must be > 0");

  SimulationState st;
  st.cfg = cfg;
  st.weight = params.weight;
  st.rng.seed(cfg.seed);
  st.jobs = init;
  std::int64_t next_id = 1;
  for (Job& j : st.jobs) {
    if (!(j.requirement > 0.0))
      throw std::invalid_argument("run: initial job with nonpositive requirement");
    if (j.remaining <= 0.0) j.remaining = j.requirement - j.attained;
    j.initial = true;
    j.id = next_id++;
  }
  st.initial_jobs = st.z();

  Trace trace;
  trace.initial_jobs = st.initial_jobs;
  trace.horizon = cfg.horizon;

  std::vector<double> snaps = cfg.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  while (!snaps.empty() && snaps.back() > cfg.horizon) snaps.pop_back();
  std::size_t snap_idx = 0;

  if (params.arrival.active())
    st.next_arrival = params.arrival.sample_first(st.rng);

  detail::log_departures(st, &trace);  // degenerate initial jobs, if any
  trace.series.push_back({0.0, st.z(), st.total_remaining()});
  auto record_snapshot = [&](double t) {
    trace.snapshots.push_back({t, snapshot_measure(st), st.z(), st.arrivals,
                               st.total_remaining(), st.busy_time});
  };
  while (snap_idx < snaps.size() && snaps[snap_idx] <= 0.0) {
    record_snapshot(snaps[snap_idx]);
    ++snap_idx;
  }

  for (;;) {
    double boundary = cfg.horizon;
    if (st.next_arrival < boundary) boundary = st.next_arrival;
    if (snap_idx < snaps.size() && snaps[snap_idx] < boundary)
      boundary = snaps[snap_idx];

    step_service(st, boundary - st.clock, &trace);

    if (boundary == st.next_arrival && st.next_arrival <= cfg.horizon) {
      const double requirement = params.service.sample(st.rng);
      const double before = st.total_remaining();
      Job j;
      j.id = next_id++;
      j.arrival_time = st.clock;
      j.requirement = requirement;
      j.attained = 0.0;
      j.remaining = requirement;
      j.initial = false;
      st.jobs.push_back(j);
      ++st.arrivals;
      trace.events.push_back({st.clock, EventKind::Arrival, j.id, requirement,
                              st.z(), before, st.total_remaining()});
      trace.series.push_back({st.clock, st.z(), st.total_remaining()});
      detail::log_departures(st, &trace);  // requirement at/below threshold
      st.next_arrival =
          st.next_arrival + params.arrival.sample_interarrival(st.rng);
    }

    if (snap_idx < snaps.size() && boundary == snaps[snap_idx]) {
      record_snapshot(snaps[snap_idx]);
      ++snap_idx;
    }

    if (boundary == cfg.horizon && st.clock >= cfg.horizon) break;
  }

  trace.series.push_back({cfg.horizon, st.z(), st.total_remaining()});
  trace.arrivals = st.arrivals;
  trace.departures = st.departures;
  trace.busy_time = st.busy_time;
  return trace;
}

// Scaled descriptor of system r at fluid time t: (1/r) mu(rt).
inline AtomicMeasure scaled_snapshot(const Trace& trace, double r, double t) {
  const double clock_time = r * t;
  if (clock_time > trace.horizon + 1e-9 * std::max(1.0, trace.horizon))
    throw std::invalid_argument("scaled_snapshot: time beyond trace horizon");
  for (const auto& s : trace.snapshots) {
    if (std::abs(s.time - clock_time) <= 1e-9 * std::max(1.0, clock_time)) {
      if (s.measure.empty()) return s.measure;
      return scale_mass(s.measure, 1.0 / r);
    }
  }
  throw std::invalid_argument("scaled_snapshot: no snapshot at requested time");
}

inline const SimSnapshot& snapshot_at(const Trace& trace, double clock_time) {
  for (const auto& s : trace.snapshots)
    if (std::abs(s.time - clock_time) <= 1e-9 * std::max(1.0, clock_time)) return s;
  throw std::invalid_argument("snapshot_at: no snapshot at requested time");
}

// Companion scaled accessors: E^r(t) = E(rt)/r and Z^r(t) = Z(rt)/r.
inline double scaled_arrivals(const Trace& trace, double r, double t) {
  return static_cast<double>(snapshot_at(trace, r * t).arrivals) / r;
}
inline double scaled_jobs(const Trace& trace, double r, double t) {
  return static_cast<double>(snapshot_at(trace, r * t).z) / r;
}

}  // namespace wps
