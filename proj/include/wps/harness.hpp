#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wps/fluid.hpp"
#include "wps/io.hpp"
#include "wps/measure.hpp"
#include "wps/model.hpp"
#include "wps/numerics.hpp"
#include "wps/simulator.hpp"

namespace wps {

// Deterministic 64-bit stream id for (master, r, replication); distinct
// triples give unrelated streams.
inline std::uint64_t seed_for(std::uint64_t master, std::uint64_t r,
                              std::uint64_t replication) {
  return mix64(mix64(master, r), replication);
}

enum class InitMode { Sampled, Quantile };

// Initial jobs realizing the Theta-convergence of scaled initial measures:
// round(r * <1,Theta>) jobs with requirements drawn i.i.d. from Theta
// normalized, or placed at its quantiles in the deterministic mode.
inline std::vector<Job> initial_jobs_from_theta(const AtomicMeasure& theta,
                                                std::int64_t r, std::uint64_t seed,
                                                InitMode mode = InitMode::Sampled) {
  if (theta.empty() || !(theta.total_mass() > 0.0))
    throw std::invalid_argument("initial_jobs_from_theta: theta must carry mass");
  if (r < 1) throw std::invalid_argument("initial_jobs_from_theta: r must be >= 1");
  const double mass = theta.total_mass();
  const std::int64_t n =
      std::llround(static_cast<double>(r) * mass);
  std::vector<double> cumulative;
  cumulative.reserve(theta.size());
  double acc = 0.0;
  for (const Atom& a : theta.atoms()) {
    acc += a.mass / mass;
    cumulative.push_back(acc);
  }
  cumulative.back() = 1.0;

  auto quantile = [&](double p) {
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), p);
    const std::size_t idx =
        std::min(static_cast<std::size_t>(it - cumulative.begin()),
                 theta.size() - 1);
    return theta.atoms()[idx].location;
  };

  std::mt19937_64 rng(seed);
  std::vector<Job> jobs;
  jobs.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = mode == InitMode::Sampled
                         ? uniform01(rng)
                         : (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    Job j;
    j.requirement = quantile(p);
    j.remaining = j.requirement;
    jobs.push_back(j);
  }
  return jobs;
}

struct ScalingExperiment {
  std::vector<std::int64_t> r_values;
  int replications{1};
  std::uint64_t master_seed{0};
  std::vector<double> checkpoints;
  SystemParameters params;
  AtomicMeasure theta;
  FluidConfig fluid;
  SimConfig sim;  // horizon/snapshots/seed are overwritten per cell
  InitMode init_mode{InitMode::Sampled};
  double perturbation{0.0};  // alpha^r = alpha * (1 - c/r)
  bool require_heavy_traffic{true};
  int threads{1};
};

struct ReportCell {
  std::int64_t r{0};
  int replication{0};
  double checkpoint{0.0};
  double bl{0.0};
  double workload_err{0.0};
  double z_err{0.0};
  bool ok{false};
  std::string error;
};

struct MedianRow {
  std::int64_t r{0};
  double checkpoint{0.0};
  double bl{0.0};
  double workload_err{0.0};
  double z_err{0.0};
  int completed{0};
};

struct ConvergenceReport {
  std::vector<ReportCell> cells;    // ordered by (r, replication, checkpoint)
  std::vector<MedianRow> medians;   // ordered by (checkpoint, r)
  bool median_bl_nonincreasing{false};
  std::uint64_t master_seed{0};

  std::string csv() const {
    Table t;
    t.columns = {"r",           "replication",      "checkpoint",
                 "bl_distance", "workload_abs_err", "z_abs_err"};
    for (const auto& c : cells) {
      if (!c.ok) continue;
      t.rows.push_back({c.r, static_cast<std::int64_t>(c.replication),
                        c.checkpoint, c.bl, c.workload_err, c.z_err});
    }
    return t.to_csv();
  }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline void validate_experiment(const ScalingExperiment& exp) {
  if (exp.r_values.empty())
    throw std::invalid_argument("scaling: need at least one r value");
  for (std::size_t i = 0; i < exp.r_values.size(); ++i) {
    if (exp.r_values[i] < 1)
      throw std::invalid_argument("scaling: r values must be >= 1");
    if (i > 0 && exp.r_values[i] <= exp.r_values[i - 1])
      throw std::invalid_argument("scaling: r values must be strictly increasing");
  }
  if (exp.replications < 1)
    throw std::invalid_argument("scaling: replications must be >= 1");
  if (exp.checkpoints.empty())
    throw std::invalid_argument("scaling: need at least one checkpoint");
  for (double c : exp.checkpoints)
    if (!(c >= 0.0))
      throw std::invalid_argument("scaling: checkpoints must be >= 0");
  if (exp.require_heavy_traffic) {
    const double rho = traffic_intensity(exp.params);
    if (std::abs(rho - 1.0) > 1e-12)
      throw std::invalid_argument(
          "scaling: traffic intensity must equal 1 (got rho=" +
          std::to_string(rho) + "); set require_heavy_traffic=false to override");
  }
  const double path_dt =
      exp.fluid.dt * static_cast<double>(exp.fluid.record_stride);
  for (double c : exp.checkpoints) {
    const double k = c / path_dt;
    if (std::abs(k - std::round(k)) > 1e-9)
      throw std::invalid_argument(
          "scaling: fluid grid must hit every checkpoint exactly");
  }
}

// Runs the grid of (r, replication) simulations, compares scaled snapshots
// against the fluid path at each checkpoint, and reports per-cell distances
// with per-r medians. Cells are keyed, so any execution order (or thread
// count) assembles the same report.
inline ConvergenceReport run_scaling(const ScalingExperiment& exp) {
  validate_experiment(exp);
  const double max_checkpoint =
      *std::max_element(exp.checkpoints.begin(), exp.checkpoints.end());

  FluidConfig fl = exp.fluid;
  fl.horizon = max_checkpoint;
  FluidSolveResult fluid = solve_direct(exp.theta, exp.params, fl);
  if (fluid.hit_floor)
    throw FloorViolation(fluid.floor_time, 0.0,
                         resolved_floor(fl, exp.params.weight, exp.theta));

  const double path_dt = fluid.path.dt;
  std::vector<const AtomicMeasure*> fluid_at;
  std::vector<double> fluid_workload, fluid_mass;
  for (double c : exp.checkpoints) {
    const std::size_t k = static_cast<std::size_t>(std::llround(c / path_dt));
    const AtomicMeasure& m = fluid.path.measures.at(k);
    fluid_at.push_back(&m);
    fluid_workload.push_back(m.workload());
    fluid_mass.push_back(m.total_mass());
  }

  ConvergenceReport report;
  report.master_seed = exp.master_seed;
  const std::size_t n_r = exp.r_values.size();
  const std::size_t n_rep = static_cast<std::size_t>(exp.replications);
  const std::size_t n_cp = exp.checkpoints.size();
  report.cells.resize(n_r * n_rep * n_cp);

  auto run_cell = [&](std::size_t ri, std::size_t rep) {
    const std::int64_t r = exp.r_values[ri];
    const std::uint64_t cell_seed =
        seed_for(exp.master_seed, static_cast<std::uint64_t>(r), rep);
    const std::size_t base = (ri * n_rep + rep) * n_cp;
    try {
      SystemParameters params = exp.params;
      if (exp.perturbation != 0.0 && exp.params.arrival.active()) {
        const double alpha = exp.params.arrival.rate();
        const double alpha_r =
            alpha * (1.0 - exp.perturbation / static_cast<double>(r));
        params.arrival = exp.params.arrival.scaled_to_rate(alpha_r);
      }
      std::vector<Job> jobs = initial_jobs_from_theta(
          exp.theta, r, mix64(cell_seed, 1), exp.init_mode);
      SimConfig sim = exp.sim;
      sim.seed = mix64(cell_seed, 2);
      sim.horizon = static_cast<double>(r) * max_checkpoint;
      sim.snapshot_times.clear();
      for (double c : exp.checkpoints)
        sim.snapshot_times.push_back(static_cast<double>(r) * c);
      Trace trace;
      if (sim.horizon > 0.0) {
        trace = run(params, jobs, sim);
      } else {
        // All checkpoints at time zero: snapshot the initial state directly.
        SimulationState st;
        st.cfg = sim;
        st.weight = params.weight;
        st.jobs = jobs;
        trace.horizon = 0.0;
        trace.initial_jobs = st.z();
        trace.snapshots.push_back(
            {0.0, snapshot_measure(st), st.z(), 0, st.total_remaining(), 0.0});
      }
      for (std::size_t ci = 0; ci < n_cp; ++ci) {
        ReportCell& cell = report.cells[base + ci];
        cell.r = r;
        cell.replication = static_cast<int>(rep);
        cell.checkpoint = exp.checkpoints[ci];
        const AtomicMeasure scaled =
            scaled_snapshot(trace, static_cast<double>(r), exp.checkpoints[ci]);
        cell.bl = bl_distance(scaled, *fluid_at[ci]);
        cell.workload_err = std::abs(scaled.workload() - fluid_workload[ci]);
        cell.z_err = std::abs(scaled.total_mass() - fluid_mass[ci]);
        cell.ok = true;
      }
    } catch (const std::exception& e) {
      for (std::size_t ci = 0; ci < n_cp; ++ci) {
        ReportCell& cell = report.cells[base + ci];
        cell.r = r;
        cell.replication = static_cast<int>(rep);
        cell.checkpoint = exp.checkpoints[ci];
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };

  const int threads = std::max(1, exp.threads);
  if (threads == 1) {
    for (std::size_t ri = 0; ri < n_r; ++ri)
      for (std::size_t rep = 0; rep < n_rep; ++rep) run_cell(ri, rep);
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t ri = 0; ri < n_r; ++ri)
      for (std::size_t rep = 0; rep < n_rep; ++rep) tasks.emplace_back(ri, rep);
    std::atomic<std::size_t> cursor{0};
    std::vector<std::future<void>> pool;
    for (int t = 0; t < threads; ++t) {
      pool.push_back(std::async(std::launch::async, [&] {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= tasks.size()) return;
          run_cell(tasks[i].first, tasks[i].second);
        }
      }));
    }
    for (auto& f : pool) f.get();
  }

  for (std::size_t ci = 0; ci < n_cp; ++ci) {
    for (std::size_t ri = 0; ri < n_r; ++ri) {
      std::vector<double> bl, wl, zd;
      for (std::size_t rep = 0; rep < n_rep; ++rep) {
        const ReportCell& cell = report.cells[(ri * n_rep + rep) * n_cp + ci];
        if (!cell.ok) continue;
        bl.push_back(cell.bl);
        wl.push_back(cell.workload_err);
        zd.push_back(cell.z_err);
      }
      MedianRow row;
      row.r = exp.r_values[ri];
      row.checkpoint = exp.checkpoints[ci];
      row.completed = static_cast<int>(bl.size());
      row.bl = detail::median_of(bl);
      row.workload_err = detail::median_of(wl);
      row.z_err = detail::median_of(zd);
      report.medians.push_back(row);
    }
  }

  report.median_bl_nonincreasing = true;
  for (std::size_t ci = 0; ci < n_cp; ++ci) {
    for (std::size_t ri = 1; ri < n_r; ++ri) {
      const MedianRow& prev = report.medians[ci * n_r + ri - 1];
      const MedianRow& cur = report.medians[ci * n_r + ri];
      if (!(cur.bl <= prev.bl)) report.median_bl_nonincreasing = false;
    }
  }
  return report;
}

}  // namespace wps
