#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/fixtures.hpp"
#include "wps/fluid.hpp"

using namespace wps;

TEST_CASE("fluid_step moves a lone atom at unit speed") {
  const FluidConfig cfg{.dt = 0.01, .quadrature = 10, .prune_eps = 1e-9,
                        .delta_floor = 1e-6, .horizon = 1.0};
  const AtomicMeasure mu{{4.0, 1.0}};
  for (const WeightFunction& w :
       {WeightFunction::exp_saturation(1.0), WeightFunction::saturating()}) {
    const SystemParameters p = fixtures::no_arrivals(w);
    const AtomicMeasure out = fluid_step(mu, p, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out.atoms()[0].location == Catch::Approx(4.0 - cfg.dt).margin(1e-12));
    CHECK(out.atoms()[0].mass == 1.0);
  }
}

TEST_CASE("fluid_step drains workload at unit rate with no source") {
  const FluidConfig cfg{.dt = 0.02, .quadrature = 10, .prune_eps = 1e-12,
                        .delta_floor = 1e-9, .horizon = 1.0};
  const SystemParameters p =
      fixtures::no_arrivals(WeightFunction::truncated_linear(100.0));
  const AtomicMeasure mu{{2.0, 1.0}, {6.0, 1.0}, {0.5, 0.7}};
  const AtomicMeasure out = fluid_step(mu, p, cfg);
  CHECK(out.workload() == Catch::Approx(mu.workload() - cfg.dt).margin(1e-12));
}

TEST_CASE("fluid_step conserves workload at rho=1") {
  const FluidConfig cfg{.dt = 0.01, .quadrature = 64, .prune_eps = 1e-12,
                        .delta_floor = 1e-9, .horizon = 1.0};
  const SystemParameters p = fixtures::rho1_uniform();
  const AtomicMeasure mu{{2.0, 1.0}};
  const AtomicMeasure out = fluid_step(mu, p, cfg);
  CHECK(out.workload() == Catch::Approx(mu.workload()).margin(1e-12));
}

TEST_CASE("fluid_step discrete derivative matches the dynamics for class-C g") {
  const SystemParameters p = fixtures::rho1_uniform();
  const AtomicMeasure mu{{0.8, 0.6}, {2.0, 1.0}, {3.5, 0.4}};
  const WeightFunction& w = p.weight;
  const double denom = integrate(w, mu);
  for (const TestFunction& g : standard_test_panel()) {
    CAPTURE(g.name);
    const double target =
        -integrate([&](double x) { return g.derivative(x) * w(x); }, mu) / denom +
        p.arrival.rate() * p.service.expectation(g.evaluate);
    auto error_at = [&](double dt) {
      FluidConfig cfg{.dt = dt, .quadrature = 2000, .prune_eps = 1e-12,
                      .delta_floor = 1e-9, .horizon = 1.0};
      const AtomicMeasure out = fluid_step(mu, p, cfg);
      const double rate = (integrate(g.evaluate, out) - integrate(g.evaluate, mu)) / dt;
      return std::abs(rate - target);
    };
    const double e1 = error_at(0.08);
    const double e2 = error_at(0.04);
    const double e3 = error_at(0.02);
    CHECK(e2 <= 0.6 * e1 + 1e-9);
    CHECK(e3 <= 0.6 * e2 + 1e-9);
  }
}

TEST_CASE("fluid_step raises a floor violation with the time attached") {
  FluidConfig cfg{.dt = 0.01, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.5, .horizon = 1.0};
  const SystemParameters p = fixtures::no_arrivals(WeightFunction::exp_saturation(1.0));
  const AtomicMeasure thin{{0.1, 1.0}};  // <w, mu> ~ 0.095 < 0.5
  try {
    (void)fluid_step(thin, p, cfg, 3.25);
    FAIL("expected FloorViolation");
  } catch (const FloorViolation& fv) {
    CHECK(fv.time == 3.25);
    CHECK(fv.floor == 0.5);
    CHECK(fv.value < 0.5);
  }
}

TEST_CASE("solve_direct horizon zero returns the initial path") {
  FluidConfig cfg{.dt = 0.01, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.0, .horizon = 0.0};
  const auto res = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), cfg);
  REQUIRE(res.path.size() == 1);
  CHECK(res.path.measures[0] == fixtures::theta_single());
  CHECK_FALSE(res.hit_floor);
  const auto series = workload_series(res.path);
  REQUIRE(series.size() == 1);
  CHECK(series[0] == 2.0);
}

TEST_CASE("solve_direct marches a lone atom left until the floor trips") {
  FluidConfig cfg{.dt = 1e-3, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.2, .horizon = 10.0};
  const SystemParameters p = fixtures::no_arrivals(WeightFunction::exp_saturation(1.0));
  const auto res = solve_direct(AtomicMeasure{{5.0, 1.0}}, p, cfg);
  REQUIRE(res.hit_floor);
  // <w, mu> = 1 - exp(-x); floor 0.2 trips when x < -ln(0.8) ~ 0.2231; the
  // atom moves at unit speed from 5.
  const double expected_trip = 5.0 - (-std::log(0.8));
  CHECK(res.floor_time == Catch::Approx(expected_trip).margin(2e-3));
  for (std::size_t k = 0; k < res.path.size(); ++k) {
    REQUIRE(res.path.measures[k].size() == 1);
    const double t = res.path.time_at(k);
    CHECK(res.path.measures[k].atoms()[0].location ==
          Catch::Approx(5.0 - t).margin(1e-9));
  }
}

TEST_CASE("solve_direct workload series is constant at rho=1") {
  FluidConfig cfg{.dt = 1e-3, .quadrature = 100, .prune_eps = 1e-9,
                  .delta_floor = 0.0, .horizon = 1.0};
  const auto res = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), cfg);
  REQUIRE_FALSE(res.hit_floor);
  for (double wl : res.workload) CHECK(std::abs(wl - 2.0) <= 1e-9);
}

TEST_CASE("solve_direct workload drains at slope -1 without arrivals") {
  FluidConfig cfg{.dt = 1e-3, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.05, .horizon = 20.0};
  const SystemParameters p = fixtures::no_arrivals(WeightFunction::exp_saturation(1.0));
  const auto res = solve_direct(fixtures::theta_two(), p, cfg);
  REQUIRE(res.hit_floor);  // everything decays toward zero eventually
  REQUIRE(res.workload.size() > 100);
  for (std::size_t k = 1; k < res.workload.size(); ++k) {
    const double slope = (res.workload[k] - res.workload[k - 1]) / cfg.dt;
    CHECK(std::abs(slope + 1.0) <= 1e-9);
  }
}

TEST_CASE("solve_direct grid validation") {
  FluidConfig cfg{.dt = 0.3, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.0, .horizon = 1.0};
  CHECK_THROWS_AS(solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), cfg),
                  std::invalid_argument);
  FluidConfig cfg2{.dt = 0.1, .quadrature = 10, .prune_eps = 1e-9,
                   .delta_floor = 0.0, .horizon = 1.0, .merge_tol = 0.0,
                   .record_stride = 3};
  CHECK_THROWS_AS(solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), cfg2),
                  std::invalid_argument);
}

TEST_CASE("solve_direct record_stride keeps a coarser path but a full series") {
  FluidConfig fine{.dt = 0.01, .quadrature = 50, .prune_eps = 1e-9,
                   .delta_floor = 0.0, .horizon = 0.5};
  FluidConfig strided = fine;
  strided.record_stride = 5;
  const auto a = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), fine);
  const auto b = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), strided);
  REQUIRE(a.path.size() == 51);
  REQUIRE(b.path.size() == 11);
  CHECK(b.path.dt == Catch::Approx(0.05));
  CHECK(a.times.size() == b.times.size());  // series records every step
  for (std::size_t k = 0; k < b.path.size(); ++k)
    CHECK(bl_distance(b.path.measures[k], a.path.measures[5 * k]) == 0.0);
}

TEST_CASE("fluid masses stay nonnegative along the path") {
  FluidConfig cfg{.dt = 0.01, .quadrature = 30, .prune_eps = 1e-9,
                  .delta_floor = 0.0, .horizon = 2.0};
  const auto res = solve_direct(fixtures::theta_two(), fixtures::rho1_mm(), cfg);
  for (const auto& m : res.path.measures)
    for (const Atom& a : m.atoms()) {
      CHECK(a.mass >= 0.0);
      CHECK(a.location >= 0.0);
    }
}

TEST_CASE("source mass accounting with transport disabled") {
  FluidConfig cfg{.dt = 0.01, .quadrature = 25, .prune_eps = 1e-12,
                  .delta_floor = 0.0, .horizon = 1.0};
  cfg.transport_enabled = false;
  const SystemParameters p = fixtures::rho1_uniform();
  const auto res = solve_direct(fixtures::theta_single(), p, cfg);
  REQUIRE_FALSE(res.hit_floor);
  const double alpha = p.arrival.rate();
  for (std::size_t k = 0; k < res.path.size(); ++k) {
    const double expected = 1.0 + alpha * cfg.dt * static_cast<double>(k);
    CHECK(res.path.measures[k].total_mass() ==
          Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("merge_tol controls support growth without disturbing moments") {
  FluidConfig plain{.dt = 0.005, .quadrature = 100, .prune_eps = 1e-9,
                    .delta_floor = 0.0, .horizon = 1.0};
  FluidConfig merged = plain;
  merged.merge_tol = 1e-3;
  const auto a = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), plain);
  const auto b = solve_direct(fixtures::theta_single(), fixtures::rho1_uniform(), merged);
  const auto& ma = a.path.measures.back();
  const auto& mb = b.path.measures.back();
  CHECK(mb.size() < ma.size());
  CHECK(mb.total_mass() == Catch::Approx(ma.total_mass()).epsilon(1e-10));
  CHECK(mb.workload() == Catch::Approx(ma.workload()).epsilon(1e-8));
  CHECK(bl_distance(ma, mb) <= 5e-3);
}

TEST_CASE("workload_series shapes") {
  FluidConfig cfg{.dt = 0.01, .quadrature = 10, .prune_eps = 1e-9,
                  .delta_floor = 0.05, .horizon = 1.0};
  const SystemParameters p = fixtures::no_arrivals(WeightFunction::exp_saturation(1.0));
  const auto res = solve_direct(fixtures::theta_single(), p, cfg);
  const auto series = workload_series(res.path);
  for (std::size_t k = 0; k < series.size(); ++k)
    CHECK(series[k] == Catch::Approx(2.0 - res.path.time_at(k)).margin(1e-9));
}
