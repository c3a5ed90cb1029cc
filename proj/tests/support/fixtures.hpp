#pragma once

// Shared fixtures for unit and acceptance tests.

#include "wps/fluid.hpp"
#include "wps/model.hpp"

namespace fixtures {

// rho = 1 with an exact-workload source quadrature: the midpoint-quantile
// rule integrates the uniform quantile function exactly.
inline wps::SystemParameters rho1_uniform() {
  return {wps::ArrivalModel::poisson(1.0), wps::Distribution::uniform(0.0, 2.0),
          wps::WeightFunction::exp_saturation(1.0)};
}

// M/M-type heavy-traffic fixture.
inline wps::SystemParameters rho1_mm() {
  return {wps::ArrivalModel::poisson(1.0), wps::Distribution::exponential(1.0),
          wps::WeightFunction::exp_saturation(1.0)};
}

inline wps::SystemParameters no_arrivals(wps::WeightFunction w) {
  return {wps::ArrivalModel::none(), wps::Distribution::exponential(1.0),
          std::move(w)};
}

inline wps::AtomicMeasure theta_single() { return wps::AtomicMeasure{{2.0, 1.0}}; }

inline wps::AtomicMeasure theta_two() {
  return wps::AtomicMeasure{{1.0, 0.5}, {3.0, 0.5}};
}

}  // namespace fixtures
