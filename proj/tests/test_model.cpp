#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "wps/model.hpp"

using namespace wps;

TEST_CASE("validate_weight accepts the paper-compatible families") {
  const WeightValidation e = validate_weight(WeightFunction::exp_saturation(1.0), 20.0, 201);
  CHECK(e.passed);
  CHECK(e.sup_bound == 1.0);

  const WeightValidation s = validate_weight(WeightFunction::saturating(), 20.0, 201);
  CHECK(s.passed);
  CHECK(s.sup_bound == 1.0);

  const WeightValidation t =
      validate_weight(WeightFunction::truncated_linear(5.0), 20.0, 201);
  CHECK(t.passed);
  CHECK(t.sup_bound == 5.0);
  REQUIRE_FALSE(t.warnings.empty());  // weakly increasing tail flagged
}

TEST_CASE("validate_weight rejects the constant weight at x=0") {
  const WeightValidation c = validate_weight(WeightFunction::constant(1.0), 10.0, 101);
  CHECK_FALSE(c.passed);
  CHECK(c.failure.find("w(0)") != std::string::npos);
  CHECK_THROWS_AS(validate_weight(WeightFunction::constant(1.0), -1.0, 101),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_weight(WeightFunction::constant(1.0), 1.0, 1),
                  std::invalid_argument);
}

TEST_CASE("traffic intensity") {
  SystemParameters a{ArrivalModel::poisson(2.0), Distribution::exponential(0.5),
                     WeightFunction::exp_saturation(1.0)};
  CHECK(traffic_intensity(a) == Catch::Approx(1.0).epsilon(1e-15));

  SystemParameters b{ArrivalModel::poisson(1.0), Distribution::deterministic(0.9),
                     WeightFunction::exp_saturation(1.0)};
  CHECK(traffic_intensity(b) == Catch::Approx(0.9).epsilon(1e-15));

  SystemParameters c{ArrivalModel::poisson(0.5), Distribution::uniform(0.0, 2.0),
                     WeightFunction::exp_saturation(1.0)};
  CHECK(traffic_intensity(c) == Catch::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("quantile_atoms places midpoint quantiles") {
  const AtomicMeasure q2 = quantile_atoms(Distribution::exponential(1.0), 2);
  REQUIRE(q2.size() == 2);
  CHECK(q2.atoms()[0].location == Catch::Approx(std::log(4.0 / 3.0)).epsilon(1e-14));
  CHECK(q2.atoms()[1].location == Catch::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(q2.atoms()[0].mass == 0.5);
  CHECK(q2.atoms()[1].mass == 0.5);

  const AtomicMeasure qd = quantile_atoms(Distribution::deterministic(3.7), 5);
  REQUIRE(qd.size() == 1);  // compaction merges the coincident atoms
  CHECK(qd.atoms()[0].location == 3.7);
  CHECK(qd.total_mass() == Catch::Approx(1.0).epsilon(1e-15));

  const AtomicMeasure q1 = quantile_atoms(Distribution::exponential(1.0), 1);
  REQUIRE(q1.size() == 1);
  CHECK(q1.atoms()[0].location == Catch::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(q1.atoms()[0].mass == 1.0);

  CHECK_THROWS_AS(quantile_atoms(Distribution::exponential(1.0), 0),
                  std::invalid_argument);
}

TEST_CASE("quantile_atoms workload approaches the mean as n doubles") {
  for (const Distribution& d :
       {Distribution::exponential(1.3), Distribution::uniform(0.5, 2.5)}) {
    double prev_err = std::numeric_limits<double>::infinity();
    for (int n = 16; n <= 512; n *= 2) {
      const double err = std::abs(quantile_atoms(d, n).workload() - d.mean());
      CHECK(err <= prev_err + 1e-15);
      prev_err = err;
    }
    CHECK(prev_err < 5e-3);
  }
}

TEST_CASE("samplers are reproducible and hit their means") {
  for (const Distribution& d :
       {Distribution::exponential(2.0), Distribution::uniform(1.0, 3.0),
        Distribution::hyperexp(0.3, 0.5, 2.0), Distribution::deterministic(1.5)}) {
    std::mt19937_64 a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(d.sample(a) == d.sample(b));

    std::mt19937_64 rng(1234);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = d.sample(rng);
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sumsq / n - mean * mean, 0.0));
    CHECK(std::abs(mean - d.mean()) <= 5.0 * sd / std::sqrt(double(n)) + 1e-12);
  }
}

TEST_CASE("quantiles are nondecreasing") {
  std::mt19937_64 rng(5);
  const Distribution d = Distribution::hyperexp(0.25, 0.4, 3.0);
  for (int i = 0; i < 200; ++i) {
    double p1 = uniform01(rng) * 0.999;
    double p2 = uniform01(rng) * 0.999;
    if (p1 > p2) std::swap(p1, p2);
    CHECK(d.quantile(p1) <= d.quantile(p2) + 1e-12);
  }
  // Quantile inverts the CDF.
  for (double p : {0.1, 0.5, 0.9, 0.99})
    CHECK(d.cdf(d.quantile(p)) == Catch::Approx(p).margin(1e-10));
}

TEST_CASE("distribution expectations by quadrature") {
  CHECK(Distribution::exponential(1.0).expectation([](double x) { return x; }) ==
        Catch::Approx(1.0).epsilon(1e-10));
  CHECK(Distribution::uniform(0.0, 2.0).expectation([](double x) { return x * x; }) ==
        Catch::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(Distribution::deterministic(2.5).expectation([](double x) { return x * x; }) ==
        6.25);
  const Distribution h = Distribution::hyperexp(0.3, 0.5, 2.0);
  CHECK(h.expectation([](double x) { return x; }) ==
        Catch::Approx(h.mean()).epsilon(1e-10));
}

TEST_CASE("arrival model enforces the rate relation") {
  CHECK_THROWS_AS(ArrivalModel::renewal(1.0, Distribution::uniform(0.0, 3.0)),
                  std::invalid_argument);
  const ArrivalModel ok = ArrivalModel::renewal(0.5, Distribution::uniform(1.0, 3.0));
  CHECK(ok.rate() == 0.5);
  CHECK_FALSE(ArrivalModel::none().active());
}

TEST_CASE("equilibrium first intervals") {
  std::mt19937_64 rng(77);
  // Deterministic(2): stationary excess is uniform on (0, 2).
  const ArrivalModel det =
      ArrivalModel::renewal(0.5, Distribution::deterministic(2.0));
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 2000; ++i) {
    const double u = det.sample_first(rng);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    CHECK(u >= 0.0);
    CHECK(u <= 2.0);
  }
  CHECK(lo < 0.1);
  CHECK(hi > 1.9);
  CHECK(det.sample_interarrival(rng) == 2.0);

  // Exponential: memoryless, the first interval has the ordinary law; check
  // the mean statistically.
  const ArrivalModel exp_arrivals = ArrivalModel::poisson(2.0);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += exp_arrivals.sample_first(rng);
  CHECK(sum / n == Catch::Approx(0.5).margin(0.01));

  // Uniform(1,3): stationary-excess mean is E[U^2]/(2 E[U]) = 13/12.
  const ArrivalModel uni = ArrivalModel::renewal(0.5, Distribution::uniform(1.0, 3.0));
  sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = uni.sample_first(rng);
    CHECK(u >= 0.0);
    CHECK(u <= 3.0);
    sum += u;
  }
  CHECK(sum / n == Catch::Approx(13.0 / 12.0).margin(0.01));

  // Hyperexp: stationary-excess mean is E[U^2]/(2 E[U]).
  const Distribution hd = Distribution::hyperexp(0.3, 0.5, 2.0);
  const ArrivalModel hyp = ArrivalModel::renewal(1.0 / hd.mean(), hd);
  const double second_moment =
      hd.expectation([](double x) { return x * x; });
  sum = 0.0;
  for (int i = 0; i < n; ++i) sum += hyp.sample_first(rng);
  CHECK(sum / n == Catch::Approx(second_moment / (2.0 * hd.mean())).margin(0.02));

  // Ordinary mode uses the plain inter-arrival law.
  const ArrivalModel ord = ArrivalModel::renewal(
      0.5, Distribution::deterministic(2.0), FirstInterval::Ordinary);
  CHECK(ord.sample_first(rng) == 2.0);
}

TEST_CASE("scaled_to_rate preserves the family and fixes the mean") {
  const ArrivalModel base = ArrivalModel::renewal(1.0, Distribution::uniform(0.5, 1.5));
  const ArrivalModel scaled = base.scaled_to_rate(0.8);
  CHECK(scaled.rate() == 0.8);
  CHECK(scaled.inter_arrival().mean() == Catch::Approx(1.25).epsilon(1e-12));
  CHECK(scaled.inter_arrival().family() == DistFamily::Uniform);
}

TEST_CASE("standard test panel lies in the admissible class") {
  for (const TestFunction& g : standard_test_panel()) {
    CAPTURE(g.name);
    CHECK(in_class_c(g));
  }
  TestFunction bad{"x", [](double x) { return x; }, [](double) { return 1.0; },
                   1e9, 1.0};
  CHECK_FALSE(in_class_c(bad));  // g'(0) != 0
}
