#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wps/measure.hpp"
#include "wps/numerics.hpp"

namespace wps {

// ---------------------------------------------------------------------------
// Weight functions. The sharing rule requires w(0) = 0, w'(x) > 0 and w
// bounded; validate_weight checks those assumptions on a grid.
// ---------------------------------------------------------------------------

enum class WeightFamily { Saturating, ExpSaturation, TruncatedLinear, Constant };

class WeightFunction {
 public:
  static WeightFunction saturating() {
    return WeightFunction(WeightFamily::Saturating, 1.0, 0.0, "saturating");
  }
  static WeightFunction exp_saturation(double beta) {
    if (!(beta > 0.0))
      throw std::invalid_argument("exp_saturation: beta must be > 0");
    return WeightFunction(WeightFamily::ExpSaturation, beta, 0.0, "expsat");
  }
  // min(x, cap): only weakly increasing beyond the cap; admitted as a test
  // fixture for closed-form oracles, with the weak region reported by
  // validate_weight.
  static WeightFunction truncated_linear(double cap) {
    if (!(cap > 0.0))
      throw std::invalid_argument("truncated_linear: cap must be > 0");
    return WeightFunction(WeightFamily::TruncatedLinear, cap, 0.0, "trunclinear");
  }
  // Classic unweighted PS; violates w(0) = 0 and exists so that validation
  // failures can be exercised end to end.
  static WeightFunction constant(double level = 1.0) {
    if (!(level > 0.0))
      throw std::invalid_argument("constant: level must be > 0");
    return WeightFunction(WeightFamily::Constant, level, 0.0, "constant");
  }

  double operator()(double x) const {
    switch (family_) {
      case WeightFamily::Saturating: return x / (1.0 + x);
      case WeightFamily::ExpSaturation: return -std::expm1(-p0_ * x);
      case WeightFamily::TruncatedLinear: return std::min(x, p0_);
      case WeightFamily::Constant: return p0_;
    }
    return 0.0;
  }

  double derivative(double x) const {
    switch (family_) {
      case WeightFamily::Saturating: return 1.0 / ((1.0 + x) * (1.0 + x));
      case WeightFamily::ExpSaturation: return p0_ * std::exp(-p0_ * x);
      case WeightFamily::TruncatedLinear: return x < p0_ ? 1.0 : 0.0;
      case WeightFamily::Constant: return 0.0;
    }
    return 0.0;
  }

  double sup_bound() const {
    switch (family_) {
      case WeightFamily::Saturating: return 1.0;
      case WeightFamily::ExpSaturation: return 1.0;
      case WeightFamily::TruncatedLinear: return p0_;
      case WeightFamily::Constant: return p0_;
    }
    return 0.0;
  }

  std::optional<double> weakly_increasing_beyond() const {
    if (family_ == WeightFamily::TruncatedLinear) return p0_;
    return std::nullopt;
  }

  WeightFamily family() const { return family_; }
  double param() const { return p0_; }
  const std::string& name() const { return name_; }

 private:
  WeightFunction(WeightFamily f, double p0, double p1, std::string name)
      : family_(f), p0_(p0), p1_(p1), name_(std::move(name)) {}

  WeightFamily family_;
  double p0_;
  double p1_;
  std::string name_;
};

struct WeightValidation {
  bool passed{false};
  double sup_bound{0.0};
  double min_derivative{0.0};   // over the strictly-increasing part of the grid
  double max_value{0.0};
  std::vector<std::string> warnings;
  std::string failure;  // empty when passed
};

inline WeightValidation validate_weight(const WeightFunction& w, double grid_max,
                                        int n_points) {
  if (!(grid_max > 0.0) || n_points < 2)
    throw std::invalid_argument("validate_weight: need grid_max > 0 and n_points >= 2");
  WeightValidation rep;
  rep.sup_bound = w.sup_bound();
  const double at_zero = w(0.0);
  if (at_zero != 0.0) {
    std::ostringstream os;
    os << "weight '" << w.name() << "' fails w(0)=0: w(0)=" << at_zero;
    rep.failure = os.str();
    return rep;
  }
  const std::optional<double> weak_from = w.weakly_increasing_beyond();
  rep.min_derivative = std::numeric_limits<double>::infinity();
  bool weak_noted = false;
  for (int i = 0; i < n_points; ++i) {
    const double x = grid_max * static_cast<double>(i) / (n_points - 1);
    const double wx = w(x);
    const double dwx = w.derivative(x);
    rep.max_value = std::max(rep.max_value, wx);
    if (wx < 0.0 || wx > rep.sup_bound + 1e-12) {
      std::ostringstream os;
      os << "weight '" << w.name() << "' leaves [0, sup] at x=" << x << ": w=" << wx;
      rep.failure = os.str();
      return rep;
    }
    if (weak_from && x >= *weak_from) {
      if (!weak_noted) {
        std::ostringstream os;
        os << "derivative vanishes for x >= " << *weak_from
           << " (weakly increasing tail; fixture only)";
        rep.warnings.push_back(os.str());
        weak_noted = true;
      }
      continue;
    }
    if (!(dwx > 0.0)) {
      std::ostringstream os;
      os << "weight '" << w.name() << "' fails w'(x)>0 at x=" << x << ": w'=" << dwx;
      rep.failure = os.str();
      return rep;
    }
    rep.min_derivative = std::min(rep.min_derivative, dwx);
  }
  rep.passed = true;
  return rep;
}

// ---------------------------------------------------------------------------
// Service-requirement / inter-arrival distributions. Sampling is inverse-CDF
// throughout, so one engine draw yields one variate and seeded streams are
// reproducible across platforms.
// ---------------------------------------------------------------------------

enum class DistFamily { Exponential, Deterministic, Uniform, HyperExp2 };

class Distribution {
 public:
  static Distribution exponential(double mean) {
    require_positive(mean, "exponential mean");
    return Distribution(DistFamily::Exponential, {mean});
  }
  static Distribution deterministic(double value) {
    require_positive(value, "deterministic value");
    return Distribution(DistFamily::Deterministic, {value});
  }
  static Distribution uniform(double a, double b) {
    if (!(a >= 0.0) || !(b > a))
      throw std::invalid_argument("uniform: need 0 <= a < b");
    return Distribution(DistFamily::Uniform, {a, b});
  }
  static Distribution hyperexp(double p, double mean1, double mean2) {
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("hyperexp: need p in (0,1)");
    require_positive(mean1, "hyperexp mean1");
    require_positive(mean2, "hyperexp mean2");
    return Distribution(DistFamily::HyperExp2, {p, mean1, mean2});
  }

  DistFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }

  double mean() const {
    switch (family_) {
      case DistFamily::Exponential: return params_[0];
      case DistFamily::Deterministic: return params_[0];
      case DistFamily::Uniform: return 0.5 * (params_[0] + params_[1]);
      case DistFamily::HyperExp2:
        return params_[0] * params_[1] + (1.0 - params_[0]) * params_[2];
    }
    return 0.0;
  }

  double cdf(double x) const {
    if (x < 0.0) return 0.0;
    switch (family_) {
      case DistFamily::Exponential: return -std::expm1(-x / params_[0]);
      case DistFamily::Deterministic: return x >= params_[0] ? 1.0 : 0.0;
      case DistFamily::Uniform: {
        const double a = params_[0], b = params_[1];
        if (x <= a) return 0.0;
        if (x >= b) return 1.0;
        return (x - a) / (b - a);
      }
      case DistFamily::HyperExp2:
        return params_[0] * -std::expm1(-x / params_[1]) +
               (1.0 - params_[0]) * -std::expm1(-x / params_[2]);
    }
    return 0.0;
  }

  // Nondecreasing inverse CDF for p in [0, 1).
  double quantile(double p) const {
    if (!(p >= 0.0 && p < 1.0))
      throw std::invalid_argument("quantile: p must lie in [0,1)");
    switch (family_) {
      case DistFamily::Exponential: return -params_[0] * std::log1p(-p);
      case DistFamily::Deterministic: return params_[0];
      case DistFamily::Uniform: return params_[0] + (params_[1] - params_[0]) * p;
      case DistFamily::HyperExp2: {
        // Monotone CDF; bracket then bisect.
        double hi = std::max(params_[1], params_[2]);
        while (cdf(hi) < p) hi *= 2.0;
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
          const double mid = 0.5 * (lo + hi);
          (cdf(mid) < p ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
      }
    }
    return 0.0;
  }

  double sample(std::mt19937_64& rng) const { return quantile(uniform01(rng)); }

  // E[g(X)] by quadrature (exact for the deterministic family).
  double expectation(const std::function<double(double)>& g) const {
    switch (family_) {
      case DistFamily::Deterministic: return g(params_[0]);
      case DistFamily::Uniform: {
        const double a = params_[0], b = params_[1];
        return adaptive_simpson([&](double x) { return g(x); }, a, b) / (b - a);
      }
      case DistFamily::Exponential: {
        const double m = params_[0];
        const double cut = 46.0 * m;
        return adaptive_simpson(
            [&](double x) { return g(x) * std::exp(-x / m) / m; }, 0.0, cut);
      }
      case DistFamily::HyperExp2: {
        const double p = params_[0], m1 = params_[1], m2 = params_[2];
        const double cut = 46.0 * std::max(m1, m2);
        return adaptive_simpson(
            [&](double x) {
              return g(x) * (p * std::exp(-x / m1) / m1 +
                             (1.0 - p) * std::exp(-x / m2) / m2);
            },
            0.0, cut);
      }
    }
    return 0.0;
  }

 private:
  Distribution(DistFamily f, std::vector<double> params)
      : family_(f), params_(std::move(params)) {}

  static void require_positive(double v, const char* what) {
    if (!(v > 0.0)) {
      throw std::invalid_argument(std::string(what) + " must be > 0");
    }
  }

  DistFamily family_;
  std::vector<double> params_;
};

using ServiceDistribution = Distribution;

// ---------------------------------------------------------------------------
// Delayed renewal arrivals: ordinary inter-arrival law plus a separate first
// (residual) interval. Default first interval is the stationary-excess law,
// which is analytic for every supported family.
// ---------------------------------------------------------------------------

enum class FirstInterval { Equilibrium, Ordinary };

class ArrivalModel {
 public:
  static ArrivalModel none() { return ArrivalModel(); }

  static ArrivalModel poisson(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("poisson: rate must be > 0");
    return ArrivalModel(rate, Distribution::exponential(1.0 / rate),
                        FirstInterval::Equilibrium);
  }

  static ArrivalModel renewal(double rate, Distribution inter_arrival,
                              FirstInterval first = FirstInterval::Equilibrium) {
    if (!(rate > 0.0)) throw std::invalid_argument("renewal: rate must be > 0");
    const double m = inter_arrival.mean();
    if (std::abs(m - 1.0 / rate) > 1e-9 * std::max(1.0, 1.0 / rate))
      throw std::invalid_argument(
          "renewal: inter-arrival mean must equal 1/rate");
    return ArrivalModel(rate, std::move(inter_arrival), first);
  }

  double rate() const { return rate_; }
  bool active() const { return rate_ > 0.0; }
  const Distribution& inter_arrival() const {
    if (!inter_) throw std::logic_error("ArrivalModel: no inter-arrival law");
    return *inter_;
  }
  FirstInterval first_interval_mode() const { return first_; }

  double sample_interarrival(std::mt19937_64& rng) const {
    return inter_arrival().sample(rng);
  }

  double sample_first(std::mt19937_64& rng) const {
    if (first_ == FirstInterval::Ordinary) return sample_interarrival(rng);
    const Distribution& d = inter_arrival();
    const double u = uniform01(rng);
    switch (d.family()) {
      case DistFamily::Exponential:
        // Memoryless: the stationary excess is the same exponential.
        return d.quantile(u);
      case DistFamily::Deterministic:
        return u * d.params()[0];
      case DistFamily::Uniform: {
        const double a = d.params()[0], b = d.params()[1];
        const double mean = 0.5 * (a + b);
        const double s = u * mean;  // target of integral of (1 - F)
        if (s <= a) return s;
        const double c = b - a;
        const double arg = std::max(0.0, 1.0 - 2.0 * (s - a) / c);
        return a + c * (1.0 - std::sqrt(arg));
      }
      case DistFamily::HyperExp2: {
        // Stationary excess of a mixture of exponentials is the mixture
        // reweighted by phase means.
        const double p = d.params()[0], m1 = d.params()[1], m2 = d.params()[2];
        const double q1 = p * m1 / d.mean();
        const double m = (u < q1) ? m1 : m2;
        return -m * std::log1p(-uniform01(rng));
      }
    }
    return sample_interarrival(rng);
  }

  // Same family rescaled to a new rate (used for heavy-traffic perturbations).
  ArrivalModel scaled_to_rate(double new_rate) const {
    if (!active()) return none();
    if (!(new_rate > 0.0))
      throw std::invalid_argument("scaled_to_rate: rate must be > 0");
    const double k = rate_ / new_rate;  // multiply interval lengths by k
    const Distribution& d = *inter_;
    Distribution scaled = [&] {
      switch (d.family()) {
        case DistFamily::Exponential:
          return Distribution::exponential(d.params()[0] * k);
        case DistFamily::Deterministic:
          return Distribution::deterministic(d.params()[0] * k);
        case DistFamily::Uniform:
          return Distribution::uniform(d.params()[0] * k, d.params()[1] * k);
        case DistFamily::HyperExp2:
          return Distribution::hyperexp(d.params()[0], d.params()[1] * k,
                                        d.params()[2] * k);
      }
      return Distribution::exponential(d.params()[0] * k);
    }();
    return ArrivalModel(new_rate, std::move(scaled), first_);
  }

 private:
  ArrivalModel() = default;
  ArrivalModel(double rate, Distribution inter, FirstInterval first)
      : rate_(rate), inter_(std::move(inter)), first_(first) {}

  double rate_{0.0};
  std::optional<Distribution> inter_;
  FirstInterval first_{FirstInterval::Equilibrium};
};

// ---------------------------------------------------------------------------

struct SystemParameters {
  ArrivalModel arrival{ArrivalModel::none()};
  ServiceDistribution service{ServiceDistribution::exponential(1.0)};
  WeightFunction weight{WeightFunction::exp_saturation(1.0)};
};

// rho = alpha * <chi, nu>.
inline double traffic_intensity(const SystemParameters& p) {
  return p.arrival.rate() * p.service.mean();
}

// Deterministic n-point quadrature of nu: mass 1/n at the midpoint quantiles
// F^{-1}((j - 1/2)/n). Feeds the fluid source term.
inline AtomicMeasure quantile_atoms(const ServiceDistribution& nu, int n) {
  if (n < 1) throw std::invalid_argument("quantile_atoms: n must be >= 1");
  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(n));
  const double mass = 1.0 / static_cast<double>(n);
  for (int j = 1; j <= n; ++j) {
    const double p = (static_cast<double>(j) - 0.5) / static_cast<double>(n);
    atoms.push_back({nu.quantile(p), mass});
  }
  return AtomicMeasure(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Test functions for the fluid dynamics: bounded C^1 with g(0) = g'(0) = 0.
// ---------------------------------------------------------------------------

struct TestFunction {
  std::string name;
  std::function<double(double)> evaluate;
  std::function<double(double)> derivative;
  double sup_bound{0.0};
  double derivative_sup_bound{0.0};

  double operator()(double x) const { return evaluate(x); }
};

inline bool in_class_c(const TestFunction& g, double grid_max = 50.0,
                       int n_points = 2001) {
  if (g.evaluate(0.0) != 0.0 || g.derivative(0.0) != 0.0) return false;
  for (int i = 0; i < n_points; ++i) {
    const double x = grid_max * static_cast<double>(i) / (n_points - 1);
    if (std::abs(g.evaluate(x)) > g.sup_bound + 1e-9) return false;
    if (std::abs(g.derivative(x)) > g.derivative_sup_bound + 1e-9) return false;
  }
  return true;
}

inline std::vector<TestFunction> standard_test_panel() {
  std::vector<TestFunction> panel;
  panel.push_back({"1-exp(-x^2)",
                   [](double x) { return -std::expm1(-x * x); },
                   [](double x) { return 2.0 * x * std::exp(-x * x); },
                   1.0, 2.0 * std::exp(-0.5) / std::sqrt(2.0)});
  panel.push_back({"x^2/(1+x^2)",
                   [](double x) { return x * x / (1.0 + x * x); },
                   [](double x) {
                     const double d = 1.0 + x * x;
                     return 2.0 * x / (d * d);
                   },
                   1.0, 0.6495190528383290});
  panel.push_back({"(1-exp(-x))^2",
                   [](double x) {
                     const double e = -std::expm1(-x);
                     return e * e;
                   },
                   [](double x) {
                     return 2.0 * -std::expm1(-x) * std::exp(-x);
                   },
                   1.0, 0.5});
  return panel;
}

}  // namespace wps
