#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wps {

struct Atom {
  double location{0.0};
  double mass{0.0};
};

inline bool operator==(const Atom& a, const Atom& b) {
  return a.location == b.location && a.mass == b.mass;
}

// Finite nonnegative measure on [0, inf) represented as weighted atoms.
// Atoms are kept sorted by location and compacted: locations closer than
// the compaction tolerance are merged (masses summed, location mass-averaged).
class AtomicMeasure {
 public:
  static constexpr double kCompactionTol = 1e-12;

  AtomicMeasure() = default;
  AtomicMeasure(std::initializer_list<Atom> atoms) : atoms_(atoms) { normalize(); }
  explicit AtomicMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) { normalize(); }

  void add(double location, double mass) {
    atoms_.push_back({location, mass});
    normalize();
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double total_mass() const {
    double s = 0.0;
    for (const Atom& a : atoms_) s += a.mass;
    return s;
  }

  // <chi, mu> with chi(x) = x.
  double workload() const {
    double s = 0.0;
    for (const Atom& a : atoms_) s += a.mass * a.location;
    return s;
  }

  bool operator==(const AtomicMeasure& o) const { return atoms_ == o.atoms_; }

 private:
  std::vector<Atom> atoms_;

  void normalize() {
    for (const Atom& a : atoms_) {
      if (!std::isfinite(a.location) || !std::isfinite(a.mass))
        throw std::invalid_argument("AtomicMeasure: atom with non-finite entry");
      if (a.location < 0.0)
        throw std::invalid_argument("AtomicMeasure: negative atom location");
      if (a.mass < 0.0)
        throw std::invalid_argument("AtomicMeasure: negative atom mass");
    }
    std::sort(atoms_.begin(), atoms_.end(),
              [](const Atom& a, const Atom& b) { return a.location < b.location; });
    std::vector<Atom> merged;
    merged.reserve(atoms_.size());
    for (const Atom& a : atoms_) {
      if (!merged.empty() && a.location - merged.back().location <= kCompactionTol) {
        Atom& m = merged.back();
        const double total = m.mass + a.mass;
        if (total > 0.0 && a.location != m.location)
          m.location = (m.location * m.mass + a.location * a.mass) / total;
        m.mass = total;
      } else {
        merged.push_back(a);
      }
    }
    atoms_ = std::move(merged);
  }
};

// Pairing <g, mu> = sum m_i g(x_i); exact for atomic measures.
template <class G>
double integrate(G&& g, const AtomicMeasure& mu) {
  double s = 0.0;
  for (const Atom& a : mu.atoms()) s += a.mass * g(a.location);
  return s;
}

inline double total_mass(const AtomicMeasure& mu) { return mu.total_mass(); }
inline double workload(const AtomicMeasure& mu) { return mu.workload(); }

inline AtomicMeasure scale_mass(const AtomicMeasure& mu, double factor) {
  if (!(factor > 0.0))
    throw std::invalid_argument("scale_mass: factor must be positive");
  std::vector<Atom> atoms = mu.atoms();
  for (Atom& a : atoms) a.mass *= factor;
  return AtomicMeasure(std::move(atoms));
}

// Drops atoms at or below eps (the numerical 1_{(0,inf)} indicator) and
// exact zero-mass atoms. Never moves surviving atoms.
inline AtomicMeasure prune(const AtomicMeasure& mu, double eps) {
  if (eps < 0.0) throw std::invalid_argument("prune: eps must be >= 0");
  std::vector<Atom> kept;
  kept.reserve(mu.size());
  for (const Atom& a : mu.atoms()) {
    if (a.location > eps && a.mass > 0.0) kept.push_back(a);
  }
  return AtomicMeasure(std::move(kept));
}

// Merges runs of atoms spanning at most tol in location into single atoms at
// their center of mass. Preserves total mass and workload exactly; pairings
// against twice-differentiable g change by O(mass * tol^2).
inline AtomicMeasure coarsen(const AtomicMeasure& mu, double tol) {
  if (tol <= 0.0 || mu.size() < 2) return mu;
  std::vector<Atom> out;
  out.reserve(mu.size());
  const auto& atoms = mu.atoms();
  std::size_t i = 0;
  while (i < atoms.size()) {
    double run_start = atoms[i].location;
    double m = atoms[i].mass;
    double mx = atoms[i].mass * atoms[i].location;
    std::size_t j = i + 1;
    while (j < atoms.size() && atoms[j].location - run_start <= tol) {
      m += atoms[j].mass;
      mx += atoms[j].mass * atoms[j].location;
      ++j;
    }
    out.push_back({m > 0.0 ? mx / m : run_start, m});
    i = j;
  }
  return AtomicMeasure(std::move(out));
}

// Bounded test function paired against measures; carries its derivative and
// certified sup bounds so norm-side checks can verify admissibility.
struct PairingFunction {
  std::function<double(double)> evaluate;
  std::function<double(double)> derivative;
  double sup_bound{0.0};
  double derivative_sup_bound{0.0};

  double operator()(double x) const { return evaluate(x); }
};

// Checks the declared bounds on a sampling grid.
inline bool pairing_within_bounds(const PairingFunction& f, double grid_max = 50.0,
                                  int n_points = 2001) {
  for (int i = 0; i < n_points; ++i) {
    const double x = grid_max * static_cast<double>(i) / (n_points - 1);
    if (std::abs(f.evaluate(x)) > f.sup_bound + 1e-12) return false;
    if (std::abs(f.derivative(x)) > f.derivative_sup_bound + 1e-12) return false;
  }
  return true;
}

namespace detail {

// Concave piecewise-linear function on [-1, 1], as breakpoints (x, value)
// with x ascending, first x = -1 and last x = +1.
struct ConcavePL {
  std::vector<std::pair<double, double>> pts;

  double value_at(double x) const {
    if (x <= pts.front().first) return pts.front().second;
    if (x >= pts.back().first) return pts.back().second;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (x <= pts[i].first) {
        const auto& [x0, v0] = pts[i - 1];
        const auto& [x1, v1] = pts[i];
        if (x1 == x0) return std::max(v0, v1);
        const double t = (x - x0) / (x1 - x0);
        return v0 + t * (v1 - v0);
      }
    }
    return pts.back().second;
  }

  double max_value() const {
    double m = pts.front().second;
    for (const auto& p : pts) m = std::max(m, p.second);
    return m;
  }
};

// Sliding-window maximum W(f) = max_{|f'-f|<=radius} V(f'), restricted back
// to [-1, 1]. Preserves concavity; adds at most two breakpoints.
inline ConcavePL window_max(const ConcavePL& v, double radius) {
  if (radius <= 0.0) return v;
  const double vmax = v.max_value();
  // argmax interval [p_lo, p_hi]; plateau values are exact copies so direct
  // comparison against vmax is safe.
  double p_lo = 0.0, p_hi = 0.0;
  bool found = false;
  for (const auto& [x, val] : v.pts) {
    if (val == vmax) {
      if (!found) p_lo = x;
      p_hi = x;
      found = true;
    }
  }
  std::vector<std::pair<double, double>> shifted;
  shifted.reserve(v.pts.size() + 2);
  for (const auto& [x, val] : v.pts)
    if (x < p_lo) shifted.emplace_back(x - radius, val);
  shifted.emplace_back(p_lo - radius, vmax);
  shifted.emplace_back(p_hi + radius, vmax);
  for (const auto& [x, val] : v.pts)
    if (x > p_hi) shifted.emplace_back(x + radius, val);

  ConcavePL wide{std::move(shifted)};
  ConcavePL out;
  out.pts.emplace_back(-1.0, wide.value_at(-1.0));
  for (const auto& [x, val] : wide.pts)
    if (x > -1.0 && x < 1.0) out.pts.emplace_back(x, val);
  out.pts.emplace_back(1.0, wide.value_at(1.0));
  return out;
}

struct SignedAtom {
  double location;
  double diff;  // mass(mu) - mass(nu)
};

inline std::vector<SignedAtom> merged_support(const AtomicMeasure& mu,
                                              const AtomicMeasure& nu) {
  std::vector<SignedAtom> out;
  const auto& a = mu.atoms();
  const auto& b = nu.atoms();
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() ||
        (i < a.size() && a[i].location < b[j].location - AtomicMeasure::kCompactionTol)) {
      out.push_back({a[i].location, a[i].mass});
      ++i;
    } else if (i == a.size() || b[j].location < a[i].location - AtomicMeasure::kCompactionTol) {
      out.push_back({b[j].location, -b[j].mass});
      ++j;
    } else {
      out.push_back({0.5 * (a[i].location + b[j].location), a[i].mass - b[j].mass});
      ++i;
      ++j;
    }
  }
  return out;
}

}  // namespace detail

// Dual (bounded-Lipschitz) distance: sup of <f, mu - nu> over f with
// |f| <= 1 and Lipschitz constant <= 1. The extremal f is piecewise linear
// with kinks only at support points, so the supremum is the exact maximum of
// the finite linear program over the values f(x_j) with |f_j| <= 1 and
// |f_{j+1} - f_j| <= x_{j+1} - x_j. Solved by a forward sweep maintaining the
// concave piecewise-linear value function of the best prefix assignment.
inline double bl_distance(const AtomicMeasure& mu, const AtomicMeasure& nu) {
  std::vector<detail::SignedAtom> sup = detail::merged_support(mu, nu);
  // Zero differences contribute nothing; folding them widens the windows.
  std::vector<detail::SignedAtom> active;
  active.reserve(sup.size());
  for (const auto& s : sup)
    if (s.diff != 0.0) active.push_back(s);
  if (active.empty()) return 0.0;

  detail::ConcavePL v;
  {
    const double d0 = active[0].diff;
    v.pts = {{-1.0, -d0}, {1.0, d0}};
  }
  for (std::size_t j = 1; j < active.size(); ++j) {
    const double gap = active[j].location - active[j - 1].location;
    detail::ConcavePL w = detail::window_max(v, gap);
    for (auto& [x, val] : w.pts) val += active[j].diff * x;
    v = std::move(w);
  }
  return std::max(v.max_value(), 0.0);
}

// Path of measures on a uniform time grid t0 + k*dt.
struct MeasurePath {
  double t0{0.0};
  double dt{0.0};
  std::vector<AtomicMeasure> measures;

  std::size_t size() const { return measures.size(); }
  double time_at(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double end_time() const {
    return measures.empty() ? t0 : time_at(measures.size() - 1);
  }
};

inline bool same_grid(const MeasurePath& a, const MeasurePath& b) {
  return a.size() == b.size() && std::abs(a.t0 - b.t0) <= 1e-12 &&
         std::abs(a.dt - b.dt) <= 1e-12 * std::max(1.0, std::abs(a.dt));
}

// Path norm distance: sup over grid times of the bounded-Lipschitz distance.
inline double path_distance(const MeasurePath& a, const MeasurePath& b) {
  if (!same_grid(a, b))
    throw std::invalid_argument("path_distance: paths must share one time grid");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    d = std::max(d, bl_distance(a.measures[k], b.measures[k]));
  return d;
}

}  // namespace wps
