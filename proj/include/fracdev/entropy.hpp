#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fracdev/error.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/stats.hpp"

namespace fracdev {

// (H, q, N) together with the aggregation exponent r, 1/r = H/N + 1/q.
class MixedParams {
 public:
  MixedParams(double H, double q, int N) : H_(H), q_(q), N_(N) {
    if (!(H > 0.0 && H <= 1.0)) throw ValidationError("mixed params: H must lie in (0, 1]");
    if (!(q >= 1.0)) throw ValidationError("mixed params: q must be >= 1 or inf");
    if (N < 1) throw ValidationError("mixed params: N must be positive");
    r_ = 1.0 / (H_ / N_ + inv_q());
  }

  double H() const { return H_; }
  double q() const { return q_; }
  int N() const { return N_; }
  double r() const { return r_; }
  double inv_q() const { return std::isinf(q_) ? 0.0 : 1.0 / q_; }
  bool sup_norm() const { return std::isinf(q_); }

 private:
  double H_;
  double q_;
  int N_;
  double r_ = 0.0;
};

enum class BoundKind { exact, upper, lower };

inline const char* to_string(BoundKind b) {
  switch (b) {
    case BoundKind::exact: return "exact";
    case BoundKind::upper: return "upper";
    case BoundKind::lower: return "lower";
  }
  return "?";
}

struct EntropyValue {
  double value = 0.0;
  BoundKind bound = BoundKind::exact;
  std::string note;  // non-empty for trivial covers and degraded searches
};

// diam^H * mass^{1/q}; for q = inf, diam^H on sets of positive mass.
inline double j_functional(double diameter, double mass, const MixedParams& params) {
  if (diameter < 0.0 || mass < 0.0) throw ValidationError("j_functional: negative argument");
  if (params.sup_norm()) return mass > 0.0 ? std::pow(diameter, params.H()) : 0.0;
  return std::pow(diameter, params.H()) * std::pow(mass, params.inv_q());
}

// ---------------------------------------------------------------------------
// Curves

enum class EntropyKind { sigma, delta, inner_entropy, sigma_infty };

inline const char* to_string(EntropyKind k) {
  switch (k) {
    case EntropyKind::sigma: return "sigma";
    case EntropyKind::delta: return "delta";
    case EntropyKind::inner_entropy: return "inner_entropy";
    case EntropyKind::sigma_infty: return "sigma_infty";
  }
  return "?";
}

struct CurvePowerFit {
  double exponent = 0.0;      // slope of log value against log n
  double log_exponent = 0.0;  // reserved for log corrections; zero for plain fits
  double constant = 0.0;
};

struct EntropyCurve {
  struct Entry {
    std::size_t n = 0;
    double value = 0.0;
    BoundKind bound = BoundKind::exact;
  };

  EntropyKind kind = EntropyKind::sigma;
  MixedParams params{0.5, 2.0, 1};
  std::vector<Entry> points;
  std::optional<CurvePowerFit> fit;

  void fit_power_law() {
    std::vector<double> ns;
    std::vector<double> vs;
    for (const auto& e : points) {
      if (e.value > 0.0) {
        ns.push_back(static_cast<double>(e.n));
        vs.push_back(e.value);
      }
    }
    if (ns.size() < 2) {
      fit.reset();
      return;
    }
    const auto line = fit_loglog(ns, vs);
    fit = CurvePowerFit{line.slope, 0.0, std::exp(line.intercept)};
  }

  bool non_increasing(double rel_tol = 1e-12) const {
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].n >= points[i - 1].n &&
          points[i].value > points[i - 1].value * (1.0 + rel_tol) + 1e-300) {
        return false;
      }
    }
    return true;
  }
};

inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_csv(std::ostream& os, const EntropyCurve& curve) {
  os << "kind,H,q,N,r,n,value,bound\n";
  for (const auto& e : curve.points) {
    os << to_string(curve.kind) << ',' << format_double(curve.params.H()) << ','
       << format_double(curve.params.q()) << ',' << curve.params.N() << ','
       << format_double(curve.params.r()) << ',' << e.n << ',' << format_double(e.value) << ','
       << to_string(e.bound) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Outer mixed entropy from self-similar word covers

namespace detail {

inline void require_finite_q_matching(const SelfSimilarSystem& system, const MixedParams& params) {
  if (params.N() != system.dim()) {
    throw ValidationError("mixed params: N does not match the system dimension");
  }
  if (params.sup_norm()) throw ValidationError("use sigma_infty for q = inf");
}

}  // namespace detail

// Upper bounds on sigma(n) for each requested n, from the level-s covers with
// at most n cells. A cell S_alpha(omega) has J = Lambda(alpha) diam(omega)^H.
inline EntropyCurve sigma_selfsimilar_curve(const SelfSimilarSystem& system,
                                            const MixedParams& params,
                                            std::vector<std::size_t> ns) {
  detail::require_finite_q_matching(system, params);
  std::sort(ns.begin(), ns.end());
  const std::size_t m = system.size();
  for (auto n : ns) {
    if (n == 0 || (n > 1 && n < m)) {
      throw ValidationError("sigma_selfsimilar: n must be 1 or at least the number of maps (" +
                            std::to_string(m) + ")");
    }
  }
  EntropyCurve curve;
  curve.kind = EntropyKind::sigma;
  curve.params = params;
  const double r = params.r();
  const double diam_h = std::pow(system.omega().diameter(), params.H());

  CoverRefiner refiner(system, params.H(), params.q());
  auto cover_value = [&] {
    double total = 0.0;
    refiner.for_each_cell([&](const CoverRefiner::Cell& c) {
      total += std::pow(std::exp(-c.depth) * diam_h, r);
    });
    return std::pow(total, 1.0 / r);
  };
  double best = cover_value();
  for (auto n : ns) {
    if (n == 1) {
      curve.points.push_back({1, diam_h, BoundKind::upper});
      continue;
    }
    while (refiner.next_size() <= n) {
      refiner.refine();
      best = std::min(best, cover_value());
    }
    curve.points.push_back({n, best, BoundKind::upper});
  }
  return curve;
}

inline EntropyValue sigma_selfsimilar(const SelfSimilarSystem& system, const MixedParams& params,
                                      std::size_t n) {
  const auto curve = sigma_selfsimilar_curve(system, params, {n});
  EntropyValue out{curve.points.front().value, BoundKind::upper, {}};
  if (n == 1) out.note = "single-set cover";
  return out;
}

// ---------------------------------------------------------------------------
// Exact outer mixed entropy of a discrete measure on the line

inline constexpr std::size_t kMaxLineAtoms = 4096;

namespace detail {

inline std::vector<WeightedPoint> sorted_line_atoms(const Measure& atoms) {
  std::vector<WeightedPoint> sorted = atoms;
  for (const auto& a : sorted) {
    if (a.x.size() != 1) throw ValidationError("sigma_line_exact: atoms must be one-dimensional");
    if (a.mass < 0.0) throw ValidationError("sigma_line_exact: negative mass");
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const WeightedPoint& a, const WeightedPoint& b) { return a.x[0] < b.x[0]; });
  return sorted;
}

}  // namespace detail

// Minimum of (sum_j J(Delta_j)^r)^{1/r} over covers of the atoms by n
// intervals, for every n in 1..n_max. Optimal intervals cover runs of
// consecutive atoms and end on atoms, so a partition DP over gaps is exact.
inline std::vector<double> sigma_line_exact_curve(const Measure& atoms, const MixedParams& params,
                                                  std::size_t n_max) {
  if (params.N() != 1) throw ValidationError("sigma_line_exact: requires N = 1");
  if (params.sup_norm()) throw ValidationError("sigma_line_exact: requires finite q");
  if (n_max == 0) throw ValidationError("sigma_line_exact: n must be >= 1");
  const auto sorted = detail::sorted_line_atoms(atoms);
  const std::size_t k = sorted.size();
  std::vector<double> out(n_max, 0.0);
  if (k == 0) return out;
  if (k > kMaxLineAtoms) {
    throw ValidationError("sigma_line_exact: at most " + std::to_string(kMaxLineAtoms) +
                          " atoms are supported");
  }
  const double r = params.r();
  const double a_len = params.H() * r;
  const double a_mass = r * params.inv_q();

  std::vector<double> prefix(k + 1, 0.0);
  for (std::size_t i = 0; i < k; ++i) prefix[i + 1] = prefix[i] + sorted[i].mass;

  // cost of the run i..j stored column-major: col_start[j] + i.
  std::vector<std::size_t> col_start(k);
  std::vector<double> cost(k * (k + 1) / 2);
  for (std::size_t j = 0, off = 0; j < k; ++j) {
    col_start[j] = off;
    for (std::size_t i = 0; i <= j; ++i) {
      const double len = sorted[j].x[0] - sorted[i].x[0];
      const double mass = prefix[j + 1] - prefix[i];
      cost[off + i] = len > 0.0 && mass > 0.0
                          ? std::exp(a_len * std::log(len) + a_mass * std::log(mass))
                          : 0.0;
    }
    off += j + 1;
  }

  // best[j]: cheapest cover of atoms 0..j with at most `runs` runs.
  std::vector<double> best(k);
  for (std::size_t j = 0; j < k; ++j) best[j] = cost[col_start[j]];
  out[0] = std::pow(best[k - 1], 1.0 / r);
  std::vector<double> next(k);
  for (std::size_t runs = 2; runs <= n_max; ++runs) {
    if (runs >= k) break;  // every atom alone: value 0
    next[0] = best[0];
    for (std::size_t j = 1; j < k; ++j) {
      const double* col = cost.data() + col_start[j];
      double v = best[j];
      for (std::size_t i = 1; i <= j; ++i) v = std::min(v, best[i - 1] + col[i]);
      next[j] = v;
    }
    std::swap(best, next);
    out[runs - 1] = std::pow(best[k - 1], 1.0 / r);
  }
  return out;
}

inline EntropyValue sigma_line_exact(const Measure& atoms, const MixedParams& params,
                                     std::size_t n) {
  const auto curve = sigma_line_exact_curve(atoms, params, n);
  return {curve.back(), BoundKind::exact, {}};
}

// ---------------------------------------------------------------------------
// Inner mixed entropy from dyadic cubes

struct DeltaOptions {
  std::optional<Box> domain;  // dyadic grid lives on domain->bounding_cube()
  int max_depth = 20;
};

struct DeltaResult {
  EntropyValue value;
  int depth = -1;  // grid depth that attained the bound, -1 if none did
};

namespace detail {

// J values of the occupied cubes at one depth, sorted by (J desc, cube index).
inline std::vector<double> dyadic_j_values(const Measure& atoms, const Box& cube, int depth,
                                           const MixedParams& params, bool* singletons) {
  const int n = cube.dim();
  const double side0 = cube.hi()[0] - cube.lo()[0];
  const double cells = std::ldexp(1.0, depth);
  const auto max_index = static_cast<std::int64_t>(cells) - 1;
  struct Entry {
    std::vector<std::int64_t> key;
    double mass;
  };
  std::vector<Entry> entries;
  entries.reserve(atoms.size());
  for (const auto& a : atoms) {
    std::vector<std::int64_t> key(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
      const double t = (a.x[c] - cube.lo()[c]) / side0 * cells;
      key[static_cast<std::size_t>(c)] =
          std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(t)), 0, max_index);
    }
    entries.push_back({std::move(key), a.mass});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.key < b.key; });
  struct Cube {
    double j;
    std::vector<std::int64_t> key;
  };
  std::vector<Cube> cubes;
  const double diam = side0 / cells * std::sqrt(static_cast<double>(n));
  bool all_single = true;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t e = i;
    double mass = 0.0;
    while (e < entries.size() && entries[e].key == entries[i].key) mass += entries[e++].mass;
    if (e - i > 1) all_single = false;
    if (mass > 0.0) cubes.push_back({j_functional(diam, mass, params), entries[i].key});
    i = e;
  }
  std::sort(cubes.begin(), cubes.end(), [](const Cube& a, const Cube& b) {
    return a.j != b.j ? a.j > b.j : a.key < b.key;
  });
  if (singletons) *singletons = all_single;
  std::vector<double> out;
  out.reserve(cubes.size());
  for (const auto& c : cubes) out.push_back(c.j);
  return out;
}

inline Box delta_cube(const Measure& atoms, const DeltaOptions& options) {
  if (options.domain) return options.domain->bounding_cube();
  std::vector<Point> pts;
  for (const auto& a : atoms) pts.push_back(a.x);
  return Box::bounding(pts).bounding_cube();
}

}  // namespace detail

// Certified lower bounds on delta(n): the largest delta such that some dyadic
// depth has n cubes (disjoint interiors) with J >= delta.
inline std::vector<DeltaResult> delta_packing_curve(const Measure& atoms, const MixedParams& params,
                                                    const std::vector<std::size_t>& ns,
                                                    const DeltaOptions& options = {}) {
  for (auto n : ns) {
    if (n == 0) throw ValidationError("delta_packing: n must be >= 1");
  }
  if (atoms.empty()) throw ValidationError("delta_packing: empty measure");
  const int dim = static_cast<int>(atoms.front().x.size());
  if (params.N() != dim) throw ValidationError("delta_packing: N does not match the measure");
  const Box cube = detail::delta_cube(atoms, options);
  std::vector<DeltaResult> out(ns.size());
  for (auto& r : out) r.value = {0.0, BoundKind::lower, {}};
  for (int depth = 0; depth <= options.max_depth; ++depth) {
    bool singletons = false;
    const auto js = detail::dyadic_j_values(atoms, cube, depth, params, &singletons);
    for (std::size_t k = 0; k < ns.size(); ++k) {
      if (js.size() >= ns[k] && js[ns[k] - 1] > out[k].value.value) {
        out[k].value.value = js[ns[k] - 1];
        out[k].depth = depth;
      }
    }
    if (singletons) break;  // deeper grids only shrink every J
  }
  for (auto& r : out) {
    if (r.depth < 0) r.value.note = "fewer than n occupied cubes at every depth";
  }
  return out;
}

inline DeltaResult delta_packing(const Measure& atoms, const MixedParams& params, std::size_t n,
                                 const DeltaOptions& options = {}) {
  return delta_packing_curve(atoms, params, {n}, options).front();
}

inline constexpr std::size_t kDefaultDeltaAtoms = std::size_t{1} << 16;

inline std::vector<DeltaResult> delta_packing_curve(const SelfSimilarSystem& system,
                                                    const MixedParams& params,
                                                    const std::vector<std::size_t>& ns,
                                                    std::size_t atoms = kDefaultDeltaAtoms) {
  DeltaOptions options;
  options.domain = system.omega();
  return delta_packing_curve(discretize(system, atoms), params, ns, options);
}

inline DeltaResult delta_packing(const SelfSimilarSystem& system, const MixedParams& params,
                                 std::size_t n, std::size_t atoms = kDefaultDeltaAtoms) {
  return delta_packing_curve(system, params, {n}, atoms).front();
}

// ---------------------------------------------------------------------------
// Covering, packing and inner entropy numbers of point clouds

namespace detail {

// Farthest-point order from index 0, stopping once every point lies within
// eps of a chosen center (or after max_centers centers). Centers are pairwise
// more than eps apart.
inline std::vector<std::size_t> farthest_point_centers(const std::vector<Point>& points,
                                                       double eps, std::size_t max_centers) {
  std::vector<std::size_t> centers;
  if (points.empty() || max_centers == 0) return centers;
  std::vector<double> dist(points.size(), kInfinity);
  std::size_t next = 0;
  while (centers.size() < max_centers) {
    const std::size_t current = next;
    centers.push_back(current);
    double far = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist[i] = std::min(dist[i], distance(points[i], points[current]));
      if (dist[i] > far) {
        far = dist[i];
        next = i;
      }
    }
    if (!(far > eps)) break;
  }
  return centers;
}

inline std::size_t scan_packing(const std::vector<Point>& points, double eps) {
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool separated = true;
    for (auto c : chosen) {
      if (!(distance(points[i], points[c]) > eps)) {
        separated = false;
        break;
      }
    }
    if (separated) chosen.push_back(i);
  }
  return chosen.size();
}

inline double cloud_diameter(const std::vector<Point>& points) {
  double d = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) d = std::max(d, distance(points[i], points[j]));
  }
  return d;
}

}  // namespace detail

// Size of a greedy eps-cover (closed balls); an upper bound on N(eps, T).
// Both greedy eps-separated sets built here are maximal, hence covers; the
// smaller one is returned.
inline std::size_t covering_number(const std::vector<Point>& points, double eps) {
  if (!(eps > 0.0)) throw ValidationError("covering_number: eps must be positive");
  if (points.empty()) return 0;
  const auto fps = detail::farthest_point_centers(points, eps, points.size()).size();
  return std::min(fps, detail::scan_packing(points, eps));
}

// Size of a greedy maximal eps-separated subset (pairwise distance > eps); a
// lower bound on M(eps, T). The larger of the two greedy orders is returned.
inline std::size_t packing_number(const std::vector<Point>& points, double eps) {
  if (!(eps > 0.0)) throw ValidationError("packing_number: eps must be positive");
  if (points.empty()) return 0;
  const auto fps = detail::farthest_point_centers(points, eps, points.size()).size();
  return std::max(fps, detail::scan_packing(points, eps));
}

// delta_n: the largest delta for which n points pairwise more than delta apart
// were found. n = 1 returns the diameter; n >= #points returns 0.
inline double inner_entropy(const std::vector<Point>& points, std::size_t n) {
  if (n == 0) throw ValidationError("inner_entropy: n must be >= 1");
  if (points.empty() || n >= points.size()) return 0.0;
  const double diam = detail::cloud_diameter(points);
  if (n == 1) return diam;
  double lo = 0.0;
  double hi = diam;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * diam; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0) break;
    if (packing_number(points, mid) >= n) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// Upper bound on sigma^{(H,inf)}(n) = inf (sum diam(A_j)^N)^{H/N} from a
// greedy k-center partition into n groups.
inline EntropyValue sigma_infty(const std::vector<Point>& points, double H, std::size_t n) {
  if (n == 0) throw ValidationError("sigma_infty: n must be >= 1");
  if (!(H > 0.0 && H <= 1.0)) throw ValidationError("sigma_infty: H must lie in (0, 1]");
  if (points.empty()) return {0.0, BoundKind::upper, {}};
  const auto dim = static_cast<double>(points.front().size());
  const auto centers = detail::farthest_point_centers(points, 0.0, n);
  std::vector<std::vector<std::size_t>> groups(centers.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t best = 0;
    double best_d = kInfinity;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = distance(points[i], points[centers[c]]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    groups[best].push_back(i);
  }
  double total = 0.0;
  for (const auto& g : groups) {
    double d = 0.0;
    for (std::size_t a = 0; a < g.size(); ++a) {
      for (std::size_t b = a + 1; b < g.size(); ++b) d = std::max(d, distance(points[g[a]], points[g[b]]));
    }
    total += std::pow(d, dim);
  }
  return {std::pow(total, H / dim), BoundKind::upper, {}};
}

inline std::vector<Point> support_points(const Measure& measure) {
  std::vector<Point> out;
  out.reserve(measure.size());
  for (const auto& a : measure) out.push_back(a.x);
  return out;
}

}  // namespace fracdev
