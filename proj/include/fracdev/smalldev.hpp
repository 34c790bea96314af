#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fracdev/error.hpp"
#include "fracdev/fields.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/stats.hpp"

namespace fracdev {

// ||X||_{L_q(mu)} for a discretized measure; max |X| when q is infinite.
inline double lq_norm(std::span<const double> values, std::span<const double> masses, double q) {
  if (values.size() != masses.size()) throw ValidationError("lq_norm: size mismatch");
  if (!(q >= 1.0)) throw ValidationError("lq_norm: q must be >= 1 or inf");
  double total_mass = 0.0;
  for (double m : masses) total_mass += m;
  if (std::abs(total_mass - 1.0) > 1e-9) throw ValidationError("lq_norm: masses must sum to 1");
  if (std::isinf(q)) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += masses[i] * std::pow(std::abs(values[i]), q);
  return std::pow(s, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Probability curves

inline constexpr double kWilsonZ = 1.959963984540054;  // two-sided 95%

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

inline Interval wilson_interval(std::size_t count, std::size_t n, double z = kWilsonZ) {
  if (n == 0) throw ValidationError("wilson_interval: n must be positive");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(count) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {count == 0 ? 0.0 : std::max(0.0, center - half),
          count == n ? 1.0 : std::min(1.0, center + half)};
}

enum class CurveFlag { resolved, unresolved, saturated };

inline const char* to_string(CurveFlag f) {
  switch (f) {
    case CurveFlag::resolved: return "ok";
    case CurveFlag::unresolved: return "unresolved";
    case CurveFlag::saturated: return "saturated";
  }
  return "?";
}

struct CurvePoint {
  double eps = 0.0;
  std::size_t count = 0;
  double p_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> phi;  // -log p_hat; absent when no replicate fell below eps
  CurveFlag flag = CurveFlag::resolved;
};

struct Quadrature {
  std::size_t sites = 0;
  double level = 0.0;  // stratification level s, 0 for grids
  std::string description;
};

struct SmallDevCurve {
  std::vector<CurvePoint> points;  // eps decreasing
  std::size_t reps = 0;
  double q = 2.0;
  Quadrature quadrature;
  std::uint64_t seed = 0;
  double jitter_used = 0.0;
};

// Decreasing geometric grid from hi down to lo.
inline std::vector<double> geometric_eps_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi > lo) || count < 2) {
    throw ValidationError("eps grid: need 0 < lo < hi and at least two points");
  }
  std::vector<double> out;
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(hi * std::exp(-step * static_cast<double>(i)));
  out.back() = lo;
  return out;
}

// One curve from a fixed set of norms, so p_hat is exactly monotone in eps.
inline SmallDevCurve curve_from_norms(std::vector<double> norms, std::vector<double> eps_grid,
                                      double q) {
  if (norms.empty()) throw ValidationError("curve: no replicates");
  for (double e : eps_grid) {
    if (!(e > 0.0)) throw ValidationError("curve: eps values must be positive");
  }
  std::sort(norms.begin(), norms.end());
  std::sort(eps_grid.begin(), eps_grid.end(), std::greater<>());
  SmallDevCurve curve;
  curve.reps = norms.size();
  curve.q = q;
  for (double eps : eps_grid) {
    CurvePoint pt;
    pt.eps = eps;
    pt.count = static_cast<std::size_t>(std::lower_bound(norms.begin(), norms.end(), eps) -
                                        norms.begin());
    pt.p_hat = static_cast<double>(pt.count) / static_cast<double>(curve.reps);
    const auto ci = wilson_interval(pt.count, curve.reps);
    pt.lo = ci.lo;
    pt.hi = ci.hi;
    if (pt.count == 0) {
      pt.flag = CurveFlag::unresolved;
    } else {
      pt.phi = -std::log(pt.p_hat);
      pt.flag = pt.count == curve.reps ? CurveFlag::saturated : CurveFlag::resolved;
    }
    curve.points.push_back(pt);
  }
  return curve;
}

inline constexpr std::size_t kMaxSites = 4096;

// L_q(mu) norm of each replicate of the field at the measure's sites.
inline std::vector<double> field_norms(const Kernel& kernel, const Measure& sites, double q,
                                       std::size_t reps, std::uint64_t seed, unsigned threads,
                                       double* jitter_used = nullptr) {
  if (sites.empty()) throw ValidationError("field_norms: no sites");
  if (sites.size() > kMaxSites) {
    throw ValidationError("field_norms: at most " + std::to_string(kMaxSites) + " sites");
  }
  if (!(q >= 1.0)) throw ValidationError("field_norms: q must be >= 1 or inf");
  std::vector<Point> pts;
  Eigen::VectorXd masses(static_cast<Eigen::Index>(sites.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    pts.push_back(sites[i].x);
    masses[static_cast<Eigen::Index>(i)] = sites[i].mass;
    total += sites[i].mass;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("field_norms: masses must sum to 1");
  const auto factor = factorize(gram(kernel, pts));
  if (jitter_used) *jitter_used = factor.jitter_used;
  std::vector<double> norms(reps);
  const bool sup = std::isinf(q);
  for_each_block(factor, reps, seed, threads, [&](std::size_t first, const Matrix& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      double v;
      if (sup) {
        v = block.row(r).cwiseAbs().maxCoeff();
      } else if (q == 2.0) {
        v = std::sqrt(block.row(r).array().square().matrix().dot(masses));
      } else {
        v = std::pow(block.row(r).array().abs().pow(q).matrix().dot(masses), 1.0 / q);
      }
      norms[first + static_cast<std::size_t>(r)] = v;
    }
  });
  return norms;
}

// Monte Carlo estimate of P(||X||_{L_q(mu)} < eps) on a shared batch of reps
// replicates (common random numbers across the eps grid).
inline SmallDevCurve estimate_curve(const Kernel& kernel, const Measure& sites, double q,
                                    std::vector<double> eps_grid, std::size_t reps,
                                    std::uint64_t seed, unsigned threads = 1,
                                    Quadrature quadrature = {}) {
  if (reps < 1000) throw ValidationError("estimate_curve: reps must be >= 1000");
  double jitter = 0.0;
  auto norms = field_norms(kernel, sites, q, reps, seed, threads, &jitter);
  auto curve = curve_from_norms(std::move(norms), std::move(eps_grid), q);
  curve.seed = seed;
  curve.jitter_used = jitter;
  curve.quadrature = std::move(quadrature);
  curve.quadrature.sites = sites.size();
  return curve;
}

// ---------------------------------------------------------------------------
// Rate fitting: phi(eps) ~ c eps^{-a} log(1/eps)^{a beta}

struct RateFit {
  double a = 0.0;
  double beta = 0.0;
  double c = 0.0;
  double eps_lo = 0.0;
  double eps_hi = 0.0;
  double stderr_a = 0.0;
  double stderr_beta = 0.0;
  double stderr_log_c = 0.0;
  std::size_t points_used = 0;
  bool beta_fitted = false;
};

// Weighted least squares of log phi on log(1/eps) (and log log(1/eps)).
inline RateFit fit_rate_points(std::span<const double> eps, std::span<const double> phi,
                               std::span<const double> weights, bool fit_beta) {
  const std::size_t n = eps.size();
  if (phi.size() != n || weights.size() != n) throw ValidationError("fit_rate: size mismatch");
  if (n < 4) throw ValidationError("window too narrow: fewer than 4 resolved points");
  const Eigen::Index cols = fit_beta ? 3 : 2;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  RateFit fit;
  fit.eps_lo = kInfinity;
  fit.eps_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!(eps[i] > 0.0) || !(phi[i] > 0.0) || !(weights[i] > 0.0)) {
      throw ValidationError("fit_rate: eps, phi and weights must be positive");
    }
    const double x = std::log(1.0 / eps[i]);
    design(r, 0) = x;
    if (fit_beta) {
      if (!(x > 0.0)) throw ValidationError("fit_rate: log correction needs eps < 1");
      design(r, 1) = std::log(x);
    }
    design(r, cols - 1) = 1.0;
    y[r] = std::log(phi[i]);
    w[r] = weights[i];
    fit.eps_lo = std::min(fit.eps_lo, eps[i]);
    fit.eps_hi = std::max(fit.eps_hi, eps[i]);
  }
  const auto ls = weighted_least_squares(design, y, w);
  fit.points_used = n;
  fit.a = ls.coef[0];
  fit.stderr_a = ls.stderr_[0];
  fit.c = std::exp(ls.coef[cols - 1]);
  fit.stderr_log_c = ls.stderr_[cols - 1];
  fit.beta_fitted = fit_beta;
  if (fit_beta) {
    const double b = ls.coef[1];
    fit.beta = b / fit.a;
    // delta method for b / a
    const double da = -b / (fit.a * fit.a);
    const double db = 1.0 / fit.a;
    const double var = da * da * ls.covariance(0, 0) + db * db * ls.covariance(1, 1) +
                       2.0 * da * db * ls.covariance(0, 1);
    fit.stderr_beta = std::sqrt(std::max(var, 0.0));
  }
  return fit;
}

// Fits the resolved points with eps in [eps_lo, eps_hi]. Each point is
// weighted by the inverse variance of log phi implied by its Wilson interval.
inline RateFit fit_rate(const SmallDevCurve& curve, bool fit_beta, double eps_lo, double eps_hi) {
  std::vector<double> eps;
  std::vector<double> phi;
  std::vector<double> weights;
  for (const auto& pt : curve.points) {
    if (pt.flag != CurveFlag::resolved) continue;
    if (pt.eps < eps_lo * (1.0 - 1e-12) || pt.eps > eps_hi * (1.0 + 1e-12)) continue;
    const double sd_p = (pt.hi - pt.lo) / (2.0 * kWilsonZ);
    const double sd_log_phi = sd_p / (pt.p_hat * *pt.phi);
    eps.push_back(pt.eps);
    phi.push_back(*pt.phi);
    weights.push_back(sd_log_phi > 0.0 ? 1.0 / (sd_log_phi * sd_log_phi) : 1.0);
  }
  auto fit = fit_rate_points(eps, phi, weights, fit_beta);
  fit.eps_lo = eps_lo;
  fit.eps_hi = eps_hi;
  return fit;
}

// ---------------------------------------------------------------------------
// Predicted exponents

struct SelfSimilarRate {
  SelfSimilarSystem system;
  double H;
  double q;
};

struct HausdorffRate {
  SelfSimilarSystem system;
  double H;
};

struct LebesgueRate {
  int N;
  double H;
};

using RateTarget = std::variant<SelfSimilarRate, HausdorffRate, LebesgueRate>;

struct Prediction {
  double a = 0.0;
  std::string note;
  double residual = 0.0;  // root-solver residual, 0 for closed forms
  double gamma = std::nan("");
  double dimension = std::nan("");
};

namespace detail {

inline Prediction dimension_over_hurst(const SelfSimilarSystem& system, double H,
                                       std::string note) {
  Prediction p;
  p.dimension = similarity_dimension(system);
  double s = 0.0;
  for (double l : system.scales()) s += std::pow(l, p.dimension);
  p.residual = std::abs(s - 1.0);
  p.a = p.dimension / H;
  p.note = std::move(note);
  return p;
}

}  // namespace detail

inline Prediction predicted_exponent(const RateTarget& target) {
  return std::visit(
      [](const auto& t) -> Prediction {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, LebesgueRate>) {
          if (t.N < 1 || !(t.H > 0.0)) throw ValidationError("prediction: invalid N or H");
          Prediction p;
          p.a = static_cast<double>(t.N) / t.H;
          p.dimension = t.N;
          p.note = "Lebesgue measure on [0,1]^N: a = N/H";
          return p;
        } else if constexpr (std::is_same_v<T, HausdorffRate>) {
          return detail::dimension_over_hurst(t.system, t.H,
                                              "Hausdorff measure on a self-similar set: a = D/H");
        } else {
          if (std::isinf(t.q)) {
            return detail::dimension_over_hurst(t.system, t.H,
                                                "sup norm on a self-similar set: a = D/H");
          }
          const auto g = gamma_exponent(t.system, t.H, t.q);
          Prediction p;
          p.gamma = g.gamma;
          p.a = g.rate;
          p.residual = g.residual;
          p.note = "self-similar measure: a = gamma q / (q - gamma)";
          return p;
        }
      },
      target);
}

// ---------------------------------------------------------------------------
// End-to-end verification

enum class MeasureKind { lebesgue, selfsimilar, hausdorff };

inline const char* to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::lebesgue: return "lebesgue";
    case MeasureKind::selfsimilar: return "selfsimilar";
    case MeasureKind::hausdorff: return "hausdorff";
  }
  return "?";
}

struct VerifyTarget {
  MeasureKind kind = MeasureKind::lebesgue;
  int dim = 1;
  std::optional<SelfSimilarSystem> system;

  static VerifyTarget lebesgue(int dim) { return {MeasureKind::lebesgue, dim, std::nullopt}; }
  static VerifyTarget selfsimilar(SelfSimilarSystem s) {
    const int d = s.dim();
    return {MeasureKind::selfsimilar, d, std::move(s)};
  }
  // Same maps and omega, weights replaced by lambda_j^D.
  static VerifyTarget hausdorff(const SelfSimilarSystem& s) {
    return {MeasureKind::hausdorff, s.dim(),
            SelfSimilarSystem::with_hausdorff_weights(s.maps(), s.omega())};
  }
};

struct VerifyBudget {
  std::size_t sites = 256;  // grid sites, or minimum number of strata
  std::size_t points_per_cell = 1;
  std::size_t reps = 200000;
  double eps_lo = 0.25;
  double eps_hi = 0.9;
  std::size_t eps_count = 16;
  double tolerance = 0.25;
  bool far_from_origin = false;  // translate so that dist(0, T) >= diam(T)
  bool fit_beta = false;
};

enum class Verdict { pass, inconclusive, fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::inconclusive: return "INCONCLUSIVE";
    case Verdict::fail: return "FAIL";
  }
  return "?";
}

struct VerifyReport {
  Verdict verdict = Verdict::fail;
  double a_fit = 0.0;
  double stderr_a = 0.0;
  double a_pred = 0.0;
  double relative_error = 0.0;
  Prediction prediction;
  RateFit fit;
  SmallDevCurve curve;
  VerifyBudget budget;
  std::uint64_t seed = 0;
  std::string kernel;
  double q = 2.0;
  MeasureKind measure = MeasureKind::lebesgue;
  Point offset;  // translation applied to the support
};

inline Verdict classify(double a_fit, double stderr_a, double a_pred, double tolerance) {
  const double rel = std::abs(a_fit - a_pred) / a_pred;
  if (rel <= tolerance) return Verdict::pass;
  if (stderr_a / a_pred > 0.5 * tolerance) return Verdict::inconclusive;
  return Verdict::fail;
}

// Cell-midpoint grid on [0,1]^N with about `sites` points (k^N, k = ceil(sites^{1/N})).
inline Measure lebesgue_grid(int dim, std::size_t sites) {
  if (dim < 1 || sites == 0) throw ValidationError("lebesgue grid: need dim >= 1 and sites >= 1");
  auto k = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(sites), 1.0 / dim) - 1e-9));
  k = std::max<std::size_t>(k, 1);
  std::size_t total = 1;
  for (int d = 0; d < dim; ++d) total *= k;
  Measure out;
  out.reserve(total);
  const double mass = 1.0 / static_cast<double>(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Point p(dim);
    std::size_t rest = idx;
    for (int d = 0; d < dim; ++d) {
      p[d] = (static_cast<double>(rest % k) + 0.5) / static_cast<double>(k);
      rest /= k;
    }
    out.push_back({std::move(p), mass});
  }
  return out;
}

// Offset e_1 * (diam(box) - lo_1) when the box is closer to the origin than its diameter.
inline Point far_from_origin_offset(const Box& box) {
  Point offset = Point::Zero(box.dim());
  const double diam = box.diameter();
  Point nearest = box.lo().cwiseMax(Point::Zero(box.dim())).cwiseMin(box.hi());
  if (nearest.norm() < diam) offset[0] = diam - box.lo()[0];
  return offset;
}

inline constexpr std::uint64_t kSiteStream = 0x5174E5ULL;

struct VerifySites {
  Measure sites;
  Quadrature quadrature;
  Point offset;
};

inline VerifySites verify_sites(const VerifyTarget& target, const Kernel& kernel, double q,
                                const VerifyBudget& budget, std::uint64_t seed) {
  VerifySites out;
  if (target.kind == MeasureKind::lebesgue) {
    out.sites = lebesgue_grid(target.dim, budget.sites);
    out.quadrature.description = "midpoint grid on [0,1]^" + std::to_string(target.dim);
    out.offset = budget.far_from_origin ? far_from_origin_offset(Box::unit(target.dim))
                                        : Point::Zero(target.dim);
  } else {
    if (!target.system) throw ValidationError("verify: self-similar target without a system");
    const auto& system = *target.system;
    const double level =
        level_for_min_cells(system, kernel.hurst(), q, budget.sites);
    out.sites = stratified_sample(system, kernel.hurst(), q, level, budget.points_per_cell,
                                  derive_seed(seed, kSiteStream));
    out.quadrature.level = level;
    out.quadrature.description = "stratified level-s cells, " +
                                 std::to_string(budget.points_per_cell) + " point(s) per cell";
    out.offset = budget.far_from_origin ? far_from_origin_offset(system.omega())
                                        : Point::Zero(system.dim());
  }
  for (auto& s : out.sites) s.x += out.offset;
  out.quadrature.sites = out.sites.size();
  return out;
}

inline VerifyReport verify(const VerifyTarget& target, const Kernel& kernel, double q,
                           const VerifyBudget& budget, std::uint64_t seed, unsigned threads = 1) {
  if (kernel.dim() != target.dim) throw ValidationError("verify: kernel dimension mismatch");
  if (!(budget.tolerance > 0.0)) throw ValidationError("verify: tolerance must be positive");

  VerifyReport report;
  report.budget = budget;
  report.seed = seed;
  report.kernel = kernel.describe();
  report.q = q;
  report.measure = target.kind;

  const double H = kernel.hurst();
  switch (target.kind) {
    case MeasureKind::lebesgue:
      report.prediction = predicted_exponent(LebesgueRate{target.dim, H});
      break;
    case MeasureKind::hausdorff:
      report.prediction = predicted_exponent(HausdorffRate{*target.system, H});
      break;
    case MeasureKind::selfsimilar:
      report.prediction = predicted_exponent(SelfSimilarRate{*target.system, H, q});
      break;
  }
  if (kernel.family() == KernelFamily::brownian_sheet) {
    report.prediction.note += "; Brownian sheet carries an unasserted log correction";
  }

  auto sites = verify_sites(target, kernel, q, budget, seed);
  report.offset = sites.offset;
  report.curve = estimate_curve(kernel, sites.sites, q,
                                geometric_eps_grid(budget.eps_lo, budget.eps_hi, budget.eps_count),
                                budget.reps, seed, threads, sites.quadrature);
  report.fit = fit_rate(report.curve, budget.fit_beta, budget.eps_lo, budget.eps_hi);
  report.a_fit = report.fit.a;
  report.stderr_a = report.fit.stderr_a;
  report.a_pred = report.prediction.a;
  report.relative_error = std::abs(report.a_fit - report.a_pred) / report.a_pred;
  report.verdict = classify(report.a_fit, report.stderr_a, report.a_pred, budget.tolerance);
  return report;
}

}  // namespace fracdev
