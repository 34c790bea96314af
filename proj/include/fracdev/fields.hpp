#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fracdev/error.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/rng.hpp"

namespace fracdev {

enum class KernelFamily { fbm, brownian_sheet };

// Covariance of a centered Gaussian field on R^N.
class Kernel {
 public:
  static Kernel fbm(double hurst, int dim = 1) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw ValidationError("fbm kernel: H must lie in (0, 1)");
    if (dim < 1) throw ValidationError("kernel: dimension must be positive");
    return Kernel(KernelFamily::fbm, hurst, dim);
  }

  static Kernel brownian_sheet(int dim) {
    if (dim < 1) throw ValidationError("kernel: dimension must be positive");
    return Kernel(KernelFamily::brownian_sheet, 0.5, dim);
  }

  // "fbm:<H>", "bm" (fbm:0.5) or "sheet".
  static Kernel parse(const std::string& spec, int dim) {
    if (spec == "bm") return fbm(0.5, dim);
    if (spec == "sheet" || spec == "brownian_sheet") return brownian_sheet(dim);
    if (spec.rfind("fbm:", 0) == 0) {
      std::size_t used = 0;
      double h = 0.0;
      try {
        h = std::stod(spec.substr(4), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != spec.size() - 4) {
        throw ValidationError("kernel: cannot parse Hurst index in '" + spec + "'");
      }
      return fbm(h, dim);
    }
    throw ValidationError("kernel: unknown kernel '" + spec + "' (expected fbm:<H>, bm or sheet)");
  }

  KernelFamily family() const { return family_; }
  // Hoelder exponent of the field; 1/2 for the Brownian sheet.
  double hurst() const { return hurst_; }
  int dim() const { return dim_; }

  std::string describe() const {
    if (family_ == KernelFamily::brownian_sheet) return "sheet";
    char buf[48];
    std::snprintf(buf, sizeof buf, "fbm:%.17g", hurst_);
    return buf;
  }

  void check_domain(const Point& t) const {
    if (t.size() != dim_) throw ValidationError("kernel: point dimension mismatch");
    if (family_ == KernelFamily::brownian_sheet && (t.array() < 0.0).any()) {
      throw ValidationError("kernel: Brownian sheet is defined on the positive orthant only");
    }
  }

  double operator()(const Point& s, const Point& t) const {
    if (family_ == KernelFamily::fbm) {
      const double e = 2.0 * hurst_;
      return 0.5 * (std::pow(s.norm(), e) + std::pow(t.norm(), e) - std::pow((t - s).norm(), e));
    }
    double k = 1.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) k *= std::min(s[i], t[i]);
    return k;
  }

  double variance(const Point& t) const { return (*this)(t, t); }

 private:
  Kernel(KernelFamily family, double hurst, int dim) : family_(family), hurst_(hurst), dim_(dim) {}

  KernelFamily family_;
  double hurst_;
  int dim_;
};

inline Matrix gram(const Kernel& kernel, std::span<const Point> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  for (const auto& p : points) kernel.check_domain(p);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = kernel(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
      g(j, i) = g(i, j);
    }
  }
  return g;
}

struct GaussianFactor {
  Matrix lower;  // gram + jitter * I = lower * lower^T
  double jitter_used = 0.0;
};

inline constexpr double kJitterLadder[] = {1e-12, 1e-10, 1e-8};

// Cholesky factor, escalating a diagonal jitter eta * max(diag) when the
// plain factorization fails.
inline GaussianFactor factorize(const Matrix& g) {
  const auto n = g.rows();
  GaussianFactor out;
  if (n == 0) return out;
  const double max_diag = g.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) {
    if ((g.array() == 0.0).all()) {
      out.lower = Matrix::Zero(n, n);
      return out;
    }
    throw NumericalError("gram not PSD within tolerance");
  }
  // pivots at rounding level count as a failed factorization
  const double pivot_floor = 64.0 * std::numeric_limits<double>::epsilon() * max_diag;
  Eigen::LLT<Matrix> llt(g);
  const Matrix plain = llt.matrixL();
  if (llt.info() == Eigen::Success && plain.allFinite() &&
      plain.diagonal().array().square().minCoeff() > pivot_floor) {
    out.lower = plain;
    return out;
  }
  for (double eta : kJitterLadder) {
    const double jitter = eta * max_diag;
    Eigen::LLT<Matrix> shifted(g + jitter * Matrix::Identity(n, n));
    if (shifted.info() == Eigen::Success) {
      out.lower = shifted.matrixL();
      out.jitter_used = jitter;
      return out;
    }
  }
  throw NumericalError("gram not PSD within tolerance");
}

// Replicates are drawn in fixed blocks; block b always uses stream b of the
// seed, so results do not depend on how blocks are spread over threads.
inline constexpr std::size_t kBlockReps = 4096;

// fn(first_rep, values) with values of shape (block reps) x (sites); fn runs
// concurrently for different blocks.
template <class Fn>
void for_each_block(const GaussianFactor& factor, std::size_t reps, std::uint64_t seed,
                    unsigned threads, Fn&& fn) {
  const auto sites = factor.lower.rows();
  const std::size_t blocks = (reps + kBlockReps - 1) / kBlockReps;
  const Matrix lower_t = factor.lower.transpose();
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t first = b * kBlockReps;
    const auto rows = static_cast<Eigen::Index>(std::min(kBlockReps, reps - first));
    Engine engine = make_engine(seed, b);
    std::normal_distribution<double> normal;
    Matrix z(rows, sites);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < sites; ++c) z(r, c) = normal(engine);
    }
    const Matrix values = z * lower_t;
    fn(first, values);
  });
}

struct GaussianSampleBatch {
  std::vector<Point> points;
  Matrix values;  // reps x sites
  std::uint64_t seed = 0;
  double jitter_used = 0.0;
};

inline GaussianSampleBatch sample(const Kernel& kernel, const std::vector<Point>& points,
                                  std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
  if (reps == 0) throw ValidationError("sample: reps must be >= 1");
  if (points.empty()) throw ValidationError("sample: no sites");
  const auto factor = factorize(gram(kernel, points));
  GaussianSampleBatch batch;
  batch.points = points;
  batch.seed = seed;
  batch.jitter_used = factor.jitter_used;
  batch.values.resize(static_cast<Eigen::Index>(reps), static_cast<Eigen::Index>(points.size()));
  for_each_block(factor, reps, seed, threads, [&](std::size_t first, const Matrix& block) {
    batch.values.middleRows(static_cast<Eigen::Index>(first), block.rows()) = block;
  });
  return batch;
}

inline void write_samples_csv(std::ostream& os, const GaussianSampleBatch& batch) {
  os << "rep,site_index,value\n";
  char buf[40];
  for (Eigen::Index r = 0; r < batch.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < batch.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", batch.values(r, c));
      os << r << ',' << c << ',' << buf << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Conditional variances

inline constexpr double kPseudoInverseCutoff = 1e-10;
inline constexpr double kSamePointTolerance = 1e-12;

// Var[X(t) | X(s), s in conditioners] through the pseudo-inverse of the
// conditioners' gram matrix, clamped to [0, K(t,t)].
inline double conditional_variance(const Kernel& kernel, const Point& target,
                                   const std::vector<Point>& conditioners) {
  kernel.check_domain(target);
  const double prior = kernel.variance(target);
  if (conditioners.empty()) return prior;
  for (const auto& s : conditioners) {
    if (distance(s, target) <= kSamePointTolerance) {
      throw ValidationError("conditional_variance: target coincides with a conditioner");
    }
  }
  const Matrix kss = gram(kernel, conditioners);
  Eigen::VectorXd kst(static_cast<Eigen::Index>(conditioners.size()));
  for (std::size_t i = 0; i < conditioners.size(); ++i) {
    kst[static_cast<Eigen::Index>(i)] = kernel(conditioners[i], target);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(kss);
  if (eig.info() != Eigen::Success) throw NumericalError("conditional_variance: eigensolver failed");
  const auto& lambda = eig.eigenvalues();
  const double cutoff = kPseudoInverseCutoff * std::max(lambda.maxCoeff(), 0.0);
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * kst;
  double explained = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > cutoff && lambda[i] > 0.0) explained += proj[i] * proj[i] / lambda[i];
  }
  return std::clamp(prior - explained, 0.0, prior);
}

enum class TauRule {
  sequential,     // tau_i = dist(A_i, union of earlier cells); infinite for the first
  half_diameter,  // tau_A = diam(A) / (2 sqrt(N))
};

struct NondeterminismProfile {
  double V = 0.0;
  std::vector<double> v;    // per cell; NaN for skipped cells
  std::vector<double> tau;  // per cell
  std::vector<std::string> warnings;
};

// Point-cloud approximation of V = min_i v(A_i, tau_i) mu(A_i)^{1/q}, where
// v(A, tau) is the smallest prediction-error standard deviation of X(t),
// t in A, given the field at every supplied point at distance >= tau from t.
// Conditioning on finitely many points leaves more variance than the full
// sigma-field, so V is approximated from above.
inline NondeterminismProfile nondeterminism_profile(
    const Kernel& kernel, const std::vector<std::vector<Point>>& cells,
    const std::vector<double>& masses, double q,
    const std::optional<std::vector<double>>& tau = std::nullopt,
    TauRule rule = TauRule::sequential) {
  if (cells.size() != masses.size()) throw ValidationError("nondeterminism: one mass per cell");
  if (tau && tau->size() != cells.size()) throw ValidationError("nondeterminism: one tau per cell");
  if (!(q >= 1.0)) throw ValidationError("nondeterminism: q must be >= 1");
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;

  std::vector<Point> cloud;
  for (const auto& c : cells) cloud.insert(cloud.end(), c.begin(), c.end());

  NondeterminismProfile out;
  out.V = kInfinity;
  std::vector<Point> earlier;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    double t_i = kInfinity;
    if (tau) {
      t_i = (*tau)[i];
    } else if (rule == TauRule::half_diameter) {
      double d = 0.0;
      for (std::size_t a = 0; a < cell.size(); ++a) {
        for (std::size_t b = a + 1; b < cell.size(); ++b) d = std::max(d, distance(cell[a], cell[b]));
      }
      t_i = d / (2.0 * std::sqrt(static_cast<double>(kernel.dim())));
    } else {
      for (const auto& p : cell) {
        for (const auto& e : earlier) t_i = std::min(t_i, distance(p, e));
      }
    }
    out.tau.push_back(t_i);
    if (cell.empty()) {
      out.v.push_back(std::nan(""));
      out.warnings.push_back("cell " + std::to_string(i + 1) + " is empty; skipped");
      continue;
    }
    double min_var = kInfinity;
    for (const auto& t : cell) {
      std::vector<Point> cond;
      for (const auto& s : cloud) {
        const double d = distance(s, t);
        if (d > kSamePointTolerance && d >= t_i) cond.push_back(s);
      }
      min_var = std::min(min_var, conditional_variance(kernel, t, cond));
    }
    const double vi = std::sqrt(min_var) * std::pow(masses[i], inv_q);
    out.v.push_back(vi);
    out.V = std::min(out.V, vi);
    earlier.insert(earlier.end(), cell.begin(), cell.end());
  }
  return out;
}

}  // namespace fracdev
