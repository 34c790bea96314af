#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fracdev/error.hpp"

namespace fracdev {

struct LeastSquaresFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd stderr_;  // zero when the fit has no residual degrees of freedom
  Eigen::MatrixXd covariance;
  double weighted_rss = 0.0;
  std::size_t points = 0;
};

// Minimizes sum w_i (y_i - design_i . coef)^2. Standard errors use the
// residual variance estimate s^2 (A^T W A)^{-1}.
inline LeastSquaresFit weighted_least_squares(const Eigen::MatrixXd& design,
                                              const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& w) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (n < p || y.size() != n || w.size() != n) {
    throw ValidationError("least squares: need at least as many points as coefficients");
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * design;
  const Eigen::VectorXd b = sw.cwiseProduct(y);
  LeastSquaresFit fit;
  fit.coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd resid = b - a * fit.coef;
  fit.weighted_rss = resid.squaredNorm();
  fit.points = static_cast<std::size_t>(n);
  const Eigen::MatrixXd normal_inv = (a.transpose() * a).inverse();
  const double s2 = n > p ? fit.weighted_rss / static_cast<double>(n - p) : 0.0;
  fit.covariance = s2 * normal_inv;
  fit.stderr_ = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_line: need >= 2 points");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = x[static_cast<std::size_t>(i)];
    design(i, 1) = 1.0;
    rhs[i] = y[static_cast<std::size_t>(i)];
  }
  const auto fit = weighted_least_squares(design, rhs, Eigen::VectorXd::Ones(n));
  return {fit.coef[0], fit.coef[1], fit.stderr_[0]};
}

// Slope of log y against log x.
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

}  // namespace fracdev
