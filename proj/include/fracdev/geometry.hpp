#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fracdev/error.hpp"

namespace fracdev {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct WeightedPoint {
  Point x;
  double mass = 0.0;
};

using Measure = std::vector<WeightedPoint>;

inline double distance(const Point& a, const Point& b) { return (a - b).norm(); }

// Axis-aligned box [lo, hi].
class Box {
 public:
  Box() = default;
  Box(Point lo, Point hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() == 0 || lo_.size() != hi_.size()) {
      throw ValidationError("box: lo and hi must be non-empty with equal dimension");
    }
    for (Eigen::Index k = 0; k < lo_.size(); ++k) {
      if (!(lo_[k] < hi_[k])) throw ValidationError("box: need lo < hi in every coordinate");
    }
  }

  static Box unit(int dim) { return Box(Point::Zero(dim), Point::Ones(dim)); }

  int dim() const { return static_cast<int>(lo_.size()); }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  Point center() const { return 0.5 * (lo_ + hi_); }
  double diameter() const { return (hi_ - lo_).norm(); }

  bool contains(const Point& x, double tol = 0.0) const {
    for (Eigen::Index k = 0; k < lo_.size(); ++k) {
      if (x[k] < lo_[k] - tol || x[k] > hi_[k] + tol) return false;
    }
    return true;
  }

  // True when the open interiors intersect (boxes sharing a face do not).
  bool interior_overlaps(const Box& other, double tol = 1e-12) const {
    for (Eigen::Index k = 0; k < lo_.size(); ++k) {
      if (lo_[k] >= other.hi_[k] - tol || other.lo_[k] >= hi_[k] - tol) return false;
    }
    return true;
  }

  std::vector<Point> corners() const {
    const int n = dim();
    std::vector<Point> out;
    out.reserve(std::size_t{1} << n);
    for (unsigned mask = 0; mask < (1U << n); ++mask) {
      Point c(n);
      for (int k = 0; k < n; ++k) c[k] = (mask >> k) & 1U ? hi_[k] : lo_[k];
      out.push_back(std::move(c));
    }
    return out;
  }

  // Smallest cube with the same lower corner that contains the box.
  Box bounding_cube() const {
    const double side = (hi_ - lo_).maxCoeff();
    return Box(lo_, lo_ + Point::Constant(dim(), side));
  }

  static Box bounding(const std::vector<Point>& points) {
    if (points.empty()) throw ValidationError("box: cannot bound an empty point set");
    Point lo = points.front();
    Point hi = points.front();
    for (const auto& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    // Degenerate extents get a unit width so the box stays valid.
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
      if (!(lo[k] < hi[k])) hi[k] = lo[k] + 1.0;
    }
    return Box(lo, hi);
  }

 private:
  Point lo_;
  Point hi_;
};

// x -> scale * rotation * x + shift, with rotation orthogonal.
class Similarity {
 public:
  static constexpr double kOrthogonalityTolerance = 1e-10;

  Similarity() = default;
  Similarity(double scale, Matrix rotation, Point shift)
      : scale_(scale), rotation_(std::move(rotation)), shift_(std::move(shift)) {
    const auto n = shift_.size();
    if (n == 0) throw ValidationError("similarity: dimension must be positive");
    if (!(scale_ > 0.0 && scale_ <= 1.0)) {
      throw ValidationError("similarity: scale must lie in (0, 1], got " + std::to_string(scale_));
    }
    if (rotation_.rows() != n || rotation_.cols() != n) {
      throw ValidationError("similarity: rotation must be " + std::to_string(n) + "x" +
                            std::to_string(n));
    }
    const double err = (rotation_.transpose() * rotation_ - Matrix::Identity(n, n))
                           .cwiseAbs()
                           .maxCoeff();
    if (err > kOrthogonalityTolerance) {
      throw ValidationError("similarity: rotation is not orthogonal (max deviation " +
                            std::to_string(err) + ")");
    }
  }

  static Similarity identity(int dim) {
    return Similarity(1.0, Matrix::Identity(dim, dim), Point::Zero(dim));
  }

  static Similarity scaling(double scale, Point shift) {
    const auto n = shift.size();
    return Similarity(scale, Matrix::Identity(n, n), std::move(shift));
  }

  int dim() const { return static_cast<int>(shift_.size()); }
  double scale() const { return scale_; }
  const Matrix& rotation() const { return rotation_; }
  const Point& shift() const { return shift_; }

  Point operator()(const Point& x) const { return scale_ * (rotation_ * x) + shift_; }

  // (*this) o inner: apply inner first.
  Similarity then_after(const Similarity& inner) const {
    Similarity out;
    out.scale_ = scale_ * inner.scale_;
    out.rotation_ = rotation_ * inner.rotation_;
    out.shift_ = scale_ * (rotation_ * inner.shift_) + shift_;
    return out;
  }

  // Bounding box of the image of a box; exact for rotations that permute axes.
  Box image(const Box& box) const {
    std::vector<Point> pts;
    for (const auto& c : box.corners()) pts.push_back((*this)(c));
    Point lo = pts.front();
    Point hi = pts.front();
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return Box(lo, hi);
  }

 private:
  double scale_ = 1.0;
  Matrix rotation_;
  Point shift_;
};

inline Point make_point(std::initializer_list<double> xs) {
  Point p(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) p[k++] = x;
  return p;
}

}  // namespace fracdev
