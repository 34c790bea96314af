#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fracdev/fields.hpp"
#include "fracdev/stats.hpp"

using namespace fracdev;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<Point> random_cloud(std::mt19937_64& rng, std::size_t count, int dim, double lo,
                                double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < count; ++i) {
    Point p(dim);
    for (int k = 0; k < dim; ++k) p[k] = u(rng);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

TEST(Kernel, Parse) {
  EXPECT_EQ(Kernel::parse("bm", 1).hurst(), 0.5);
  EXPECT_EQ(Kernel::parse("fbm:0.3", 2).hurst(), 0.3);
  EXPECT_EQ(Kernel::parse("fbm:0.3", 2).dim(), 2);
  EXPECT_EQ(Kernel::parse("sheet", 2).family(), KernelFamily::brownian_sheet);
  EXPECT_EQ(Kernel::parse("fbm:0.25", 1).describe(), "fbm:0.25");
  EXPECT_THROW(Kernel::parse("fbm:1.5", 1), ValidationError);
  EXPECT_THROW(Kernel::parse("fbm:x", 1), ValidationError);
  EXPECT_THROW(Kernel::parse("ou", 1), ValidationError);
}

TEST(Gram, Examples) {
  const auto bm = Kernel::fbm(0.5, 1);
  const std::vector<Point> one = {make_point({1.0})};
  EXPECT_DOUBLE_EQ(gram(bm, one)(0, 0), 1.0);
  const auto f = Kernel::fbm(0.3, 2);
  const std::vector<Point> with_zero = {make_point({0.0, 0.0}), make_point({0.4, 1.0}),
                                        make_point({2.0, -1.0})};
  const Matrix g = gram(f, with_zero);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(g(0, k), 0.0);
    EXPECT_EQ(g(k, 0), 0.0);
  }
  const auto sheet = Kernel::brownian_sheet(2);
  EXPECT_DOUBLE_EQ(sheet(make_point({1.0, 2.0}), make_point({2.0, 1.0})), 1.0);
  EXPECT_THROW(gram(sheet, std::vector<Point>{make_point({-0.1, 1.0})}), ValidationError);
}

TEST(Gram, SymmetricAndPsd) {
  std::mt19937_64 rng(1);
  for (const auto& kernel : {Kernel::fbm(0.2, 1), Kernel::fbm(0.5, 2), Kernel::fbm(0.8, 2),
                             Kernel::brownian_sheet(2)}) {
    for (std::size_t n : {16, 128, 512}) {
      const auto pts = random_cloud(rng, n, kernel.dim(), 0.0, 2.0);
      const Matrix g = gram(kernel, pts);
      EXPECT_TRUE(g == g.transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * eig.eigenvalues().maxCoeff());
      EXPECT_NO_THROW(factorize(g));
    }
  }
}

TEST(Gram, FbmIncrementVariance) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (double H : {0.1, 0.5, 0.9}) {
    const auto k = Kernel::fbm(H, 2);
    for (int trial = 0; trial < 100; ++trial) {
      const Point s = make_point({u(rng), u(rng)});
      const Point t = make_point({u(rng), u(rng)});
      const double var = k(s, s) + k(t, t) - 2.0 * k(s, t);
      EXPECT_NEAR(var, std::pow((t - s).norm(), 2.0 * H), 1e-12);
    }
  }
}

TEST(Sample, SinglePointVariance) {
  const auto batch = sample(Kernel::fbm(0.5, 1), {make_point({1.0})}, 100000, 7);
  const auto v = batch.values.col(0);
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
  EXPECT_GE(var, 0.98);
  EXPECT_LE(var, 1.02);
  EXPECT_EQ(batch.jitter_used, 0.0);
}

TEST(Sample, DuplicatedPointUsesJitter) {
  const auto batch =
      sample(Kernel::fbm(0.5, 1), {make_point({0.7}), make_point({0.7})}, 2000, 3);
  EXPECT_GT(batch.jitter_used, 0.0);
  for (Eigen::Index r = 0; r < batch.values.rows(); ++r) {
    EXPECT_NEAR(batch.values(r, 0), batch.values(r, 1), 1e-4);
  }
}

TEST(Sample, ValidationAndDeterminism) {
  const std::vector<Point> pts = {make_point({0.5}), make_point({1.0})};
  EXPECT_THROW(sample(Kernel::fbm(0.5, 1), pts, 0, 1), ValidationError);
  const auto a = sample(Kernel::fbm(0.5, 1), pts, 9000, 11, 1);
  const auto b = sample(Kernel::fbm(0.5, 1), pts, 9000, 11, 4);
  EXPECT_TRUE(a.values == b.values);
  const auto c = sample(Kernel::fbm(0.5, 1), pts, 9000, 12, 1);
  EXPECT_FALSE(a.values == c.values);
}

TEST(Sample, EmpiricalCovariance) {
  std::mt19937_64 rng(4);
  const auto pts = random_cloud(rng, 12, 2, 0.0, 1.0);
  const auto k = Kernel::fbm(0.4, 2);
  const std::size_t reps = 20000;
  const auto batch = sample(k, pts, reps, 21, 2);
  const Matrix g = gram(k, pts);
  const Matrix emp = batch.values.transpose() * batch.values / static_cast<double>(reps);
  const double bound = 5.0 * g.diagonal().maxCoeff() / std::sqrt(static_cast<double>(reps));
  EXPECT_LE((emp - g).cwiseAbs().maxCoeff(), bound);
}

TEST(Sample, KolmogorovSmirnovFirstCoordinate) {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto k = Kernel::fbm(0.7, 1);
    const std::vector<Point> pts = {make_point({1.3}), make_point({0.2})};
    const auto batch = sample(k, pts, 10000, seed);
    std::vector<double> z;
    const double sd = std::sqrt(k.variance(pts[0]));
    for (Eigen::Index r = 0; r < batch.values.rows(); ++r) z.push_back(batch.values(r, 0) / sd);
    std::sort(z.begin(), z.end());
    double d = 0.0;
    const auto n = static_cast<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double f = normal_cdf(z[i]);
      d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    // Asymptotic critical value at significance 1e-3.
    EXPECT_LT(d, 1.9495 / std::sqrt(n)) << "seed " << seed;
  }
}

TEST(Sample, CsvDump) {
  const auto batch = sample(Kernel::fbm(0.5, 1), {make_point({1.0}), make_point({2.0})}, 2, 5);
  std::ostringstream os;
  write_samples_csv(os, batch);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "rep,site_index,value");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(ConditionalVariance, Examples) {
  const auto bm = Kernel::fbm(0.5, 1);
  EXPECT_NEAR(conditional_variance(bm, make_point({1.0}), {make_point({0.5})}), 0.5, 1e-14);
  const auto f = Kernel::fbm(0.3, 1);
  EXPECT_NEAR(conditional_variance(f, make_point({2.0}), {}), std::pow(2.0, 0.6), 1e-14);
  EXPECT_THROW(conditional_variance(bm, make_point({1.0}), {make_point({1.0})}), ValidationError);
}

TEST(ConditionalVariance, DenseConditioningShrinks) {
  const auto f = Kernel::fbm(0.6, 1);
  const Point t = make_point({1.0});
  double last = kInfinity;
  for (double h : {0.2, 0.1, 0.05, 0.02, 0.01}) {
    std::vector<Point> cond;
    for (double s = h; s < 2.0 + 1e-12; s += h) {
      if (std::abs(s - 1.0) > 1e-9) cond.push_back(make_point({s}));
    }
    const double v = conditional_variance(f, t, cond);
    EXPECT_LT(v, last);
    last = v;
  }
  EXPECT_LT(last, 0.01);
}

TEST(ConditionalVariance, AntitoneInConditioningSet) {
  std::mt19937_64 rng(8);
  for (const auto& k : {Kernel::fbm(0.3, 1), Kernel::fbm(0.7, 2), Kernel::brownian_sheet(2)}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto pts = random_cloud(rng, 40, k.dim(), 0.05, 1.5);
      const Point t = pts.front();
      std::vector<Point> cond;
      double last = conditional_variance(k, t, cond);
      for (std::size_t i = 1; i < pts.size(); ++i) {
        cond.push_back(pts[i]);
        const double v = conditional_variance(k, t, cond);
        EXPECT_LE(v, last + 1e-10 * k.variance(t));
        last = v;
      }
    }
  }
}

TEST(ConditionalVariance, BrownianMarkovProperty) {
  const auto bm = Kernel::fbm(0.5, 1);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ut(0.5, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double t = ut(rng);
    const double tau = std::uniform_real_distribution<double>(0.01, t - 0.1)(rng);
    std::vector<Point> cond = {make_point({t - tau})};
    for (double s = 0.01; s < t - tau; s += 0.037) cond.push_back(make_point({s}));
    EXPECT_NEAR(conditional_variance(bm, make_point({t}), cond), tau, 1e-10);
  }
}

TEST(Nondeterminism, Examples) {
  const auto bm = Kernel::fbm(0.5, 1);
  const auto one = nondeterminism_profile(bm, {{make_point({1.0})}}, {1.0}, 2.0);
  EXPECT_NEAR(one.V, 1.0, 1e-14);
  const auto two =
      nondeterminism_profile(bm, {{make_point({0.5})}, {make_point({1.0})}}, {0.5, 0.5}, 2.0);
  EXPECT_NEAR(two.v[0], std::sqrt(0.5) * std::sqrt(0.5), 1e-14);
  EXPECT_NEAR(two.v[1], 0.5, 1e-14);
  EXPECT_NEAR(two.tau[1], 0.5, 1e-15);
  EXPECT_NEAR(two.V, 0.5, 1e-14);
}

TEST(Nondeterminism, EmptyCellSkipped) {
  const auto bm = Kernel::fbm(0.5, 1);
  const auto p =
      nondeterminism_profile(bm, {{make_point({0.5})}, {}, {make_point({1.0})}}, {0.5, 0.0, 0.5}, 2.0);
  EXPECT_TRUE(std::isnan(p.v[1]));
  EXPECT_EQ(p.warnings.size(), 1U);
  EXPECT_NEAR(p.V, 0.5, 1e-14);
}

TEST(Nondeterminism, FbmSlopeAwayFromOrigin) {
  // Grid on [1, 2]; v(t, tau) ~ tau^H for interior t.
  for (double H : {0.3, 0.5, 0.7}) {
    const auto k = Kernel::fbm(H, 1);
    std::vector<Point> grid;
    for (int i = 0; i <= 400; ++i) grid.push_back(make_point({1.0 + i / 400.0}));
    const Point t = make_point({1.5});
    std::vector<double> taus;
    std::vector<double> vs;
    for (double tau : {0.02, 0.04, 0.08, 0.16}) {
      std::vector<Point> cond;
      for (const auto& s : grid) {
        if (std::abs(s[0] - t[0]) >= tau - 1e-12) cond.push_back(s);
      }
      taus.push_back(tau);
      vs.push_back(std::sqrt(conditional_variance(k, t, cond)));
    }
    const auto fit = fit_loglog(taus, vs);
    EXPECT_NEAR(fit.slope, H, 0.1) << "H=" << H;
  }
}
