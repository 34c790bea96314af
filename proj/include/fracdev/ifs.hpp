#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "fracdev/error.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/rng.hpp"
#include "fracdev/roots.hpp"

namespace fracdev {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Finite family of contractive similarities with probability weights and a box
// that the user asserts satisfies the strong open set condition.
class SelfSimilarSystem {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  SelfSimilarSystem(std::vector<Similarity> maps, std::vector<double> weights, Box omega)
      : maps_(std::move(maps)), weights_(std::move(weights)), omega_(std::move(omega)) {
    validate();
  }

  // rho_j = lambda_j^D, with D the similarity dimension.
  static SelfSimilarSystem with_hausdorff_weights(std::vector<Similarity> maps, Box omega);

  int dim() const { return omega_.dim(); }
  std::size_t size() const { return maps_.size(); }
  const std::vector<Similarity>& maps() const { return maps_; }
  const std::vector<double>& weights() const { return weights_; }
  const Box& omega() const { return omega_; }

  std::vector<double> scales() const {
    std::vector<double> out;
    out.reserve(maps_.size());
    for (const auto& m : maps_) out.push_back(m.scale());
    return out;
  }

  // Conjugate by x -> x + offset: the attractor and measure move by offset.
  SelfSimilarSystem translated(const Point& offset) const {
    std::vector<Similarity> moved;
    moved.reserve(maps_.size());
    for (const auto& m : maps_) {
      // S'(y) = S(y - v) + v
      Point shift = m.shift() + offset - m.scale() * (m.rotation() * offset);
      moved.emplace_back(m.scale(), m.rotation(), std::move(shift));
    }
    return SelfSimilarSystem(std::move(moved), weights_,
                             Box(omega_.lo() + offset, omega_.hi() + offset));
  }

 private:
  void validate() const {
    if (maps_.empty()) throw ValidationError("system: at least one map is required");
    const int n = omega_.dim();
    if (n <= 0) throw ValidationError("system: omega box is missing");
    for (const auto& m : maps_) {
      if (m.dim() != n) throw ValidationError("system: map dimension differs from omega");
      if (!(m.scale() < 1.0)) throw ValidationError("system: every scale must be < 1");
    }
    if (weights_.size() != maps_.size()) {
      throw ValidationError("system: need one weight per map");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw ValidationError("system: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > kWeightTolerance) {
      throw ValidationError("system: weights must sum to 1 (got " + std::to_string(total) + ")");
    }
    double volume = 0.0;
    for (const auto& m : maps_) volume += std::pow(m.scale(), n);
    if (volume > 1.0 + 1e-12) {
      throw ValidationError("system: sum of scale^N exceeds 1 (" + std::to_string(volume) + ")");
    }
    const double tol = 1e-12 * (1.0 + omega_.hi().cwiseAbs().maxCoeff() +
                                omega_.lo().cwiseAbs().maxCoeff());
    std::vector<Box> images;
    for (std::size_t j = 0; j < maps_.size(); ++j) {
      for (const auto& c : omega_.corners()) {
        if (!omega_.contains(maps_[j](c), tol)) {
          throw ValidationError("system: map " + std::to_string(j + 1) +
                                " sends a corner of omega outside omega");
        }
      }
      images.push_back(maps_[j].image(omega_));
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (std::size_t j = i + 1; j < images.size(); ++j) {
        if (images[i].interior_overlaps(images[j], tol)) {
          throw ValidationError("system: images of omega under maps " + std::to_string(i + 1) +
                                " and " + std::to_string(j + 1) + " overlap");
        }
      }
    }
  }

  std::vector<Similarity> maps_;
  std::vector<double> weights_;
  Box omega_;
};

namespace detail {

inline void require_nondegenerate(std::size_t m) {
  if (m < 2) throw ValidationError("degenerate system: at least two maps are required");
}

inline void require_hq(double H, double q) {
  if (!(H > 0.0 && H <= 1.0)) throw ValidationError("H must lie in (0, 1]");
  if (!(q >= 1.0)) throw ValidationError("q must be >= 1 (or inf)");
}

// Unique D > 0 with sum scale^D = 1, searched in (0, upper].
inline double dimension_from_scales(const std::vector<double>& scales, double upper) {
  require_nondegenerate(scales.size());
  auto f = [&](double d) {
    double s = 0.0;
    for (double l : scales) s += std::pow(l, d);
    return s - 1.0;
  };
  auto df = [&](double d) {
    double s = 0.0;
    for (double l : scales) s += std::pow(l, d) * std::log(l);
    return s;
  };
  while (f(upper) > 0.0) upper *= 2.0;
  return bracketed_root(f, df, 1e-300, upper);
}

// d_j = -log(lambda_j^H rho_j^{1/q}); q may be infinite.
inline std::vector<double> log_depths(const SelfSimilarSystem& system, double H, double q) {
  std::vector<double> d;
  d.reserve(system.size());
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  for (std::size_t j = 0; j < system.size(); ++j) {
    d.push_back(-(H * std::log(system.maps()[j].scale()) + inv_q * std::log(system.weights()[j])));
  }
  return d;
}

}  // namespace detail

inline SelfSimilarSystem SelfSimilarSystem::with_hausdorff_weights(std::vector<Similarity> maps,
                                                                   Box omega) {
  std::vector<double> scales;
  for (const auto& m : maps) scales.push_back(m.scale());
  std::vector<double> weights;
  if (scales.size() == 1) {
    weights = {1.0};
  } else {
    const double d = detail::dimension_from_scales(scales, static_cast<double>(omega.dim()));
    double total = 0.0;
    for (double l : scales) {
      weights.push_back(std::pow(l, d));
      total += weights.back();
    }
    for (double& w : weights) w /= total;
  }
  return SelfSimilarSystem(std::move(maps), std::move(weights), std::move(omega));
}

// ---------------------------------------------------------------------------
// Words

struct Word {
  std::vector<std::uint32_t> indices;  // zero-based map indices
  double scale = 1.0;                  // product of map scales
  double mass = 1.0;                   // product of weights
  double weight = 1.0;                 // scale^H * mass^{1/q}
};

inline Word make_word(const SelfSimilarSystem& system, std::vector<std::uint32_t> indices,
                      double H, double q) {
  Word w;
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  for (auto i : indices) {
    if (i >= system.size()) throw ValidationError("word: index out of range");
    const double l = system.maps()[i].scale();
    const double r = system.weights()[i];
    w.scale *= l;
    w.mass *= r;
    w.weight *= std::pow(l, H) * std::pow(r, inv_q);
  }
  w.indices = std::move(indices);
  return w;
}

// One-based, dot separated; the empty word prints as "-".
inline std::string to_string(const Word& w) {
  if (w.indices.empty()) return "-";
  std::string out;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    if (k) out += '.';
    out += std::to_string(w.indices[k] + 1);
  }
  return out;
}

// S_{i_1} o ... o S_{i_p}.
inline Similarity compose(const SelfSimilarSystem& system,
                          const std::vector<std::uint32_t>& indices) {
  Similarity out = Similarity::identity(system.dim());
  for (auto i : indices) {
    if (i >= system.size()) throw ValidationError("compose: index out of range");
    out = out.then_after(system.maps()[i]);
  }
  return out;
}

inline Similarity compose(const SelfSimilarSystem& system, const Word& word) {
  return compose(system, word.indices);
}

// ---------------------------------------------------------------------------
// Critical exponents

inline double similarity_dimension(const SelfSimilarSystem& system) {
  return detail::dimension_from_scales(system.scales(), static_cast<double>(system.dim()));
}

// Root gamma of sum lambda_j^{H gamma} rho_j^{gamma/q} = 1 with no restriction
// relative to q.
inline double mixed_exponent(const SelfSimilarSystem& system, double H, double q) {
  detail::require_nondegenerate(system.size());
  detail::require_hq(H, q);
  const auto d = detail::log_depths(system, H, q);
  auto f = [&](double g) {
    double s = 0.0;
    for (double dj : d) s += std::exp(-g * dj);
    return s - 1.0;
  };
  auto df = [&](double g) {
    double s = 0.0;
    for (double dj : d) s -= dj * std::exp(-g * dj);
    return s;
  };
  double upper = std::isinf(q) ? 1.0 : q;
  while (f(upper) > 0.0) upper *= 2.0;
  return bracketed_root(f, df, 1e-300, upper);
}

struct GammaResult {
  double gamma = 0.0;
  double rate = 0.0;      // gamma q / (q - gamma)
  double residual = 0.0;  // |sum lambda^{H gamma} rho^{gamma/q} - 1|
};

inline GammaResult gamma_exponent(const SelfSimilarSystem& system, double H, double q) {
  if (std::isinf(q)) throw ValidationError("gamma_exponent: q must be finite");
  GammaResult out;
  out.gamma = mixed_exponent(system, H, q);
  double s = 0.0;
  for (std::size_t j = 0; j < system.size(); ++j) {
    s += std::pow(system.maps()[j].scale(), H * out.gamma) *
         std::pow(system.weights()[j], out.gamma / q);
  }
  out.residual = std::abs(s - 1.0);
  if (out.gamma >= q - 1e-9) {
    throw ValidationError("rate exponent undefined: gamma = " + std::to_string(out.gamma) +
                          " is not below q = " + std::to_string(q));
  }
  out.rate = out.gamma * q / (q - out.gamma);
  return out;
}

// ---------------------------------------------------------------------------
// Level-s word covers

inline constexpr std::size_t kDefaultWordCap = 10'000'000;

// Words alpha with Lambda(alpha) <= e^{-s} < Lambda(parent), in lexicographic
// order. Together they form a complete prefix-free code whose cells cover the
// attractor.
inline std::vector<Word> enumerate_level_words(const SelfSimilarSystem& system, double H, double q,
                                               double s, std::size_t cap = kDefaultWordCap) {
  if (!(s > 0.0)) throw ValidationError("enumerate_level_words: s must be positive");
  const double gamma = mixed_exponent(system, H, q);
  const double estimate = std::ceil(std::exp(gamma * s));
  if (estimate > static_cast<double>(cap)) {
    throw ValidationError("cover too large: estimated l(s) = " + std::to_string(estimate) +
                          " exceeds cap " + std::to_string(cap));
  }
  const auto d = detail::log_depths(system, H, q);
  const auto m = static_cast<std::uint32_t>(system.size());

  struct Frame {
    std::vector<std::uint32_t> indices;
    double depth;
  };
  std::vector<Frame> stack;
  stack.push_back({{}, 0.0});
  std::vector<Word> out;
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    if (!f.indices.empty() && f.depth >= s) {
      if (out.size() == cap) {
        throw ValidationError("cover too large: more than " + std::to_string(cap) +
                              " words at s = " + std::to_string(s));
      }
      out.push_back(make_word(system, std::move(f.indices), H, q));
      continue;
    }
    for (std::uint32_t j = m; j-- > 0;) {
      Frame child{f.indices, f.depth + d[j]};
      child.indices.push_back(j);
      stack.push_back(std::move(child));
    }
  }
  return out;
}

// Walks the nested sequence of level-s covers in order of increasing s by
// splitting, at each step, every cell of currently maximal weight.
class CoverRefiner {
 public:
  CoverRefiner(const SelfSimilarSystem& system, double H, double q)
      : system_(&system), H_(H), q_(q) {
    detail::require_nondegenerate(system.size());
    detail::require_hq(H, q);
    depths_ = detail::log_depths(system, H, q);
    split({Cell{{}, 0.0}});
  }

  std::size_t size() const { return alive_; }

  // Some s whose level cover equals the current cover.
  double level() const { return 0.5 * (split_depth_ + next_depth()); }

  // Range (lo, hi] of s producing the current cover.
  std::pair<double, double> level_range() const { return {split_depth_, next_depth()}; }

  // Number of cells after the next refine(), without performing it.
  std::size_t next_size() const {
    const double target = next_depth();
    std::size_t ties = 0;
    for (const auto& c : cells_) {
      if (c.alive && c.depth <= target + tie_tolerance(target)) ++ties;
    }
    return alive_ + ties * (system_->size() - 1);
  }

  void refine() {
    const double target = next_depth();
    std::vector<Cell> to_split;
    while (!heap_.empty()) {
      auto [depth, idx] = heap_.top();
      if (depth > target + tie_tolerance(target)) break;
      heap_.pop();
      cells_[idx].alive = false;
      --alive_;
      split_depth_ = std::max(split_depth_, depth);
      to_split.push_back(cells_[idx]);
    }
    split(to_split);
  }

  std::vector<Word> words() const {
    std::vector<Word> out;
    out.reserve(alive_);
    for (const auto& c : cells_) {
      if (c.alive) out.push_back(make_word(*system_, c.indices, H_, q_));
    }
    std::sort(out.begin(), out.end(),
              [](const Word& a, const Word& b) { return a.indices < b.indices; });
    return out;
  }

  // Visits (depth, scale, mass) of every live cell.
  template <class Fn>
  void for_each_cell(Fn&& fn) const {
    for (const auto& c : cells_) {
      if (c.alive) fn(c);
    }
  }

  struct Cell {
    std::vector<std::uint32_t> indices;
    double depth = 0.0;
    bool alive = true;
  };

 private:
  static double tie_tolerance(double depth) { return 1e-12 * std::max(1.0, depth); }

  double next_depth() const { return heap_.empty() ? kInfinity : heap_.top().first; }

  void split(const std::vector<Cell>& parents) {
    for (const auto& p : parents) {
      for (std::uint32_t j = 0; j < system_->size(); ++j) {
        Cell c{p.indices, p.depth + depths_[j], true};
        c.indices.push_back(j);
        heap_.emplace(c.depth, cells_.size());
        cells_.push_back(std::move(c));
        ++alive_;
      }
    }
  }

  const SelfSimilarSystem* system_;
  double H_;
  double q_;
  std::vector<double> depths_;
  std::vector<Cell> cells_;
  std::priority_queue<std::pair<double, std::size_t>, std::vector<std::pair<double, std::size_t>>,
                      std::greater<>>
      heap_;
  std::size_t alive_ = 0;
  double split_depth_ = 0.0;
};

// Smallest level s (as a representative of its cover) with at least
// min_cells cells.
inline double level_for_min_cells(const SelfSimilarSystem& system, double H, double q,
                                  std::size_t min_cells, std::size_t cap = kDefaultWordCap) {
  CoverRefiner refiner(system, H, q);
  while (refiner.size() < min_cells) {
    if (refiner.next_size() > cap) throw ValidationError("cover too large for requested cells");
    refiner.refine();
  }
  return refiner.level();
}

// ---------------------------------------------------------------------------
// Sampling the self-similar measure

namespace detail {

inline std::size_t pick_map(const std::vector<double>& cumulative, Engine& engine) {
  const double u = uniform01(engine) * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

// Chaos-game trajectory started at the center of omega.
class ChaosGame {
 public:
  ChaosGame(const SelfSimilarSystem& system, std::uint64_t seed, std::size_t burn_in)
      : system_(&system), engine_(make_engine(seed, 0)), x_(system.omega().center()) {
    std::partial_sum(system.weights().begin(), system.weights().end(),
                     std::back_inserter(cumulative_));
    for (std::size_t k = 0; k < burn_in; ++k) step();
  }

  const Point& step() {
    x_ = system_->maps()[pick_map(cumulative_, engine_)](x_);
    return x_;
  }

 private:
  const SelfSimilarSystem* system_;
  Engine engine_;
  std::vector<double> cumulative_;
  Point x_;
};

}  // namespace detail

inline constexpr std::size_t kDefaultBurnIn = 64;

inline Measure sample_measure(const SelfSimilarSystem& system, std::size_t count,
                              std::uint64_t seed, std::size_t burn_in = kDefaultBurnIn) {
  if (count == 0) throw ValidationError("sample_measure: count must be >= 1");
  detail::require_nondegenerate(system.size());
  detail::ChaosGame game(system, seed, burn_in);
  Measure out;
  out.reserve(count);
  const double mass = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({game.step(), mass});
  return out;
}

// Exact cell masses from the level-s cover, chaos-game positions inside each cell.
inline Measure stratified_sample(const SelfSimilarSystem& system, double H, double q, double s,
                                 std::size_t points_per_cell, std::uint64_t seed,
                                 std::size_t burn_in = kDefaultBurnIn,
                                 std::size_t cap = kDefaultWordCap) {
  if (points_per_cell == 0) throw ValidationError("empty stratum: points_per_cell must be >= 1");
  const auto words = enumerate_level_words(system, H, q, s, cap);
  detail::ChaosGame game(system, seed, burn_in);
  Measure out;
  out.reserve(words.size() * points_per_cell);
  for (const auto& w : words) {
    const Similarity cell = compose(system, w);
    const double mass = w.mass / static_cast<double>(points_per_cell);
    for (std::size_t k = 0; k < points_per_cell; ++k) out.push_back({cell(game.step()), mass});
  }
  return out;
}

// Fixed point of the first map; it lies on the attractor.
inline Point attractor_anchor(const SelfSimilarSystem& system) {
  const auto& s = system.maps().front();
  const int n = system.dim();
  const Matrix a = Matrix::Identity(n, n) - s.scale() * s.rotation();
  return a.fullPivLu().solve(s.shift());
}

// Deterministic atomic approximation: one atom S_alpha(anchor) of mass rho_alpha
// per cell of the smallest geometric cover (cells of comparable diameter) with
// at least min_atoms cells.
inline Measure discretize(const SelfSimilarSystem& system, std::size_t min_atoms) {
  if (min_atoms == 0) throw ValidationError("discretize: min_atoms must be >= 1");
  CoverRefiner refiner(system, 1.0, kInfinity);
  while (refiner.size() < min_atoms) refiner.refine();
  const Point anchor = attractor_anchor(system);
  Measure out;
  for (const auto& w : refiner.words()) out.push_back({compose(system, w)(anchor), w.mass});
  return out;
}

// ---------------------------------------------------------------------------
// Shipped example systems

namespace builtin {

inline SelfSimilarSystem cantor() {
  return SelfSimilarSystem::with_hausdorff_weights(
      {Similarity::scaling(1.0 / 3.0, make_point({0.0})),
       Similarity::scaling(1.0 / 3.0, make_point({2.0 / 3.0}))},
      Box::unit(1));
}

inline SelfSimilarSystem sierpinski() {
  return SelfSimilarSystem::with_hausdorff_weights(
      {Similarity::scaling(0.5, make_point({0.0, 0.0})),
       Similarity::scaling(0.5, make_point({0.5, 0.0})),
       Similarity::scaling(0.5, make_point({0.0, 0.5}))},
      Box::unit(2));
}

inline SelfSimilarSystem vicsek() {
  const double a = 1.0 / 3.0;
  const double b = 2.0 / 3.0;
  return SelfSimilarSystem::with_hausdorff_weights(
      {Similarity::scaling(a, make_point({0.0, 0.0})), Similarity::scaling(a, make_point({b, 0.0})),
       Similarity::scaling(a, make_point({a, a})), Similarity::scaling(a, make_point({0.0, b})),
       Similarity::scaling(a, make_point({b, b}))},
      Box::unit(2));
}

inline SelfSimilarSystem lebesgue_interval() {
  return SelfSimilarSystem::with_hausdorff_weights(
      {Similarity::scaling(0.5, make_point({0.0})), Similarity::scaling(0.5, make_point({0.5}))},
      Box::unit(1));
}

inline SelfSimilarSystem lebesgue_square() {
  return SelfSimilarSystem::with_hausdorff_weights(
      {Similarity::scaling(0.5, make_point({0.0, 0.0})),
       Similarity::scaling(0.5, make_point({0.5, 0.0})),
       Similarity::scaling(0.5, make_point({0.0, 0.5})),
       Similarity::scaling(0.5, make_point({0.5, 0.5}))},
      Box::unit(2));
}

inline std::vector<std::string> names() {
  return {"cantor", "sierpinski", "vicsek", "lebesgue-interval", "lebesgue-square"};
}

inline std::optional<SelfSimilarSystem> by_name(const std::string& name) {
  if (name == "cantor") return cantor();
  if (name == "sierpinski") return sierpinski();
  if (name == "vicsek") return vicsek();
  if (name == "lebesgue-interval") return lebesgue_interval();
  if (name == "lebesgue-square") return lebesgue_square();
  return std::nullopt;
}

}  // namespace builtin

}  // namespace fracdev
