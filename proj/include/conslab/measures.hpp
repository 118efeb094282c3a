#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conslab/errors.hpp"
#include "conslab/rng.hpp"

namespace conslab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNormalizationTol = 1e-12;

// Finite dominating measure: an ordered set of sample-space locations with a
// strictly positive mass per cell. Immutable after construction; all measures
// of one experiment share a single grid so that density ratios are exact
// divisions of stored values.
class DominatingGrid {
public:
  DominatingGrid(std::vector<double> points, std::vector<double> cell_mass)
      : points_(std::move(points)), cell_mass_(std::move(cell_mass)) {
    if (points_.empty() || points_.size() != cell_mass_.size()) {
      throw DegenerateInputError("grid needs at least one point and matching cell masses");
    }
    for (double m : cell_mass_) {
      if (!(m > 0.0)) throw DegenerateInputError("grid cell masses must be strictly positive");
    }
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      if (points_[i] == points_[i + 1]) {
        throw DegenerateInputError("grid points must be distinct");
      }
    }
  }

  static std::shared_ptr<const DominatingGrid> unit_cells(std::vector<double> points) {
    std::vector<double> mass(points.size(), 1.0);
    return std::make_shared<const DominatingGrid>(std::move(points), std::move(mass));
  }

  // Consecutive integer locations 0..n-1 with unit masses.
  static std::shared_ptr<const DominatingGrid> integer_points(std::size_t n) {
    std::vector<double> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = static_cast<double>(i);
    return unit_cells(std::move(pts));
  }

  std::size_t size() const noexcept { return points_.size(); }
  double point(std::size_t i) const { return points_[i]; }
  double cell_mass(std::size_t i) const { return cell_mass_[i]; }
  const std::vector<double>& points() const noexcept { return points_; }
  const std::vector<double>& cell_masses() const noexcept { return cell_mass_; }

  bool same_as(const DominatingGrid& other) const {
    if (this == &other) return true;
    return points_ == other.points_ && cell_mass_ == other.cell_mass_;
  }

private:
  std::vector<double> points_;
  std::vector<double> cell_mass_;
};

using GridPtr = std::shared_ptr<const DominatingGrid>;

// Index of a grid cell; the sample space is the grid itself.
using Observation = std::size_t;
using ObservationSeq = std::vector<Observation>;

// Nonnegative density w.r.t. a DominatingGrid. Stores both values and their
// logarithms; likelihood arithmetic elsewhere runs on the logs so that
// products over samples in the hundreds do not underflow.
class GridDensity {
public:
  GridDensity(GridPtr grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw DegenerateInputError("density needs a grid");
    if (values_.size() != grid_->size()) {
      throw GridMismatchError("density value count does not match grid size");
    }
    log_values_.resize(values_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double v = values_[i];
      if (!(v >= 0.0)) throw DegenerateInputError("density values must be nonnegative");
      log_values_[i] = v > 0.0 ? std::log(v) : -kInf;
      total += v * grid_->cell_mass(i);
    }
    total_mass_ = total;
    normalized_ = std::abs(total - 1.0) <= kNormalizationTol;
  }

  const DominatingGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  double value(std::size_t i) const { return values_[i]; }
  double log_value(std::size_t i) const { return log_values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<double>& log_values() const noexcept { return log_values_; }
  bool normalized() const noexcept { return normalized_; }
  double total_mass() const noexcept { return total_mass_; }
  bool positive_at(std::size_t i) const { return values_[i] > 0.0; }

private:
  GridPtr grid_;
  std::vector<double> values_;
  std::vector<double> log_values_;
  double total_mass_ = 0.0;
  bool normalized_ = false;
};

inline void require_same_grid(const GridDensity& a, const GridDensity& b) {
  if (a.grid_ptr().get() == b.grid_ptr().get()) return;
  if (!a.grid().same_as(b.grid())) {
    throw GridMismatchError("densities live on incompatible grids");
  }
}

// Statistical distance selector. matusita carries its order r >= 1;
// matusita(2) coincides with the Hellinger distance under the convention
// H^2 = sum (sqrt p - sqrt q)^2 * cell_mass (range [0, sqrt 2]).
class DivergenceKind {
public:
  enum class Kind { hellinger, total_variation, kl, matusita };

  static DivergenceKind hellinger() { return DivergenceKind(Kind::hellinger, 2.0); }
  static DivergenceKind total_variation() { return DivergenceKind(Kind::total_variation, 0.0); }
  static DivergenceKind kl() { return DivergenceKind(Kind::kl, 0.0); }
  static DivergenceKind matusita(double r) {
    if (!(r >= 1.0)) throw DomainError("matusita order must satisfy r >= 1");
    return DivergenceKind(Kind::matusita, r);
  }

  Kind kind() const noexcept { return kind_; }
  double r() const noexcept { return r_; }

  std::string name() const {
    switch (kind_) {
      case Kind::hellinger: return "hellinger";
      case Kind::total_variation: return "total_variation";
      case Kind::kl: return "kl";
      case Kind::matusita: return "matusita(" + std::to_string(r_) + ")";
    }
    return "?";
  }

private:
  DivergenceKind(Kind k, double r) : kind_(k), r_(r) {}
  Kind kind_;
  double r_;
};

// Rescales a density to total mass one; zero cells stay exactly zero.
inline GridDensity normalize(const GridDensity& d) {
  const double total = d.total_mass();
  if (!(total > 0.0)) throw DegenerateInputError("cannot normalize an all-zero density");
  std::vector<double> values = d.values();
  for (double& v : values) v /= total;
  return GridDensity(d.grid_ptr(), std::move(values));
}

// True iff every point where p > 0 also has q > 0.
inline bool support_subset(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p, q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.value(i) > 0.0 && !(q.value(i) > 0.0)) return false;
  }
  return true;
}

inline double hellinger_distance(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p, q);
  double h2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p.value(i)) - std::sqrt(q.value(i));
    h2 += d * d * p.grid().cell_mass(i);
  }
  return std::sqrt(std::max(0.0, h2));
}

inline double total_variation_distance(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += std::abs(p.value(i) - q.value(i)) * p.grid().cell_mass(i);
  }
  return 0.5 * s;
}

// KL(P||Q) = sum_{p>0} p log(p/q) cell_mass, with 0 log(0/q) := 0 and +inf
// on support mismatch (needed explicitly by the fixed-width counterexample).
inline double kl_divergence(const GridDensity& p, const GridDensity& q) {
  require_same_grid(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pv = p.value(i);
    if (pv == 0.0) continue;
    const double qv = q.value(i);
    if (qv == 0.0) return kInf;
    s += pv * (p.log_value(i) - q.log_value(i)) * p.grid().cell_mass(i);
  }
  return std::max(0.0, s);
}

inline double matusita_distance(const GridDensity& p, const GridDensity& q, double r) {
  require_same_grid(p, q);
  if (!(r >= 1.0)) throw DomainError("matusita order must satisfy r >= 1");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::abs(std::pow(p.value(i), 1.0 / r) - std::pow(q.value(i), 1.0 / r));
    s += std::pow(d, r) * p.grid().cell_mass(i);
  }
  return std::pow(s, 1.0 / r);
}

inline double divergence(const DivergenceKind& kind, const GridDensity& p, const GridDensity& q) {
  switch (kind.kind()) {
    case DivergenceKind::Kind::hellinger: return hellinger_distance(p, q);
    case DivergenceKind::Kind::total_variation: return total_variation_distance(p, q);
    case DivergenceKind::Kind::kl: return kl_divergence(p, q);
    case DivergenceKind::Kind::matusita: return matusita_distance(p, q, kind.r());
  }
  throw DomainError("unknown divergence kind");
}

// Pointwise convex combination of densities on one grid.
inline GridDensity mixture(std::span<const double> weights, std::span<const GridDensity> components) {
  if (weights.size() != components.size()) {
    throw DegenerateInputError("mixture weight/component count mismatch");
  }
  if (components.empty()) throw DegenerateInputError("mixture needs at least one component");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DegenerateInputError("mixture weights must be nonnegative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > kNormalizationTol) {
    throw DegenerateInputError("mixture weights must sum to one");
  }
  const GridPtr grid = components[0].grid_ptr();
  for (std::size_t j = 1; j < components.size(); ++j) {
    require_same_grid(components[0], components[j]);
  }
  std::vector<double> values(grid->size(), 0.0);
  for (std::size_t j = 0; j < components.size(); ++j) {
    const double w = weights[j];
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] += w * components[j].value(i);
    }
  }
  return GridDensity(grid, std::move(values));
}

inline GridDensity mixture(const std::vector<double>& weights, const std::vector<GridDensity>& components) {
  return mixture(std::span<const double>(weights), std::span<const GridDensity>(components));
}

// Cumulative masses of a normalized density, for inverse-CDF sampling.
inline std::vector<double> cumulative_masses(const GridDensity& p) {
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p.value(i) * p.grid().cell_mass(i);
    cdf[i] = acc;
  }
  return cdf;
}

inline Observation sample_one(const std::vector<double>& cdf, CounterRng& rng) {
  const double total = cdf.back();
  const double u = rng.uniform01() * total;
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<Observation>(it - cdf.begin());
}

// n i.i.d. draws by inverse CDF over cell masses; deterministic per stream.
inline ObservationSeq sample(const GridDensity& p, std::size_t n, CounterRng& rng) {
  if (!p.normalized()) throw DegenerateInputError("sampling requires a normalized density");
  ObservationSeq out;
  out.reserve(n);
  const std::vector<double> cdf = cumulative_masses(p);
  for (std::size_t k = 0; k < n; ++k) out.push_back(sample_one(cdf, rng));
  return out;
}

inline ObservationSeq sample(const GridDensity& p, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  return sample(p, n, rng);
}

}  // namespace conslab
