#pragma once

#include <cstdint>
#include <vector>

#include "conslab/measures.hpp"
#include "conslab/rng.hpp"

namespace testutil {

using conslab::CounterRng;
using conslab::GridDensity;
using conslab::GridPtr;

// Random normalized density on the given grid, bounded away from zero
// (min cell density ~ 1e-3 on grids up to 16 unit cells).
inline GridDensity random_density(const GridPtr& grid, CounterRng& rng) {
  std::vector<double> v(grid->size());
  for (double& x : v) x = 0.05 + rng.uniform01();
  return conslab::normalize(GridDensity(grid, std::move(v)));
}

// Random density with zeros allowed (each cell emptied with probability
// p_zero); at least one cell stays positive.
inline GridDensity random_density_with_zeros(const GridPtr& grid, CounterRng& rng,
                                             double p_zero) {
  std::vector<double> v(grid->size(), 0.0);
  bool any = false;
  for (double& x : v) {
    if (rng.uniform01() >= p_zero) {
      x = 0.05 + rng.uniform01();
      any = true;
    }
  }
  if (!any) v[0] = 1.0;
  return conslab::normalize(GridDensity(grid, std::move(v)));
}

inline GridPtr random_grid(CounterRng& rng, std::size_t max_points = 16) {
  const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform01() * double(max_points - 1));
  std::vector<double> pts(std::min(n, max_points));
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = static_cast<double>(i);
  return conslab::DominatingGrid::unit_cells(std::move(pts));
}

inline GridDensity two_point(const GridPtr& grid, double a, double b) {
  return GridDensity(grid, {a, b});
}

}  // namespace testutil
