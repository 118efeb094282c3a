#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conslab/bayes.hpp"
#include "conslab/errors.hpp"
#include "conslab/measures.hpp"
#include "conslab/rng.hpp"

namespace conslab {

// Integral of a piecewise-constant density on [0,1] (uniform cells) over
// [a, b] intersected with [0, 1]; exact up to float rounding.
inline double partial_mass_01(const GridDensity& eta, double a, double b) {
  const std::size_t j = eta.size();
  const double h = 1.0 / static_cast<double>(j);
  a = std::max(0.0, a);
  b = std::min(1.0, b);
  if (!(b > a)) return 0.0;
  double acc = 0.0;
  const std::size_t first = std::min(j - 1, static_cast<std::size_t>(a / h));
  const std::size_t last = std::min(j - 1, static_cast<std::size_t>((b - 1e-15) / h));
  for (std::size_t c = first; c <= last; ++c) {
    const double lo = std::max(a, static_cast<double>(c) * h);
    const double hi = std::min(b, static_cast<double>(c + 1) * h);
    if (hi > lo) acc += eta.value(c) * (hi - lo);
  }
  return acc;
}

// Certified lower-mass profile f(eps) = scale * min{ int_0^eps g, int_{1-eps}^1 g }.
struct FProfile {
  double scale = 1.0;  // e^{-2M}
  GridDensity g;       // base density on the nuisance grid

  double operator()(double eps) const {
    return scale * std::min(partial_mass_01(g, 0.0, eps), partial_mass_01(g, 1.0 - eps, 1.0));
  }
};

// Reflects a value into [lo, hi] by the triangular (double-reflection) map.
inline double reflect_into(double z, double lo, double hi) {
  const double width = hi - lo;
  double t = std::fmod(z - lo, 2.0 * width);
  if (t < 0.0) t += 2.0 * width;
  return t <= width ? lo + t : hi - (t - width);
}

// One Esscher-transform nuisance density eta = g e^Z / int g e^Z on the
// J-cell grid, with Z = U + W, U uniform on [-M, M] and W a random walk with
// variance spacing 1/J, reflected into [-M, M].
inline GridDensity sample_esscher_nuisance(const GridDensity& g, double m_bound, CounterRng& rng) {
  const std::size_t j = g.size();
  std::vector<double> values(j);
  const double u = rng.uniform(-m_bound, m_bound);
  double w = 0.0;
  const double step_sd = std::sqrt(1.0 / static_cast<double>(j));
  for (std::size_t c = 0; c < j; ++c) {
    w += step_sd * rng.normal();
    const double z = reflect_into(u + w, -m_bound, m_bound);
    values[c] = g.value(c) * std::exp(z);
  }
  return normalize(GridDensity(g.grid_ptr(), std::move(values)));
}

// Rescaled-interval density p(x) = eta((x - t1)/(t2 - t1)) / (t2 - t1) on
// [t1, t2], zero outside. The endpoints must sit on cell boundaries of the
// (uniform) x grid; values are exact cell averages computed in index space,
// so the on-grid support is exactly the cells of [t1, t2] and interval
// indicators are exact.
inline GridDensity interval_density(const GridPtr& x_grid, double t1, double t2,
                                    const GridDensity& eta) {
  const std::size_t n = x_grid->size();
  const double h = x_grid->cell_mass(0);
  const double lo = x_grid->point(0) - 0.5 * h;
  const long i1 = std::lround((t1 - lo) / h);
  const long i2 = std::lround((t2 - lo) / h);
  if (std::abs(t1 - (lo + static_cast<double>(i1) * h)) > 1e-9 * h ||
      std::abs(t2 - (lo + static_cast<double>(i2) * h)) > 1e-9 * h) {
    throw ConfigError("interval endpoints must sit on x-grid cell boundaries");
  }
  if (i1 < 0 || i2 > static_cast<long>(n) || i2 <= i1) {
    throw ConfigError("interval lies outside the x grid");
  }
  std::vector<double> values(n, 0.0);
  const double cells = static_cast<double>(i2 - i1);
  for (long c = i1; c < i2; ++c) {
    const double u_lo = static_cast<double>(c - i1) / cells;
    const double u_hi = static_cast<double>(c - i1 + 1) / cells;
    values[static_cast<std::size_t>(c)] = partial_mass_01(eta, u_lo, u_hi) / h;
  }
  return GridDensity(x_grid, std::move(values));
}

struct SupportBoundaryParams {
  double sigma = 2.0;
  double m_bound = 1.0;  // M
  std::size_t j_cells = 50;
  double theta_lo = -0.5;
  double theta_hi = 1.5;
  double theta_mesh = 0.1;
  std::size_t x_refine = 2;  // x cell width = theta_mesh / x_refine
  std::size_t nuisance_draws = 10;
  std::uint64_t seed = 1;
  std::vector<double> g_values;  // custom base density on the J grid; empty = uniform
};

// Semi-parametric support-boundary model: theta pairs on a mesh with
// 0 < theta2 - theta1 < sigma, Esscher nuisance atoms on [0,1], and the
// certified lower-mass profile f attached.
struct SupportBoundaryModel {
  GridPtr x_grid;
  GridPtr nuisance_grid;
  std::vector<GridDensity> nuisance_atoms;
  std::vector<std::array<double, 2>> theta_pairs;
  double sigma = 0.0;
  double m_bound = 0.0;
  FProfile f;
  std::vector<GridDensity> family;
  std::vector<std::array<double, 2>> family_thetas;
  std::vector<std::size_t> family_eta;
  std::vector<std::string> family_ids;
};

inline GridPtr make_uniform_cells(double lo, double hi, std::size_t cells) {
  std::vector<double> pts(cells), mass(cells);
  const double h = (hi - lo) / static_cast<double>(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    pts[c] = lo + (static_cast<double>(c) + 0.5) * h;
    mass[c] = h;
  }
  return std::make_shared<const DominatingGrid>(std::move(pts), std::move(mass));
}

inline SupportBoundaryModel build_support_boundary(const SupportBoundaryParams& params) {
  if (!(params.sigma > 0.0) || !(params.m_bound > 0.0)) {
    throw ConfigError("support boundary needs sigma > 0 and M > 0");
  }
  GridPtr nuisance_grid = make_uniform_cells(0.0, 1.0, params.j_cells);

  std::vector<double> gv = params.g_values;
  if (gv.empty()) gv.assign(params.j_cells, 1.0);
  if (gv.size() != params.j_cells) throw ConfigError("g values must match the nuisance grid");
  for (double v : gv) {
    if (!(v > 0.0)) throw ConfigError("g must be positive on (0,1)");
  }
  GridDensity g = normalize(GridDensity(nuisance_grid, std::move(gv)));

  CounterRng rng(params.seed);
  std::vector<GridDensity> nuisance_atoms;
  for (std::size_t d = 0; d < params.nuisance_draws; ++d) {
    CounterRng stream = rng.derive_stream(d);
    nuisance_atoms.push_back(sample_esscher_nuisance(g, params.m_bound, stream));
  }

  // theta pairs on the mesh with 0 < width < sigma, supports inside the x window
  const double h = params.theta_mesh;
  const std::size_t steps =
      static_cast<std::size_t>(std::round((params.theta_hi - params.theta_lo) / h));
  std::vector<std::array<double, 2>> theta_pairs;
  for (std::size_t i = 0; i <= steps; ++i) {
    for (std::size_t j2 = i + 1; j2 <= steps; ++j2) {
      const double t1 = params.theta_lo + static_cast<double>(i) * h;
      const double t2 = params.theta_lo + static_cast<double>(j2) * h;
      if (t2 - t1 < params.sigma - 1e-12) theta_pairs.push_back({t1, t2});
    }
  }
  if (theta_pairs.empty()) throw ConfigError("theta mesh produced an empty feasible set");

  const std::size_t x_cells = steps * params.x_refine;
  GridPtr x_grid = make_uniform_cells(params.theta_lo, params.theta_hi, x_cells);

  SupportBoundaryModel model{x_grid,
                             nuisance_grid,
                             std::move(nuisance_atoms),
                             std::move(theta_pairs),
                             params.sigma,
                             params.m_bound,
                             FProfile{std::exp(-2.0 * params.m_bound), g},
                             {},
                             {},
                             {},
                             {}};
  for (std::size_t t = 0; t < model.theta_pairs.size(); ++t) {
    for (std::size_t e = 0; e < model.nuisance_atoms.size(); ++e) {
      model.family.push_back(interval_density(model.x_grid, model.theta_pairs[t][0],
                                              model.theta_pairs[t][1], model.nuisance_atoms[e]));
      model.family_thetas.push_back(model.theta_pairs[t]);
      model.family_eta.push_back(e);
      model.family_ids.push_back("t" + std::to_string(t) + "e" + std::to_string(e));
    }
  }
  return model;
}

struct LowerMassReport {
  bool pass = true;
  double worst_slack = kInf;
  std::size_t worst_atom = 0;
  double worst_eps = 0.0;
  std::vector<std::pair<std::size_t, double>> violations;  // (atom, eps)
};

// Certifies min{ int_0^eps eta, int_{1-eps}^1 eta } >= f(eps) on every
// nuisance atom over the eps grid.
inline LowerMassReport verify_lower_mass(const SupportBoundaryModel& model,
                                         std::span<const double> eps_grid) {
  LowerMassReport rep;
  for (std::size_t a = 0; a < model.nuisance_atoms.size(); ++a) {
    const GridDensity& eta = model.nuisance_atoms[a];
    for (double eps : eps_grid) {
      const double lhs = std::min(partial_mass_01(eta, 0.0, eps),
                                  partial_mass_01(eta, 1.0 - eps, 1.0));
      const double slack = lhs - model.f(eps);
      if (slack < rep.worst_slack) {
        rep.worst_slack = slack;
        rep.worst_atom = a;
        rep.worst_eps = eps;
      }
      if (slack < -1e-12) {
        rep.pass = false;
        rep.violations.emplace_back(a, eps);
      }
    }
  }
  return rep;
}

struct FixedWidthParams {
  double theta_lo = -0.3;
  double theta_hi = 0.3;   // theta range; supports are [theta, theta + 1]
  double theta_mesh = 0.05;
  std::size_t x_refine = 1;
  std::size_t j_cells = 40;
  double m_bound = 1.0;
  std::size_t nuisance_draws = 8;
  std::uint64_t seed = 2;
};

// Fixed-width counterexample: densities eta(x - theta) 1[theta, theta+1].
// The true nuisance eta0 is drawn from the same process but held out of the
// prior atoms, so no atom sits at P0 while the theta0 column still covers
// supp(P0).
struct FixedWidthModel {
  GridPtr x_grid;
  GridPtr nuisance_grid;
  std::vector<GridDensity> nuisance_atoms;
  GridDensity truth_eta;
  std::vector<double> thetas;
  double theta_mesh = 0.0;
  FProfile f;
  std::vector<GridDensity> family;
  std::vector<double> family_theta;
  std::vector<std::size_t> family_eta;
  std::vector<std::string> family_ids;

  GridDensity truth_density(double theta0) const {
    return interval_density(x_grid, theta0, theta0 + 1.0, truth_eta);
  }
};

inline FixedWidthModel build_fixed_width(const FixedWidthParams& params) {
  GridDensity g = normalize(
      GridDensity(make_uniform_cells(0.0, 1.0, params.j_cells),
                  std::vector<double>(params.j_cells, 1.0)));

  CounterRng rng(params.seed);
  std::vector<GridDensity> nuisance_atoms;
  for (std::size_t d = 0; d < params.nuisance_draws; ++d) {
    CounterRng stream = rng.derive_stream(d);
    nuisance_atoms.push_back(sample_esscher_nuisance(g, params.m_bound, stream));
  }
  CounterRng truth_stream = rng.derive_stream(params.nuisance_draws);
  GridDensity truth_eta = sample_esscher_nuisance(g, params.m_bound, truth_stream);

  const double h = params.theta_mesh;
  const std::size_t steps =
      static_cast<std::size_t>(std::round((params.theta_hi - params.theta_lo) / h));
  std::vector<double> thetas;
  for (std::size_t i = 0; i <= steps; ++i) {
    thetas.push_back(params.theta_lo + static_cast<double>(i) * h);
  }
  // the x grid spans every support [theta, theta+1]; refine the theta mesh
  const std::size_t x_cells =
      static_cast<std::size_t>(std::round((params.theta_hi + 1.0 - params.theta_lo) / h)) *
      params.x_refine;
  GridPtr x_grid = make_uniform_cells(params.theta_lo, params.theta_hi + 1.0, x_cells);

  FixedWidthModel model{x_grid,
                        g.grid_ptr(),
                        std::move(nuisance_atoms),
                        std::move(truth_eta),
                        std::move(thetas),
                        params.theta_mesh,
                        FProfile{std::exp(-2.0 * params.m_bound), g},
                        {},
                        {},
                        {},
                        {}};
  for (std::size_t t = 0; t < model.thetas.size(); ++t) {
    for (std::size_t e = 0; e < model.nuisance_atoms.size(); ++e) {
      model.family.push_back(interval_density(model.x_grid, model.thetas[t],
                                              model.thetas[t] + 1.0, model.nuisance_atoms[e]));
      model.family_theta.push_back(model.thetas[t]);
      model.family_eta.push_back(e);
      model.family_ids.push_back("t" + std::to_string(t) + "e" + std::to_string(e));
    }
  }
  return model;
}

// The example's V/B construction: V_+- beyond eps from theta0 and B_+- the
// theta bands at distance [eps/2, eps) (half-open so a mesh with eps = 2h
// still charges the bands).
struct FixedWidthPieces {
  std::vector<std::size_t> v_plus, v_minus, b_plus, b_minus;
};

inline FixedWidthPieces fixed_width_pieces(const std::vector<double>& family_theta, double theta0,
                                           double eps, double mesh) {
  if (!(eps >= mesh - 1e-12)) {
    throw ConfigError("epsilon below the theta mesh resolution");
  }
  FixedWidthPieces out;
  const double tol = mesh / 4.0;
  for (std::size_t i = 0; i < family_theta.size(); ++i) {
    const double d = family_theta[i] - theta0;
    if (d > eps + tol) out.v_plus.push_back(i);
    if (d < -eps - tol) out.v_minus.push_back(i);
    if (d > eps / 2.0 - tol && d < eps - tol) out.b_plus.push_back(i);
    if (d < -eps / 2.0 + tol && d > -eps + tol) out.b_minus.push_back(i);
  }
  if ((!out.v_plus.empty() && out.b_plus.empty()) ||
      (!out.v_minus.empty() && out.b_minus.empty())) {
    throw ConfigError("epsilon too small: the B bands contain no mesh point");
  }
  return out;
}

enum class MixtureKind { normal_location, uniform_scale };

struct MixtureParams {
  MixtureKind kind = MixtureKind::normal_location;
  double scale = 1.0;  // normal kernel standard deviation
  double latent_lo = -1.0;
  double latent_hi = 1.0;  // for uniform_scale: [z0, z1] with 0 < z0 < z1
  std::size_t latent_cells = 81;
  std::size_t x_cells = 120;
  double x_lo = -6.0;
  double x_hi = 6.0;  // uniform_scale ignores these and uses [0, z1]
  std::size_t truncation = 20;
  std::size_t draws = 100;
  double concentration = 1.0;
  std::uint64_t seed = 5;
};

struct MixtureModel {
  GridPtr x_grid;
  DiscretePrior prior;  // uniform over the sampled stick-breaking atoms
  std::vector<std::vector<double>> hellinger;
  double envelope_all = 0.0;       // max over sampled ordered pairs, +inf possible
  double envelope_vs_truth = 0.0;  // max_P ||p / p_truth||_{2, truth}
  std::size_t truth_index = 0;
  std::function<GridDensity(double)> kernel;
};

inline double l2_ratio_norm(const GridDensity& p, const GridDensity& q) {
  double acc = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (p.value(x) > 0.0 && !(q.value(x) > 0.0)) return kInf;
    if (q.value(x) > 0.0) {
      acc += p.value(x) * p.value(x) / q.value(x) * p.grid().cell_mass(x);
    }
  }
  return std::sqrt(acc);
}

inline MixtureModel build_mixture(const MixtureParams& params) {
  if (!(params.latent_hi > params.latent_lo)) throw ConfigError("degenerate latent interval");
  if (params.kind == MixtureKind::uniform_scale && !(params.latent_lo > 0.0)) {
    throw ConfigError("uniform scale mixture needs 0 < z0 < z1");
  }
  const double x_lo = params.kind == MixtureKind::uniform_scale ? 0.0 : params.x_lo;
  const double x_hi = params.kind == MixtureKind::uniform_scale ? params.latent_hi : params.x_hi;
  const GridPtr x_grid = make_uniform_cells(x_lo, x_hi, params.x_cells);

  std::function<GridDensity(double)> kernel;
  if (params.kind == MixtureKind::normal_location) {
    const double s = params.scale;
    kernel = [x_grid, s](double z) {
      std::vector<double> v(x_grid->size());
      for (std::size_t c = 0; c < x_grid->size(); ++c) {
        const double d = (x_grid->point(c) - z) / s;
        v[c] = std::exp(-0.5 * d * d);
      }
      return normalize(GridDensity(x_grid, std::move(v)));
    };
  } else {
    kernel = [x_grid](double z) {
      std::vector<double> v(x_grid->size());
      for (std::size_t c = 0; c < x_grid->size(); ++c) {
        const double half = 0.5 * x_grid->cell_mass(c);
        const double a = x_grid->point(c) - half, b = x_grid->point(c) + half;
        const double overlap = std::max(0.0, std::min(b, z) - std::max(a, 0.0));
        v[c] = overlap / ((b - a) * z);
      }
      return GridDensity(x_grid, std::move(v));
    };
  }

  GridDensity base(make_uniform_cells(params.latent_lo, params.latent_hi, params.latent_cells),
                   std::vector<double>(params.latent_cells,
                                       1.0 / (params.latent_hi - params.latent_lo)));
  DiscretePrior prior = stick_breaking_prior(base, params.concentration, params.truncation,
                                             kernel, params.draws, params.seed);

  MixtureModel model{x_grid, std::move(prior), {}, 0.0, 0.0, 0, std::move(kernel)};
  const std::size_t n = model.prior.size();
  model.hellinger.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      model.hellinger[i][j] = model.hellinger[j][i] =
          hellinger_distance(model.prior.atom(i).density, model.prior.atom(j).density);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      model.envelope_all = std::max(
          model.envelope_all,
          l2_ratio_norm(model.prior.atom(i).density, model.prior.atom(j).density));
    }
  }

  // truth: widest-support atom for the uniform-scale family (so every ratio
  // against it stays finite), first atom otherwise
  if (params.kind == MixtureKind::uniform_scale) {
    std::size_t best = 0;
    std::size_t best_extent = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t extent = 0;
      for (std::size_t x = 0; x < model.prior.atom(i).density.size(); ++x) {
        if (model.prior.atom(i).density.value(x) > 0.0) extent = x + 1;
      }
      if (extent > best_extent) {
        best_extent = extent;
        best = i;
      }
    }
    model.truth_index = best;
  }
  for (std::size_t i = 0; i < n; ++i) {
    model.envelope_vs_truth = std::max(
        model.envelope_vs_truth,
        l2_ratio_norm(model.prior.atom(i).density, model.prior.atom(model.truth_index).density));
  }
  return model;
}

}  // namespace conslab
