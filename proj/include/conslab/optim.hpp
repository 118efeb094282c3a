#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "conslab/errors.hpp"

namespace conslab {

struct ScalarMinResult {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

// Golden-section minimization on [lo, hi] down to interval width `width_tol`.
// Assumes unimodality (all callers minimize convex functions). Returns the
// best evaluated point, which upper-bounds the true minimum.
template <class F>
ScalarMinResult golden_section_min(F&& f, double lo, double hi, double width_tol,
                                   std::size_t max_iter = 200) {
  static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  ScalarMinResult best;
  double a = lo, b = hi;
  double c = b - (b - a) * inv_phi;
  double d = a + (b - a) * inv_phi;
  double fc = f(c), fd = f(d);
  best.evaluations = 2;
  auto consider = [&best](double x, double v) {
    if (v < best.value) {
      best.value = v;
      best.x = x;
    }
  };
  consider(c, fc);
  consider(d, fd);
  for (std::size_t it = 0; it < max_iter && (b - a) > width_tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * inv_phi;
      fc = f(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * inv_phi;
      fd = f(d);
      consider(d, fd);
    }
    ++best.evaluations;
  }
  return best;
}

// Coarse grid scan followed by golden-section refinement in the bracketing
// cell. Robust for continuous objectives that may be only piecewise unimodal.
template <class F>
ScalarMinResult scan_then_golden_min(F&& f, double lo, double hi, std::size_t grid_points,
                                     double width_tol) {
  ScalarMinResult best;
  double best_x = lo;
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid_points - 1);
    const double v = f(x);
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.x = x;
      best_x = x;
    }
  }
  const double h = (hi - lo) / static_cast<double>(grid_points - 1);
  const double a = std::max(lo, best_x - h);
  const double b = std::min(hi, best_x + h);
  ScalarMinResult refined = golden_section_min(f, a, b, width_tol);
  refined.evaluations += best.evaluations;
  if (best.value < refined.value) {
    refined.value = best.value;
    refined.x = best.x;
  }
  return refined;
}

struct FrankWolfeResult {
  std::vector<double> lambda;
  double value = -std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iterations = 0;
};

// Separable concave objective over the unit simplex:
//   F(lambda) = sum_x coeff[x] * phi(mix[x]),  mix = sum_i lambda_i comp[i][x],
// with coeff >= 0 and phi concave nondecreasing on [0, inf). Phi exposes
// value(t) and slope(t); slope may return +inf at t = 0.
struct PowerPhi {
  double alpha;  // in (0, 1]
  double value(double t) const { return t > 0.0 ? std::exp(alpha * std::log(t)) : 0.0; }
  double slope(double t) const {
    if (alpha == 1.0) return 1.0;
    if (t <= 0.0) return std::numeric_limits<double>::infinity();
    return alpha * std::exp((alpha - 1.0) * std::log(t));
  }
};

struct LogPhi {
  double value(double t) const {
    return t > 0.0 ? std::log(t) : -std::numeric_limits<double>::infinity();
  }
  double slope(double t) const {
    return t > 0.0 ? 1.0 / t : std::numeric_limits<double>::infinity();
  }
};

// Frank-Wolfe with away steps, maximizing the objective above to duality gap
// <= gap_tol. All reductions run in fixed index order; ties break toward the
// lowest index, so results are deterministic and thread-independent.
template <class Phi>
FrankWolfeResult frank_wolfe_simplex_max(const std::vector<std::vector<double>>& comps,
                                         const std::vector<double>& coeff, Phi phi,
                                         double gap_tol, std::size_t max_iter,
                                         const std::vector<double>* warm_start = nullptr) {
  const std::size_t dim = comps.size();
  if (dim == 0) throw DegenerateInputError("frank_wolfe needs at least one component");
  const std::size_t npts = coeff.size();
  FrankWolfeResult res;
  std::vector<double>& lambda = res.lambda;
  if (warm_start && warm_start->size() == dim) {
    lambda = *warm_start;
    double s = 0.0;
    for (double w : lambda) s += std::max(0.0, w);
    if (s > 0.0) {
      for (double& w : lambda) w = std::max(0.0, w) / s;
    } else {
      lambda.assign(dim, 1.0 / static_cast<double>(dim));
    }
  } else {
    lambda.assign(dim, 1.0 / static_cast<double>(dim));
  }

  std::vector<double> mix(npts, 0.0);
  auto rebuild_mix = [&]() {
    std::fill(mix.begin(), mix.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      if (lambda[i] == 0.0) continue;
      const std::vector<double>& ci = comps[i];
      for (std::size_t x = 0; x < npts; ++x) mix[x] += lambda[i] * ci[x];
    }
  };
  auto eval = [&](const std::vector<double>& m) {
    double v = 0.0;
    for (std::size_t x = 0; x < npts; ++x) {
      if (coeff[x] == 0.0) continue;
      v += coeff[x] * phi.value(m[x]);
    }
    return v;
  };
  rebuild_mix();
  res.value = eval(mix);

  if (dim == 1) {
    res.gap = 0.0;
    res.converged = true;
    return res;
  }

  std::vector<double> grad(dim, 0.0);
  std::vector<double> dir(npts, 0.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    // gradient; skip comp zeros so that slope(0)=inf never meets a 0 factor
    for (std::size_t i = 0; i < dim; ++i) {
      double g = 0.0;
      const std::vector<double>& ci = comps[i];
      for (std::size_t x = 0; x < npts; ++x) {
        if (coeff[x] == 0.0 || ci[x] == 0.0) continue;
        g += coeff[x] * phi.slope(mix[x]) * ci[x];
      }
      grad[i] = g;
    }
    double glam = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      if (lambda[i] > 0.0) glam += lambda[i] * grad[i];
    }
    std::size_t s = 0;
    for (std::size_t i = 1; i < dim; ++i) {
      if (grad[i] > grad[s]) s = i;
    }
    const double fw_gap = grad[s] - glam;
    res.gap = fw_gap;
    if (fw_gap <= gap_tol) {
      res.converged = true;
      break;
    }
    std::size_t v = dim;  // away vertex: worst active coordinate
    for (std::size_t i = 0; i < dim; ++i) {
      if (lambda[i] > 0.0 && (v == dim || grad[i] < grad[v])) v = i;
    }
    const double away_gain = glam - (v < dim ? grad[v] : glam);

    bool use_away = false;
    double gamma_max = 1.0;
    if (v < dim && away_gain > fw_gap && lambda[v] < 1.0) {
      use_away = true;
      gamma_max = lambda[v] / (1.0 - lambda[v]);
    }

    if (use_away) {
      const std::vector<double>& cv = comps[v];
      for (std::size_t x = 0; x < npts; ++x) dir[x] = mix[x] - cv[x];
    } else {
      const std::vector<double>& cs = comps[s];
      for (std::size_t x = 0; x < npts; ++x) dir[x] = cs[x] - mix[x];
    }

    auto line = [&](double g) {
      double val = 0.0;
      for (std::size_t x = 0; x < npts; ++x) {
        if (coeff[x] == 0.0) continue;
        const double t = std::max(0.0, mix[x] + g * dir[x]);
        val += coeff[x] * phi.value(t);
      }
      return -val;  // golden section minimizes
    };
    ScalarMinResult ls = golden_section_min(line, 0.0, gamma_max, 1e-12 * std::max(1.0, gamma_max));
    double gamma = ls.x;
    double cand = -ls.value;
    const double at_max = -line(gamma_max);
    if (at_max >= cand) {
      gamma = gamma_max;
      cand = at_max;
    }
    if (!(cand > res.value) || gamma <= 0.0) {
      // no further progress along either direction; report current gap
      break;
    }
    if (use_away) {
      for (std::size_t i = 0; i < dim; ++i) lambda[i] *= (1.0 + gamma);
      lambda[v] -= gamma;
      if (gamma >= gamma_max * (1.0 - 1e-12)) lambda[v] = 0.0;
    } else {
      for (std::size_t i = 0; i < dim; ++i) lambda[i] *= (1.0 - gamma);
      lambda[s] += gamma;
    }
    double lsum = 0.0;
    for (double& w : lambda) {
      if (w < 1e-16) w = 0.0;
      lsum += w;
    }
    for (double& w : lambda) w /= lsum;
    rebuild_mix();
    res.value = eval(mix);
  }
  return res;
}

}  // namespace conslab
