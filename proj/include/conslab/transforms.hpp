#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "conslab/errors.hpp"
#include "conslab/measures.hpp"
#include "conslab/optim.hpp"

namespace conslab {

// Exponent of a power moment / Hellinger transform, constrained to [0, 1].
class Alpha {
public:
  explicit Alpha(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  }
  double value() const noexcept { return value_; }

private:
  double value_;
};

// rho_alpha(mu, nu) = sum mu^a nu^(1-a) cell_mass with 0^a 0^(1-a) := 0.
// Terms are accumulated on the common support and the endpoints a = 0, 1
// evaluate the one-sided limit formulas rather than a naive 0^0.
inline double hellinger_transform(const GridDensity& mu, const GridDensity& nu, Alpha alpha) {
  require_same_grid(mu, nu);
  const double a = alpha.value();
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.value(i), v = nu.value(i);
    if (m <= 0.0 || v <= 0.0) continue;
    s += std::exp(a * mu.log_value(i) + (1.0 - a) * nu.log_value(i)) * mu.grid().cell_mass(i);
  }
  return s;
}

struct PowerMomentResult {
  double value = 0.0;          // P0 (p/q)^alpha with the implicit support indicators
  double limit_at_zero = 0.0;  // P0 mass of {p0>0, p>0, q>0}
  double limit_at_one = 0.0;   // P0 (p/q) on the same region
};

// P0 (dP/dQ)^alpha restricted to {p0>0, p>0, q>0}; always finite on grids
// because the indicators exclude q = 0.
inline PowerMomentResult power_moment(const GridDensity& p0, const GridDensity& p,
                                      const GridDensity& q, Alpha alpha) {
  require_same_grid(p0, p);
  require_same_grid(p0, q);
  const double a = alpha.value();
  PowerMomentResult r;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (!(p0.value(i) > 0.0) || !(p.value(i) > 0.0) || !(q.value(i) > 0.0)) continue;
    const double w = p0.value(i) * p0.grid().cell_mass(i);
    const double log_ratio = p.log_value(i) - q.log_value(i);
    r.value += w * std::exp(a * log_ratio);
    r.limit_at_zero += w;
    r.limit_at_one += w * std::exp(log_ratio);
  }
  return r;
}

// d/dalpha of the power moment: sum over the same region of
// p0 (p/q)^alpha log(p/q) cell_mass.
inline double power_moment_derivative(const GridDensity& p0, const GridDensity& p,
                                      const GridDensity& q, Alpha alpha) {
  require_same_grid(p0, p);
  require_same_grid(p0, q);
  const double a = alpha.value();
  double s = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (!(p0.value(i) > 0.0) || !(p.value(i) > 0.0) || !(q.value(i) > 0.0)) continue;
    const double w = p0.value(i) * p0.grid().cell_mass(i);
    const double log_ratio = p.log_value(i) - q.log_value(i);
    s += w * std::exp(a * log_ratio) * log_ratio;
  }
  return s;
}

struct TestingPowerOptions {
  double alpha_tol = 1e-6;   // golden-section interval width for the outer alpha problem
  double inner_tol = 1e-8;   // Frank-Wolfe duality-gap stop for the simplex problem
  std::size_t fw_max_iter = 500;
};

struct TestingPowerResult {
  double pi_value = 0.0;  // upper envelope of inf_a sup_lambda max_Q of the objective
  double alpha_star = 0.0;
  std::vector<double> mixture_star;  // simplex weights over V
  std::size_t witness_q = 0;         // index into B
  bool converged = true;
  double tolerance_used = 0.0;
};

namespace detail {

// Per-Q data for the inner concave maximization at fixed alpha:
// objective(lambda) = sum_x coeff[x] * (mix_lambda[x])^alpha with
// coeff = p0 * cell_mass * q^(-alpha) on the region {p0>0, q>0}.
struct InnerProblem {
  std::vector<std::size_t> region;                // grid indices with p0>0, q>0
  std::vector<double> p0_mass;                    // p0*cell_mass on region
  std::vector<double> log_q;                      // log q on region
  std::vector<std::vector<double>> comps;         // p_i on region
};

inline InnerProblem make_inner(const GridDensity& p0, std::span<const GridDensity> v,
                               const GridDensity& q) {
  InnerProblem ip;
  for (std::size_t x = 0; x < p0.size(); ++x) {
    if (p0.value(x) > 0.0 && q.value(x) > 0.0) {
      ip.region.push_back(x);
      ip.p0_mass.push_back(p0.value(x) * p0.grid().cell_mass(x));
      ip.log_q.push_back(q.log_value(x));
    }
  }
  ip.comps.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    ip.comps[i].reserve(ip.region.size());
    for (std::size_t k = 0; k < ip.region.size(); ++k) {
      ip.comps[i].push_back(v[i].value(ip.region[k]));
    }
  }
  return ip;
}

// Value at alpha = 0: P0 of {union of component supports} inter {q>0}.
inline double alpha_zero_value(const InnerProblem& ip) {
  double s = 0.0;
  for (std::size_t k = 0; k < ip.region.size(); ++k) {
    for (const auto& c : ip.comps) {
      if (c[k] > 0.0) {
        s += ip.p0_mass[k];
        break;
      }
    }
  }
  return s;
}

// Value at alpha = 1: the objective is linear in lambda, so the sup over the
// simplex equals the best vertex.
inline double alpha_one_value(const InnerProblem& ip) {
  double best = 0.0;
  for (const auto& c : ip.comps) {
    double s = 0.0;
    for (std::size_t k = 0; k < ip.region.size(); ++k) {
      if (c[k] > 0.0) s += ip.p0_mass[k] * c[k] * std::exp(-ip.log_q[k]);
    }
    best = std::max(best, s);
  }
  return best;
}

struct InnerSolve {
  double upper = 0.0;  // value + duality gap: certified upper bound on the sup
  std::vector<double> lambda;
  bool converged = true;
};

inline InnerSolve solve_inner(const InnerProblem& ip, double alpha, const TestingPowerOptions& opts,
                              std::vector<double>* warm) {
  InnerSolve out;
  const std::size_t dim = ip.comps.size();
  if (dim == 1) {
    double s = 0.0;
    for (std::size_t k = 0; k < ip.region.size(); ++k) {
      if (ip.comps[0][k] > 0.0) {
        s += ip.p0_mass[k] * std::exp(alpha * (std::log(ip.comps[0][k]) - ip.log_q[k]));
      }
    }
    out.upper = s;
    out.lambda = {1.0};
    return out;
  }
  std::vector<double> coeff(ip.region.size());
  for (std::size_t k = 0; k < ip.region.size(); ++k) {
    coeff[k] = ip.p0_mass[k] * std::exp(-alpha * ip.log_q[k]);
  }
  FrankWolfeResult fw = frank_wolfe_simplex_max(ip.comps, coeff, PowerPhi{alpha}, opts.inner_tol,
                                                opts.fw_max_iter, warm);
  out.upper = fw.value + std::max(0.0, fw.gap);
  out.lambda = fw.lambda;
  out.converged = fw.converged;
  if (warm) *warm = fw.lambda;
  return out;
}

}  // namespace detail

// pi_{P0}(co V, B) of the testing-power functional: the outer alpha problem
// is convex and minimized by golden section (endpoints via the limit
// formulas); the inner problem is concave in the mixture weights and solved
// per Q by Frank-Wolfe; B is enumerated exhaustively. The returned pi_value
// is an upper envelope (Frank-Wolfe value plus duality gap).
inline TestingPowerResult testing_power(const GridDensity& p0, std::span<const GridDensity> v,
                                        std::span<const GridDensity> b,
                                        const TestingPowerOptions& opts = {}) {
  if (v.empty() || b.empty()) throw DegenerateInputError("testing_power needs nonempty V and B");
  std::vector<detail::InnerProblem> inner;
  inner.reserve(b.size());
  for (const auto& q : b) inner.push_back(detail::make_inner(p0, v, q));

  std::vector<std::vector<double>> warm(b.size());
  std::vector<bool> conv(b.size(), true);
  auto objective = [&](double alpha) {
    double best = -kInf;
    for (std::size_t j = 0; j < inner.size(); ++j) {
      detail::InnerSolve s = detail::solve_inner(inner[j], alpha, opts, &warm[j]);
      conv[j] = s.converged;
      if (s.upper > best) best = s.upper;
    }
    return best;
  };

  // endpoints from the limit formulas
  double f0 = 0.0, f1 = 0.0;
  for (const auto& ip : inner) {
    f0 = std::max(f0, detail::alpha_zero_value(ip));
    f1 = std::max(f1, detail::alpha_one_value(ip));
  }

  const double eps = std::min(1e-4, opts.alpha_tol);
  ScalarMinResult interior = golden_section_min(objective, eps, 1.0 - eps, opts.alpha_tol);

  TestingPowerResult res;
  res.tolerance_used = opts.inner_tol;
  if (f0 <= interior.value && f0 <= f1) {
    res.alpha_star = 0.0;
    res.pi_value = f0;
  } else if (f1 <= interior.value) {
    res.alpha_star = 1.0;
    res.pi_value = f1;
  } else {
    res.alpha_star = interior.x;
    res.pi_value = interior.value;
  }

  // re-solve at alpha_star to extract the witness Q and mixture
  double best = -kInf;
  std::size_t witness = 0;
  std::vector<double> best_lambda;
  bool best_conv = true;
  for (std::size_t j = 0; j < inner.size(); ++j) {
    detail::InnerSolve s;
    if (res.alpha_star == 0.0) {
      s.upper = detail::alpha_zero_value(inner[j]);
      s.lambda.assign(v.size(), 1.0 / static_cast<double>(v.size()));
    } else if (res.alpha_star == 1.0) {
      s.upper = detail::alpha_one_value(inner[j]);
      s.lambda.assign(v.size(), 0.0);
      double bv = -kInf;
      std::size_t bi = 0;
      for (std::size_t i = 0; i < inner[j].comps.size(); ++i) {
        double sv = 0.0;
        for (std::size_t k = 0; k < inner[j].region.size(); ++k) {
          if (inner[j].comps[i][k] > 0.0) {
            sv += inner[j].p0_mass[k] * inner[j].comps[i][k] * std::exp(-inner[j].log_q[k]);
          }
        }
        if (sv > bv) {
          bv = sv;
          bi = i;
        }
      }
      s.lambda[bi] = 1.0;
    } else {
      s = detail::solve_inner(inner[j], res.alpha_star, opts, &warm[j]);
    }
    if (s.upper > best) {
      best = s.upper;
      witness = j;
      best_lambda = s.lambda;
      best_conv = s.converged;
    }
  }
  res.pi_value = std::max(res.pi_value, best);
  res.witness_q = witness;
  res.mixture_star = best_lambda;
  res.converged = best_conv;
  return res;
}

struct KlSeparationReport {
  double sup_b = 0.0;       // sup_{Q in B} KL(P0||Q), +inf on support mismatch
  double inf_co_v = 0.0;    // KL at the best mixture found over co(V)
  double inf_certified = 0.0;  // inf_co_v minus the duality gap: certified lower bound
  std::vector<double> witness_mixture;
  double margin = 0.0;      // inf_certified - sup_b
  bool separated = false;
  bool converged = true;
};

// Strict Kullback-Leibler separation of B and co(V) relative to P0. The sup
// over B is exhaustive enumeration; the inf over the mixture simplex is a
// convex minimization solved by Frank-Wolfe with a duality-gap stop.
inline KlSeparationReport kl_separation(const GridDensity& p0, std::span<const GridDensity> v,
                                        std::span<const GridDensity> b,
                                        const TestingPowerOptions& opts = {}) {
  if (v.empty() || b.empty()) throw DegenerateInputError("kl_separation needs nonempty V and B");
  KlSeparationReport rep;
  rep.sup_b = 0.0;
  for (const auto& q : b) rep.sup_b = std::max(rep.sup_b, kl_divergence(p0, q));

  // constant part sum p0 log p0 and the concave part sum p0 log(mix)
  std::vector<std::size_t> region;
  std::vector<double> coeff;
  double c0 = 0.0;
  for (std::size_t x = 0; x < p0.size(); ++x) {
    if (p0.value(x) > 0.0) {
      region.push_back(x);
      const double w = p0.value(x) * p0.grid().cell_mass(x);
      coeff.push_back(w);
      c0 += w * p0.log_value(x);
    }
  }
  if (v.size() == 1) {
    rep.inf_co_v = kl_divergence(p0, v[0]);
    rep.inf_certified = rep.inf_co_v;
    rep.witness_mixture = {1.0};
  } else {
    std::vector<std::vector<double>> comps(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      comps[i].reserve(region.size());
      for (std::size_t k : region) comps[i].push_back(v[i].value(k));
    }
    FrankWolfeResult fw =
        frank_wolfe_simplex_max(comps, coeff, LogPhi{}, opts.inner_tol, opts.fw_max_iter);
    if (fw.value == -kInf) {
      // even the union of all supports misses some P0 mass
      rep.inf_co_v = kInf;
      rep.inf_certified = kInf;
      rep.witness_mixture = fw.lambda;
    } else {
      rep.inf_co_v = std::max(0.0, c0 - fw.value);
      rep.inf_certified = std::max(0.0, c0 - fw.value - std::max(0.0, fw.gap));
      rep.witness_mixture = fw.lambda;
      rep.converged = fw.converged;
    }
  }
  if (rep.inf_certified == kInf) {
    rep.margin = rep.sup_b == kInf ? -kInf : kInf;
  } else {
    rep.margin = rep.inf_certified - rep.sup_b;  // -inf when sup_b = +inf
  }
  rep.separated = rep.margin > 0.0;
  return rep;
}

// Minimax test indicator 1{ log dP_mix^n(x) - log P_n(x) > 0 } where P_mix is
// a single-observation mixture density and the second argument evaluates the
// prior-predictive log likelihood of the whole sequence.
inline int minimax_test_indicator(const GridDensity& p_mix,
                                  const std::function<double(std::span<const Observation>)>& predictive_loglik,
                                  std::span<const Observation> x) {
  if (x.empty()) throw DegenerateInputError("minimax test needs at least one observation");
  double lp = 0.0;
  for (Observation o : x) lp += p_mix.log_value(o);
  const double lq = predictive_loglik(x);
  if (lp == -kInf && lq == -kInf) {
    throw UndefinedSequenceError("both log-densities are -inf for the observed sequence");
  }
  return lp > lq ? 1 : 0;
}

struct HtBoundResult {
  double value = 0.0;
  double alpha = 0.0;
  bool optimized = false;
};

// Lemma-style i.i.d. testing bound
//   Pi(B)^(-a) * sum_Q [ sup_lambda P0(dP_lambda/dQ)^a ]^n * Pi(Q|B)
// evaluated at a given alpha or minimized over alpha in [0,1] by a coarse
// scan plus golden-section refinement. Valid as a posterior-mass bound only
// under the finiteness hypothesis sup_Q P0(dP/dQ) < inf for all P in V; the
// support check lives in the certificate layer (moment_sup).
inline HtBoundResult ht_bound_iid(const GridDensity& p0, std::span<const GridDensity> v,
                                  std::span<const GridDensity> b_atoms,
                                  std::span<const double> b_cond_masses, double pi_b_mass,
                                  std::size_t n, std::optional<double> alpha,
                                  const TestingPowerOptions& opts = {}) {
  if (!(pi_b_mass > 0.0) || !(pi_b_mass <= 1.0)) {
    throw InvalidConditioningError("ht_bound_iid needs Pi(B) in (0, 1]");
  }
  if (b_atoms.size() != b_cond_masses.size() || b_atoms.empty()) {
    throw DegenerateInputError("ht_bound_iid needs matching B atoms and conditional masses");
  }
  if (v.empty()) throw DegenerateInputError("ht_bound_iid needs nonempty V");

  std::vector<detail::InnerProblem> inner;
  inner.reserve(b_atoms.size());
  for (const auto& q : b_atoms) inner.push_back(detail::make_inner(p0, v, q));
  std::vector<std::vector<double>> warm(b_atoms.size());

  auto value_at = [&](double a) {
    // log of Pi(B)^(-a) * sum_Q w_Q * sup_Q^n, computed via log-sum-exp
    double max_term = -kInf;
    std::vector<double> terms(b_atoms.size(), -kInf);
    for (std::size_t j = 0; j < b_atoms.size(); ++j) {
      if (!(b_cond_masses[j] > 0.0)) continue;
      double sup;
      if (a == 0.0) {
        sup = detail::alpha_zero_value(inner[j]);
      } else if (a == 1.0) {
        sup = detail::alpha_one_value(inner[j]);
      } else {
        sup = detail::solve_inner(inner[j], a, opts, &warm[j]).upper;
      }
      double lt;
      if (sup <= 0.0) {
        lt = n == 0 ? std::log(b_cond_masses[j]) : -kInf;  // empty product convention
      } else {
        lt = static_cast<double>(n) * std::log(sup) + std::log(b_cond_masses[j]);
      }
      terms[j] = lt;
      max_term = std::max(max_term, lt);
    }
    if (max_term == -kInf) return 0.0;
    double s = 0.0;
    for (double t : terms) {
      if (t != -kInf) s += std::exp(t - max_term);
    }
    return std::exp(-a * std::log(pi_b_mass) + max_term + std::log(s));
  };

  HtBoundResult res;
  if (alpha.has_value()) {
    if (!(*alpha >= 0.0 && *alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    res.alpha = *alpha;
    res.value = value_at(*alpha);
    return res;
  }
  ScalarMinResult m = scan_then_golden_min(value_at, 0.0, 1.0, 33, opts.alpha_tol);
  res.alpha = m.x;
  res.value = m.value;
  res.optimized = true;
  return res;
}

}  // namespace conslab
