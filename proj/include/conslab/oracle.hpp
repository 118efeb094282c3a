#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "conslab/bayes.hpp"
#include "conslab/certify.hpp"
#include "conslab/errors.hpp"
#include "conslab/measures.hpp"
#include "conslab/transforms.hpp"

namespace conslab {

using Rational = boost::multiprecision::cpp_rational;

// Exact dyadic rational from a double (every finite double is one).
inline Rational rational_from_double(double x) {
  if (x == 0.0) return Rational(0);
  if (!std::isfinite(x)) throw DomainError("cannot convert a non-finite value to a rational");
  int exp2 = 0;
  const double mant = std::frexp(x, &exp2);  // x = mant * 2^exp2, |mant| in [0.5, 1)
  const long long scaled = static_cast<long long>(std::ldexp(mant, 53));
  exp2 -= 53;
  Rational r(scaled);
  boost::multiprecision::cpp_int pow2 = boost::multiprecision::cpp_int(1)
                                        << static_cast<unsigned>(exp2 < 0 ? -exp2 : exp2);
  if (exp2 >= 0) {
    r *= Rational(pow2);
  } else {
    r /= Rational(pow2);
  }
  return r;
}

struct OracleLimits {
  std::size_t max_points = 3;
  std::size_t max_atoms = 4;
  std::size_t max_n = 6;
};

// Exact expected posterior target mass P0^n Pi(V | X_1..X_n) by enumeration
// of every outcome sequence, in rational arithmetic (inputs are doubles and
// hence exact dyadic rationals). Refuses instances beyond the stated limits.
inline double brute_force_posterior_expectation(const GridDensity& p0, const DiscretePrior& prior,
                                                const std::vector<char>& target_mask,
                                                std::size_t n,
                                                const OracleLimits& limits = {}) {
  const std::size_t k = p0.size();
  if (k > limits.max_points || prior.size() > limits.max_atoms || n > limits.max_n) {
    throw EnumerationLimitError(
        "oracle instance too large: limits are " + std::to_string(limits.max_points) +
        " grid points, " + std::to_string(limits.max_atoms) + " atoms, n <= " +
        std::to_string(limits.max_n));
  }
  if (target_mask.size() != prior.size()) {
    throw DegenerateInputError("target mask must cover every atom");
  }
  // exact per-point values
  std::vector<Rational> p0w(k);  // P0 mass of each cell
  for (std::size_t x = 0; x < k; ++x) {
    p0w[x] = rational_from_double(p0.value(x)) * rational_from_double(p0.grid().cell_mass(x));
  }
  std::vector<std::vector<Rational>> q(prior.size(), std::vector<Rational>(k));
  std::vector<Rational> masses(prior.size());
  for (std::size_t i = 0; i < prior.size(); ++i) {
    masses[i] = rational_from_double(prior.mass(i));
    for (std::size_t x = 0; x < k; ++x) {
      q[i][x] = rational_from_double(prior.atom(i).density.value(x));
    }
  }

  Rational expectation(0);
  std::vector<std::size_t> seq(n, 0);
  if (n == 0) {
    Rational num(0), den(0);
    for (std::size_t i = 0; i < prior.size(); ++i) {
      den += masses[i];
      if (target_mask[i]) num += masses[i];
    }
    return static_cast<double>(num / den);
  }
  for (;;) {
    Rational pw(1);
    for (std::size_t j = 0; j < n; ++j) pw *= p0w[seq[j]];
    if (pw != 0) {
      // cell masses cancel in the posterior ratio, so plain density products
      Rational num(0), den(0);
      for (std::size_t i = 0; i < prior.size(); ++i) {
        if (masses[i] == 0) continue;
        Rational prod = masses[i];
        for (std::size_t j = 0; j < n && prod != 0; ++j) prod *= q[i][seq[j]];
        den += prod;
        if (target_mask[i]) num += prod;
      }
      if (den == 0) {
        throw IllDefinedPosteriorError(n - 1);
      }
      expectation += pw * num / den;
    }
    // odometer over the k^n outcome sequences
    std::size_t j = 0;
    while (j < n && ++seq[j] == k) {
      seq[j] = 0;
      ++j;
    }
    if (j == n) break;
  }
  return static_cast<double>(expectation);
}

struct OracleComparison {
  double exact = 0.0;
  double ht_bound = 0.0;
  double ht_alpha = 0.0;
  double walker = 0.0;
  double slack_ht = 0.0;      // ht_bound - exact
  double slack_walker = 0.0;  // walker - exact
  std::size_t n = 0;
};

// Compares the exact expected posterior target mass against the implemented
// bounds, each evaluated at its own optimized alpha.
inline OracleComparison oracle_compare(const GridDensity& p0, const DiscretePrior& prior,
                                       const std::vector<std::size_t>& target,
                                       const std::vector<std::size_t>& b_set, std::size_t n,
                                       const TestingPowerOptions& opts = {}) {
  std::vector<char> mask(prior.size(), 0);
  for (std::size_t i : target) mask[i] = 1;
  OracleComparison cmp;
  cmp.n = n;
  cmp.exact = brute_force_posterior_expectation(p0, prior, mask, n);

  std::vector<GridDensity> v, b;
  std::vector<double> bw;
  const double mass_b = prior.mass_of(b_set);
  for (std::size_t i : target) v.push_back(prior.atom(i).density);
  for (std::size_t i : b_set) {
    b.push_back(prior.atom(i).density);
    bw.push_back(prior.mass(i) / mass_b);
  }
  HtBoundResult ht = ht_bound_iid(p0, v, b, bw, mass_b, n, std::nullopt, opts);
  cmp.ht_bound = ht.value;
  cmp.ht_alpha = ht.alpha;
  cmp.slack_ht = cmp.ht_bound - cmp.exact;

  // countable-cover bound with singleton pieces carrying the prior masses
  std::vector<std::vector<std::size_t>> pieces;
  std::vector<double> piece_masses;
  for (std::size_t i : target) {
    pieces.push_back({i});
    piece_masses.push_back(prior.mass(i));
  }
  WalkerMassDecl decl;
  decl.family = WalkerMassDecl::Family::explicit_masses;
  decl.masses = piece_masses;
  CertifyOptions copts;
  copts.power = opts;
  std::vector<double> betas = {0.5};
  WalkerReport wr = walker_bound(p0, prior, pieces, {b_set}, decl, n, std::nullopt, betas, copts);
  cmp.walker = wr.bound;
  cmp.slack_walker = cmp.walker - cmp.exact;
  return cmp;
}

// Random enumerable instance: a covering first atom guarantees domination,
// so the exact expectation is well defined.
struct OracleInstance {
  GridDensity p0;
  DiscretePrior prior;
  std::vector<std::size_t> target;
  std::vector<std::size_t> b_set;
  std::size_t n = 1;
};

inline OracleInstance random_oracle_instance(CounterRng& rng) {
  const std::size_t k = 2 + rng.next_u64() % 2;   // 2..3 grid points
  const std::size_t na = 2 + rng.next_u64() % 3;  // 2..4 atoms
  GridPtr grid = DominatingGrid::integer_points(k);

  std::vector<double> p0v(k);
  for (double& x : p0v) x = 0.05 + rng.uniform01();
  if (rng.uniform01() < 0.3) p0v[rng.next_u64() % k] = 0.0;
  GridDensity p0 = normalize(GridDensity(grid, std::move(p0v)));

  std::vector<PriorAtom> atoms;
  for (std::size_t i = 0; i < na; ++i) {
    std::vector<double> v(k);
    for (double& x : v) x = 0.05 + rng.uniform01();
    if (i > 0 && rng.uniform01() < 0.4) v[rng.next_u64() % k] = 0.0;  // atom 0 covers
    bool any = false;
    for (double x : v) any = any || x > 0.0;
    if (!any) v[0] = 1.0;
    atoms.push_back(PriorAtom{"a" + std::to_string(i), normalize(GridDensity(grid, std::move(v)))});
  }
  std::vector<double> masses(na);
  double s = 0.0;
  for (double& m : masses) {
    m = 0.05 + rng.uniform01();
    s += m;
  }
  for (double& m : masses) m /= s;
  DiscretePrior prior(std::move(atoms), std::move(masses));

  // nonempty target excluding atom 0; B holds atom 0 plus other full-support
  // atoms only, so the finiteness hypothesis sup_B P0(dP/dQ) < inf holds
  std::vector<std::size_t> target, b_set = {0};
  for (std::size_t i = 1; i < na; ++i) {
    if (rng.uniform01() < 0.6) target.push_back(i);
  }
  if (target.empty()) target.push_back(1 + rng.next_u64() % (na - 1));
  for (std::size_t i = 1; i < na; ++i) {
    bool in_target = false;
    for (std::size_t t : target) in_target = in_target || t == i;
    bool full_support = true;
    for (std::size_t x = 0; x < k; ++x) {
      if (!(prior.atom(i).density.value(x) > 0.0)) full_support = false;
    }
    if (!in_target && full_support && rng.uniform01() < 0.3) b_set.push_back(i);
  }
  const std::size_t n = 1 + rng.next_u64() % 6;
  return OracleInstance{std::move(p0), std::move(prior), std::move(target), std::move(b_set), n};
}

}  // namespace conslab
