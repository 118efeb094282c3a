#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conslab/errors.hpp"
#include "conslab/measures.hpp"
#include "conslab/rng.hpp"

namespace conslab {

enum class PriorProvenance { explicit_atoms, net, stick_breaking, product };

struct PriorAtom {
  std::string id;
  GridDensity density;
};

// Finitely supported prior: model atoms with simplex masses. Realizes the
// paper's measure-theoretic priors by finite atom sets so that the posterior
// expression stays exact and every certificate is computable.
class DiscretePrior {
public:
  DiscretePrior(std::vector<PriorAtom> atoms, std::vector<double> masses,
                PriorProvenance provenance = PriorProvenance::explicit_atoms)
      : atoms_(std::move(atoms)), masses_(std::move(masses)), provenance_(provenance) {
    if (atoms_.empty() || atoms_.size() != masses_.size()) {
      throw DegenerateInputError("prior needs atoms with matching masses");
    }
    double s = 0.0;
    for (double m : masses_) {
      if (!(m >= 0.0)) throw DegenerateInputError("prior masses must be nonnegative");
      s += m;
    }
    if (std::abs(s - 1.0) > kNormalizationTol) {
      throw DegenerateInputError("prior masses must sum to one");
    }
    for (std::size_t i = 1; i < atoms_.size(); ++i) {
      require_same_grid(atoms_[0].density, atoms_[i].density);
    }
  }

  std::size_t size() const noexcept { return atoms_.size(); }
  const PriorAtom& atom(std::size_t i) const { return atoms_[i]; }
  const std::vector<PriorAtom>& atoms() const noexcept { return atoms_; }
  double mass(std::size_t i) const { return masses_[i]; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  PriorProvenance provenance() const noexcept { return provenance_; }
  const GridPtr& grid_ptr() const { return atoms_[0].density.grid_ptr(); }

  double mass_of(const std::function<bool(std::size_t)>& subset) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (subset(i)) s += masses_[i];
    }
    return s;
  }

  double mass_of(std::span<const std::size_t> indices) const {
    double s = 0.0;
    for (std::size_t i : indices) s += masses_[i];
    return s;
  }

private:
  std::vector<PriorAtom> atoms_;
  std::vector<double> masses_;
  PriorProvenance provenance_;
};

// Posterior after n observations: per-atom cumulative log likelihoods on top
// of the prior. Masses are recovered by log-sum-exp; after 0 observations the
// posterior equals the prior.
struct PosteriorState {
  const DiscretePrior* prior = nullptr;
  std::vector<double> log_weights;  // cumulative log likelihood per atom
  std::size_t n_observed = 0;

  static PosteriorState from_prior(const DiscretePrior& p) {
    PosteriorState s;
    s.prior = &p;
    s.log_weights.assign(p.size(), 0.0);
    return s;
  }
};

// Bayes update of Eq-(1) type: per-atom log weights incremented by the log
// likelihood of each observation. Throws IllDefinedPosteriorError, carrying
// the absolute observation index, when every positive-mass atom reaches zero
// likelihood (the denominator problem).
inline PosteriorState posterior_update(PosteriorState state, std::span<const Observation> x) {
  const DiscretePrior& prior = *state.prior;
  for (Observation obs : x) {
    bool any_alive = false;
    for (std::size_t i = 0; i < prior.size(); ++i) {
      if (state.log_weights[i] == -kInf) continue;
      state.log_weights[i] += prior.atom(i).density.log_value(obs);
      if (prior.mass(i) > 0.0 && state.log_weights[i] != -kInf) any_alive = true;
    }
    if (!any_alive) throw IllDefinedPosteriorError(state.n_observed);
    ++state.n_observed;
  }
  return state;
}

// Posterior mass of the atom subset, by a log-sum-exp ratio.
inline double posterior_mass(const PosteriorState& state,
                             const std::function<bool(std::size_t)>& subset) {
  const DiscretePrior& prior = *state.prior;
  double max_lw = -kInf;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (prior.mass(i) > 0.0 && state.log_weights[i] != -kInf) {
      max_lw = std::max(max_lw, state.log_weights[i]);
    }
  }
  if (max_lw == -kInf) throw IllDefinedPosteriorError(state.n_observed);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    const double m = prior.mass(i);
    if (m == 0.0 || state.log_weights[i] == -kInf) continue;
    const double w = m * std::exp(state.log_weights[i] - max_lw);
    den += w;
    if (subset(i)) num += w;
  }
  return num / den;
}

// log P_n^Pi(x), optionally conditioned on an atom subset (the local prior
// predictive P_n^{Pi|B}).
inline double prior_predictive_loglik(const DiscretePrior& prior, std::span<const Observation> x,
                                      const std::function<bool(std::size_t)>* restrict_to = nullptr) {
  double total_mass = 0.0;
  std::vector<double> terms;
  terms.reserve(prior.size());
  double max_term = -kInf;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (restrict_to && !(*restrict_to)(i)) continue;
    const double m = prior.mass(i);
    total_mass += m;
    if (m == 0.0) continue;
    double lw = std::log(m);
    for (Observation obs : x) {
      lw += prior.atom(i).density.log_value(obs);
      if (lw == -kInf) break;
    }
    terms.push_back(lw);
    max_term = std::max(max_term, lw);
  }
  if (restrict_to && !(total_mass > 0.0)) {
    throw InvalidConditioningError("prior predictive conditioned on a zero-mass set");
  }
  if (max_term == -kInf) return -kInf;
  double s = 0.0;
  for (double t : terms) {
    if (t != -kInf) s += std::exp(t - max_term);
  }
  double log_cond = restrict_to ? std::log(total_mass) : 0.0;
  return max_term + std::log(s) - log_cond;
}

struct DominationReport {
  bool holds_for_all_n = false;
  std::optional<std::size_t> failing_n;     // smallest n with an uncoverable sequence
  std::optional<std::size_t> covering_atom; // a positive-mass atom whose support covers supp(p0)
};

namespace detail {

// Exact minimum hitting set over small set families, by iterative deepening
// with a most-constrained-first branching rule.
inline bool hit_search(const std::vector<std::vector<std::size_t>>& sets,
                       std::vector<bool>& hit_flags, std::vector<std::size_t>& chosen,
                       std::size_t budget) {
  std::size_t pick = sets.size();
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (hit_flags[s]) continue;
    if (pick == sets.size() || sets[s].size() < sets[pick].size()) pick = s;
  }
  if (pick == sets.size()) return true;  // everything hit
  if (budget == 0) return false;
  for (std::size_t e : sets[pick]) {
    std::vector<std::size_t> newly;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      if (!hit_flags[s] &&
          std::find(sets[s].begin(), sets[s].end(), e) != sets[s].end()) {
        hit_flags[s] = true;
        newly.push_back(s);
      }
    }
    chosen.push_back(e);
    if (hit_search(sets, hit_flags, chosen, budget - 1)) return true;
    chosen.pop_back();
    for (std::size_t s : newly) hit_flags[s] = false;
  }
  return false;
}

inline std::size_t min_hitting_set_size(std::vector<std::vector<std::size_t>> sets) {
  // drop supersets: hitting a subset hits the superset too
  std::sort(sets.begin(), sets.end(),
            [](const auto& a, const auto& b) { return a.size() < b.size(); });
  std::vector<std::vector<std::size_t>> minimal;
  for (const auto& s : sets) {
    bool redundant = false;
    for (const auto& kept : minimal) {
      if (std::includes(s.begin(), s.end(), kept.begin(), kept.end())) {
        redundant = true;
        break;
      }
    }
    if (!redundant) minimal.push_back(s);
  }
  for (std::size_t budget = 1;; ++budget) {
    std::vector<bool> hit(minimal.size(), false);
    std::vector<std::size_t> chosen;
    if (hit_search(minimal, hit, chosen, budget)) return budget;
  }
}

}  // namespace detail

// Checks P0^n << P_n^Pi for all n. It holds for every n iff some
// positive-mass atom's support covers supp(p0); otherwise the smallest
// failing n is the least size of a P0-positive point set that no single atom
// support contains, i.e. a minimum hitting set over the per-atom uncovered
// point sets.
inline DominationReport domination_check(const GridDensity& p0, const DiscretePrior& prior) {
  require_same_grid(p0, prior.atom(0).density);
  DominationReport rep;
  std::vector<std::size_t> support;
  for (std::size_t x = 0; x < p0.size(); ++x) {
    if (p0.value(x) > 0.0) support.push_back(x);
  }
  std::vector<std::vector<std::size_t>> uncovered;  // per positive-mass atom
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (!(prior.mass(i) > 0.0)) continue;
    std::vector<std::size_t> miss;
    for (std::size_t x : support) {
      if (!(prior.atom(i).density.value(x) > 0.0)) miss.push_back(x);
    }
    if (miss.empty()) {
      rep.holds_for_all_n = true;
      rep.covering_atom = i;
      return rep;
    }
    uncovered.push_back(std::move(miss));
  }
  if (uncovered.empty()) {
    // no positive-mass atom at all cannot happen (masses sum to one)
    throw DegenerateInputError("prior has no positive-mass atom");
  }
  rep.holds_for_all_n = false;
  rep.failing_n = detail::min_hitting_set_size(std::move(uncovered));
  return rep;
}

struct KlPriorReport {
  std::vector<double> deltas;
  std::vector<double> masses;  // Pi{ KL(P0||Q) < delta } per delta
  bool pass = false;           // positive mass at every delta
  double inf_kl = kInf;        // over positive-mass atoms
  std::optional<std::size_t> inf_atom;
};

// Eq.-(2)-style Kullback-Leibler prior check on the realized atom set.
inline KlPriorReport kl_prior_check(const GridDensity& p0, const DiscretePrior& prior,
                                    std::span<const double> deltas) {
  for (std::size_t i = 1; i < deltas.size(); ++i) {
    if (!(deltas[i] < deltas[i - 1])) throw DomainError("deltas must be strictly decreasing");
  }
  KlPriorReport rep;
  std::vector<double> kl(prior.size(), kInf);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (!(prior.mass(i) > 0.0)) continue;
    kl[i] = kl_divergence(p0, prior.atom(i).density);
    if (kl[i] < rep.inf_kl) {
      rep.inf_kl = kl[i];
      rep.inf_atom = i;
    }
  }
  rep.pass = true;
  for (double d : deltas) {
    double m = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
      if (prior.mass(i) > 0.0 && kl[i] < d) m += prior.mass(i);
    }
    rep.deltas.push_back(d);
    rep.masses.push_back(m);
    if (!(m > 0.0)) rep.pass = false;
  }
  return rep;
}

struct MatchingReport {
  std::vector<std::size_t> ns;           // 1..n_max
  std::vector<double> q10, q50, q90;     // quantiles over replications of (1/n)|log ratio|
  double c_hat = 0.0;                    // median at n_max
  std::size_t breaches = 0;              // trajectories hitting an ill-defined likelihood
  std::vector<std::uint64_t> breach_seeds;
};

// Monte Carlo estimate of the matching constant: trajectories of
// (1/n) (sum log p0(X_j) - log P_n^Pi(X)) under i.i.d.-P0 data.
inline MatchingReport matching_diagnostic(const GridDensity& p0, const DiscretePrior& prior,
                                          std::size_t n_max, std::size_t reps,
                                          std::uint64_t seed) {
  if (n_max == 0 || reps == 0) throw DegenerateInputError("matching needs n_max, reps >= 1");
  MatchingReport rep;
  std::vector<std::vector<double>> per_n(n_max);  // values per replication
  const std::vector<double> cdf = cumulative_masses(p0);
  for (std::size_t r = 0; r < reps; ++r) {
    CounterRng rng = CounterRng::derive_stream(seed, r);
    std::vector<double> lw(prior.size(), 0.0);
    double lp0 = 0.0;
    bool breached = false;
    for (std::size_t n = 1; n <= n_max; ++n) {
      const Observation obs = sample_one(cdf, rng);
      lp0 += p0.log_value(obs);
      double max_lw = -kInf;
      for (std::size_t i = 0; i < prior.size(); ++i) {
        if (lw[i] == -kInf) continue;
        lw[i] += prior.atom(i).density.log_value(obs);
        if (prior.mass(i) > 0.0) max_lw = std::max(max_lw, lw[i]);
      }
      if (max_lw == -kInf) {
        ++rep.breaches;
        rep.breach_seeds.push_back(rng.key());
        breached = true;
        break;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < prior.size(); ++i) {
        if (prior.mass(i) > 0.0 && lw[i] != -kInf) {
          s += prior.mass(i) * std::exp(lw[i] - max_lw);
        }
      }
      const double predictive = max_lw + std::log(s);
      per_n[n - 1].push_back(std::abs(lp0 - predictive) / static_cast<double>(n));
    }
    (void)breached;
  }
  auto quantile = [](std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double idx = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  for (std::size_t n = 1; n <= n_max; ++n) {
    rep.ns.push_back(n);
    rep.q10.push_back(quantile(per_n[n - 1], 0.1));
    rep.q50.push_back(quantile(per_n[n - 1], 0.5));
    rep.q90.push_back(quantile(per_n[n - 1], 0.9));
  }
  rep.c_hat = rep.q50.back();
  return rep;
}

// Greedy farthest-point eta-net of a family under the given metric: start at
// index 0, repeatedly add the farthest member while it is farther than eta.
inline std::vector<std::size_t> greedy_net(const std::vector<std::vector<double>>& dist,
                                           double eta) {
  const std::size_t n = dist.size();
  std::vector<std::size_t> net = {0};
  std::vector<double> to_net(n);
  for (std::size_t j = 0; j < n; ++j) to_net[j] = dist[0][j];
  for (;;) {
    std::size_t far = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (to_net[j] > to_net[far]) far = j;
    }
    if (!(to_net[far] > eta)) break;
    net.push_back(far);
    for (std::size_t j = 0; j < n; ++j) to_net[j] = std::min(to_net[j], dist[far][j]);
  }
  return net;
}

// Net prior over a finite family: per level m a greedy farthest-point
// eta_m-net, level mass lambda_m split uniformly over the net. Masses of
// repeated atoms merge; the result is indexed exactly like the family.
inline DiscretePrior net_prior(const std::vector<GridDensity>& family, const DivergenceKind& metric,
                               std::span<const double> eta, std::span<const double> lambda) {
  if (family.empty()) throw DegenerateInputError("net prior needs a nonempty family");
  if (eta.size() != lambda.size() || eta.empty()) {
    throw DegenerateInputError("net prior needs matching eta and lambda sequences");
  }
  for (std::size_t m = 1; m < eta.size(); ++m) {
    if (!(eta[m] < eta[m - 1]) || !(eta[m] > 0.0)) {
      throw DomainError("eta must be strictly decreasing and positive");
    }
  }
  double lsum = 0.0;
  for (double l : lambda) {
    if (!(l > 0.0)) throw DomainError("lambda must be positive");
    lsum += l;
  }
  if (std::abs(lsum - 1.0) > kNormalizationTol) {
    throw DegenerateInputError("lambda must sum to one");
  }
  const std::size_t n = family.size();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = divergence(metric, family[i], family[j]);
    }
  }
  std::vector<double> masses(n, 0.0);
  for (std::size_t m = 0; m < eta.size(); ++m) {
    const std::vector<std::size_t> net = greedy_net(dist, eta[m]);
    const double each = lambda[m] / static_cast<double>(net.size());
    for (std::size_t i : net) masses[i] += each;
  }
  std::vector<PriorAtom> atoms;
  atoms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    atoms.push_back(PriorAtom{"f" + std::to_string(i), family[i]});
  }
  return DiscretePrior(std::move(atoms), std::move(masses), PriorProvenance::net);
}

// Truncated stick-breaking weights w_k from Beta(1, concentration), with the
// remainder folded into the last stick so the weights are an exact simplex.
inline std::vector<double> stick_breaking_weights(CounterRng& rng, std::size_t truncation,
                                                  double concentration) {
  std::vector<double> w(truncation, 0.0);
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < truncation; ++k) {
    const double v = rng.beta_one(concentration);
    w[k] = v * remaining;
    remaining *= (1.0 - v);
  }
  w[truncation - 1] = remaining;
  return w;
}

// Dirichlet-style mixture prior: each atom is sum_k w_k kernel(z_k) with
// stick-breaking weights and latents z_k i.i.d. from the base; the prior is
// uniform over the sampled atoms.
inline DiscretePrior stick_breaking_prior(const GridDensity& base, double concentration,
                                          std::size_t truncation,
                                          const std::function<GridDensity(double)>& kernel,
                                          std::size_t draws, std::uint64_t seed) {
  if (truncation == 0 || draws == 0) throw DegenerateInputError("need truncation, draws >= 1");
  if (!(concentration > 0.0)) throw DomainError("concentration must be positive");
  std::vector<PriorAtom> atoms;
  atoms.reserve(draws);
  const std::vector<double> base_cdf = cumulative_masses(base);
  for (std::size_t d = 0; d < draws; ++d) {
    CounterRng rng = CounterRng::derive_stream(seed, d);
    const std::vector<double> w = stick_breaking_weights(rng, truncation, concentration);
    std::vector<GridDensity> comps;
    comps.reserve(truncation);
    for (std::size_t k = 0; k < truncation; ++k) {
      const Observation cell = sample_one(base_cdf, rng);
      comps.push_back(kernel(base.grid().point(cell)));
    }
    atoms.push_back(PriorAtom{"sb" + std::to_string(d), mixture(w, comps)});
  }
  std::vector<double> masses(draws, 1.0 / static_cast<double>(draws));
  return DiscretePrior(std::move(atoms), std::move(masses), PriorProvenance::stick_breaking);
}

}  // namespace conslab
