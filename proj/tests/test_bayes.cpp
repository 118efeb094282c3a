#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "conslab/bayes.hpp"
#include "conslab/measures.hpp"
#include "testutil.hpp"

using namespace conslab;
using Catch::Approx;

namespace {
const GridPtr g2 = DominatingGrid::integer_points(2);
GridDensity bern(double p) { return testutil::two_point(g2, 1.0 - p, p); }

DiscretePrior two_atom_prior(GridDensity a, GridDensity b, double wa = 0.5) {
  std::vector<PriorAtom> atoms = {{"a", std::move(a)}, {"b", std::move(b)}};
  return DiscretePrior(std::move(atoms), {wa, 1.0 - wa});
}
}  // namespace

TEST_CASE("posterior update eliminates zero-likelihood atoms") {
  DiscretePrior prior = two_atom_prior(testutil::two_point(g2, 1.0, 0.0),
                                       testutil::two_point(g2, 0.5, 0.5));
  PosteriorState s = PosteriorState::from_prior(prior);
  ObservationSeq x = {1};  // second grid point
  s = posterior_update(s, x);
  CHECK(posterior_mass(s, [](std::size_t i) { return i == 0; }) == 0.0);
  CHECK(posterior_mass(s, [](std::size_t i) { return i == 1; }) == 1.0);
}

TEST_CASE("identical atoms keep the prior") {
  GridDensity p = bern(0.3);
  DiscretePrior prior = two_atom_prior(p, p, 0.25);
  PosteriorState s = PosteriorState::from_prior(prior);
  s = posterior_update(s, sample(p, 50, 4));
  CHECK(posterior_mass(s, [](std::size_t i) { return i == 0; }) == Approx(0.25).margin(1e-12));
}

TEST_CASE("single-step Bayes arithmetic") {
  DiscretePrior prior = two_atom_prior(bern(0.1), bern(0.5));  // densities (0.9,0.1), (0.5,0.5)
  PosteriorState s = PosteriorState::from_prior(prior);
  ObservationSeq x = {0};
  s = posterior_update(s, x);
  CHECK(posterior_mass(s, [](std::size_t i) { return i == 0; }) ==
        Approx(0.5 * 0.9 / (0.5 * 0.9 + 0.5 * 0.5)).epsilon(1e-12));
  CHECK(posterior_mass(s, [](std::size_t i) { return i == 0; }) == Approx(0.6429).margin(1e-4));
}

TEST_CASE("posterior mass additivity and trivial subsets") {
  DiscretePrior prior = two_atom_prior(bern(0.2), bern(0.7));
  PosteriorState s = PosteriorState::from_prior(prior);
  s = posterior_update(s, sample(bern(0.4), 20, 11));
  CHECK(posterior_mass(s, [](std::size_t) { return true; }) == Approx(1.0).margin(1e-12));
  CHECK(posterior_mass(s, [](std::size_t) { return false; }) == 0.0);
  const double m0 = posterior_mass(s, [](std::size_t i) { return i == 0; });
  const double m1 = posterior_mass(s, [](std::size_t i) { return i == 1; });
  CHECK(m0 + m1 == Approx(1.0).margin(1e-12));
}

TEST_CASE("ill-defined posterior reports the offending observation") {
  DiscretePrior prior = two_atom_prior(testutil::two_point(g2, 1.0, 0.0),
                                       testutil::two_point(g2, 1.0, 0.0));
  PosteriorState s = PosteriorState::from_prior(prior);
  ObservationSeq x = {0, 0, 1};
  try {
    posterior_update(s, x);
    FAIL("expected IllDefinedPosteriorError");
  } catch (const IllDefinedPosteriorError& e) {
    CHECK(e.observation_index() == 2);
  }
}

TEST_CASE("sequential and batch updates agree exactly") {
  DiscretePrior prior = two_atom_prior(bern(0.2), bern(0.6));
  ObservationSeq x = sample(bern(0.5), 40, 77);
  PosteriorState batch = posterior_update(PosteriorState::from_prior(prior), x);
  PosteriorState seq = PosteriorState::from_prior(prior);
  for (Observation o : x) {
    ObservationSeq one = {o};
    seq = posterior_update(seq, one);
  }
  for (std::size_t i = 0; i < prior.size(); ++i) {
    CHECK(batch.log_weights[i] == seq.log_weights[i]);
  }
  CHECK(batch.n_observed == seq.n_observed);
}

TEST_CASE("posterior invariant under atom duplication with split mass") {
  GridDensity a = bern(0.3), b = bern(0.8);
  std::vector<PriorAtom> atoms1 = {{"a", a}, {"b", b}};
  DiscretePrior p1(std::move(atoms1), {0.4, 0.6});
  std::vector<PriorAtom> atoms2 = {{"a1", a}, {"a2", a}, {"b", b}};
  DiscretePrior p2(std::move(atoms2), {0.15, 0.25, 0.6});
  ObservationSeq x = sample(bern(0.5), 30, 5);
  PosteriorState s1 = posterior_update(PosteriorState::from_prior(p1), x);
  PosteriorState s2 = posterior_update(PosteriorState::from_prior(p2), x);
  const double m1 = posterior_mass(s1, [](std::size_t i) { return i == 0; });
  const double m2 = posterior_mass(s2, [](std::size_t i) { return i <= 1; });
  CHECK(m1 == Approx(m2).margin(1e-12));
}

TEST_CASE("posterior equals enumerated joint-mass ratio on tiny instances") {
  auto g3 = DominatingGrid::integer_points(3);
  std::vector<PriorAtom> atoms = {{"u", GridDensity(g3, {1.0 / 3, 1.0 / 3, 1.0 / 3})},
                                  {"l", GridDensity(g3, {0.5, 0.5, 0.0})},
                                  {"r", GridDensity(g3, {0.0, 0.25, 0.75})},
                                  {"m", GridDensity(g3, {0.25, 0.5, 0.25})}};
  DiscretePrior prior(std::move(atoms), {0.1, 0.2, 0.3, 0.4});
  ObservationSeq x = {0, 2, 1, 1, 2, 0};
  PosteriorState s = posterior_update(PosteriorState::from_prior(prior), x);
  // direct products, no logs
  std::vector<double> joint(prior.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    double prod = prior.mass(i);
    for (Observation o : x) prod *= prior.atom(i).density.value(o);
    joint[i] = prod;
    total += prod;
  }
  for (std::size_t i = 0; i < prior.size(); ++i) {
    CHECK(posterior_mass(s, [&](std::size_t j) { return j == i; }) ==
          Approx(joint[i] / total).margin(1e-12));
  }
}

TEST_CASE("prior predictive log likelihood") {
  GridDensity p = bern(0.1);
  std::vector<PriorAtom> single = {{"p", p}};
  DiscretePrior sp(std::move(single), {1.0});
  ObservationSeq x = {0, 1, 0};
  CHECK(prior_predictive_loglik(sp, x) ==
        Approx(std::log(0.9) + std::log(0.1) + std::log(0.9)).margin(1e-12));

  DiscretePrior prior = two_atom_prior(bern(0.1), bern(0.5));
  ObservationSeq one = {0};  // densities 0.9 and 0.5 there
  CHECK(prior_predictive_loglik(prior, one) == Approx(std::log(0.7)).margin(1e-12));

  std::function<bool(std::size_t)> all = [](std::size_t) { return true; };
  CHECK(prior_predictive_loglik(prior, one, &all) ==
        Approx(prior_predictive_loglik(prior, one)).margin(1e-12));

  std::function<bool(std::size_t)> none = [](std::size_t) { return false; };
  CHECK_THROWS_AS(prior_predictive_loglik(prior, one, &none), InvalidConditioningError);
}

TEST_CASE("domination check") {
  GridDensity p0 = bern(0.5);
  DiscretePrior split = two_atom_prior(testutil::two_point(g2, 1.0, 0.0),
                                       testutil::two_point(g2, 0.0, 1.0));
  DominationReport rep = domination_check(p0, split);
  CHECK_FALSE(rep.holds_for_all_n);
  REQUIRE(rep.failing_n.has_value());
  CHECK(*rep.failing_n == 2);

  // exhaustive cross-check for n = 1..6: a sequence is covered iff some atom
  // is positive on all of it
  for (std::size_t n = 1; n <= 6; ++n) {
    bool uncovered_exists = false;
    for (std::size_t code = 0; code < (std::size_t(1) << n); ++code) {
      bool covered = false;
      for (std::size_t i = 0; i < split.size(); ++i) {
        bool all_pos = true;
        for (std::size_t j = 0; j < n; ++j) {
          if (!(split.atom(i).density.value((code >> j) & 1) > 0.0)) all_pos = false;
        }
        if (all_pos) covered = true;
      }
      if (!covered) uncovered_exists = true;
    }
    CHECK(uncovered_exists == (n >= *rep.failing_n));
  }

  DiscretePrior with_full = two_atom_prior(testutil::two_point(g2, 1.0, 0.0), bern(0.5));
  CHECK(domination_check(p0, with_full).holds_for_all_n);

  DiscretePrior at_p0 = two_atom_prior(p0, testutil::two_point(g2, 1.0, 0.0));
  CHECK(domination_check(p0, at_p0).holds_for_all_n);

  // zero-mass atoms are ignored
  std::vector<PriorAtom> atoms = {{"cover", bern(0.5)}, {"pt", testutil::two_point(g2, 1.0, 0.0)}};
  DiscretePrior zero_mass(std::move(atoms), {0.0, 1.0});
  DominationReport rep2 = domination_check(p0, zero_mass);
  CHECK_FALSE(rep2.holds_for_all_n);
  CHECK(*rep2.failing_n == 1);
}

TEST_CASE("kl prior check") {
  GridDensity p0 = bern(0.5);
  DiscretePrior with_p0 = two_atom_prior(p0, bern(0.9));
  std::vector<double> deltas = {0.1, 0.01, 0.001};
  KlPriorReport rep = kl_prior_check(p0, with_p0, deltas);
  CHECK(rep.pass);
  CHECK(rep.inf_kl == 0.0);
  CHECK(*rep.inf_atom == 0);

  // fixed-width-style slice: every atom has a support mismatch, all KL +inf
  auto g3 = DominatingGrid::integer_points(3);
  GridDensity p0_3(g3, {0.5, 0.5, 0.0});
  std::vector<PriorAtom> shifted = {{"s1", GridDensity(g3, {0.0, 0.5, 0.5})},
                                    {"s2", GridDensity(g3, {0.0, 0.25, 0.75})}};
  DiscretePrior off(std::move(shifted), {0.5, 0.5});
  KlPriorReport rep2 = kl_prior_check(p0_3, off, deltas);
  CHECK_FALSE(rep2.pass);
  CHECK(rep2.inf_kl == kInf);
  for (double m : rep2.masses) CHECK(m == 0.0);

  // mesh prior without an exact atom: passes above the nearest-atom KL, fails below
  std::vector<PriorAtom> mesh;
  for (double p = 0.05; p < 1.0; p += 0.1) {
    mesh.push_back({"p" + std::to_string(p), bern(p)});
  }
  std::vector<double> masses(mesh.size(), 1.0 / double(mesh.size()));
  DiscretePrior mesh_prior(std::move(mesh), std::move(masses));
  KlPriorReport rep3 = kl_prior_check(p0, mesh_prior, deltas);
  const double nearest = rep3.inf_kl;
  CHECK(nearest > 0.0);
  for (std::size_t k = 0; k < rep3.deltas.size(); ++k) {
    CHECK((rep3.masses[k] > 0.0) == (rep3.deltas[k] > nearest));
  }
}

TEST_CASE("matching diagnostic") {
  GridDensity p0 = bern(0.5);
  std::vector<PriorAtom> single = {{"p0", p0}};
  DiscretePrior at_p0(std::move(single), {1.0});
  MatchingReport rep = matching_diagnostic(p0, at_p0, 50, 20, 99);
  CHECK(rep.breaches == 0);
  CHECK(rep.c_hat == Approx(0.0).margin(1e-12));  // single atom at P0: ratio is one

  // prior off P0: the constant approaches the infimum KL over atoms
  DiscretePrior off = two_atom_prior(bern(0.6), bern(0.7));
  const double inf_kl = std::min(kl_divergence(p0, bern(0.6)), kl_divergence(p0, bern(0.7)));
  MatchingReport rep2 = matching_diagnostic(p0, off, 400, 50, 7);
  CHECK(rep2.breaches == 0);
  CHECK(rep2.c_hat == Approx(inf_kl).margin(0.02));
  CHECK(rep2.q50[399] <= rep2.q50[19] + 1e-9);  // settles downward

  // domination breach reported when the prior cannot cover the data
  std::vector<PriorAtom> pt = {{"pt", testutil::two_point(g2, 1.0, 0.0)}};
  DiscretePrior point_prior(std::move(pt), {1.0});
  MatchingReport rep3 = matching_diagnostic(p0, point_prior, 30, 40, 3);
  CHECK(rep3.breaches > 0);
  DominationReport dom = domination_check(p0, point_prior);
  CHECK_FALSE(dom.holds_for_all_n);
  CHECK(*dom.failing_n == 1);
}

TEST_CASE("net prior") {
  // one-element family: point mass
  std::vector<GridDensity> tiny = {bern(0.5)};
  std::vector<double> eta = {0.5, 0.25};
  std::vector<double> lambda = {0.5, 0.5};
  DiscretePrior np = net_prior(tiny, DivergenceKind::hellinger(), eta, lambda);
  CHECK(np.size() == 1);
  CHECK(np.mass(0) == Approx(1.0));

  // eta above the diameter collapses the level to a single atom
  std::vector<GridDensity> three = {bern(0.05), bern(0.5), bern(0.95)};
  std::vector<double> eta1 = {10.0};
  std::vector<double> lambda1 = {1.0};
  DiscretePrior np1 = net_prior(three, DivergenceKind::hellinger(), eta1, lambda1);
  CHECK(np1.mass(0) == Approx(1.0));
  CHECK(np1.mass(1) == 0.0);
  CHECK(np1.mass(2) == 0.0);

  // Bernoulli mesh: every Hellinger ball of radius 0.1 receives at least the
  // promised level mass lambda_{m*}/|net_{m*}| at the first m* below 0.1
  std::vector<GridDensity> mesh;
  for (double p = 0.01; p < 0.995; p += 0.01) mesh.push_back(bern(p));
  std::vector<double> eta2, lambda2;
  double lsum = 0.0;
  for (int m = 1; m <= 6; ++m) {
    eta2.push_back(std::pow(2.0, -m));
    lambda2.push_back(std::pow(2.0, -m));
    lsum += lambda2.back();
  }
  for (double& l : lambda2) l /= lsum;
  DiscretePrior np2 = net_prior(mesh, DivergenceKind::hellinger(), eta2, lambda2);
  std::size_t mstar = 0;
  while (eta2[mstar] >= 0.1) ++mstar;
  std::vector<std::vector<double>> dist(mesh.size(), std::vector<double>(mesh.size()));
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    for (std::size_t j = 0; j < mesh.size(); ++j) {
      dist[i][j] = hellinger_distance(mesh[i], mesh[j]);
    }
  }
  const std::vector<std::size_t> net_star = greedy_net(dist, eta2[mstar]);
  const double promised = lambda2[mstar] / double(net_star.size());
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    double ball_mass = 0.0;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      if (np2.mass(i) > 0.0 && dist[i][j] <= 0.1) ball_mass += np2.mass(i);
    }
    CHECK(ball_mass >= promised - 1e-12);
  }
}

TEST_CASE("stick breaking prior") {
  auto latent_grid = DominatingGrid::unit_cells({-0.5, 0.0, 0.5});
  GridDensity base(latent_grid, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  auto g3 = DominatingGrid::integer_points(3);
  auto kernel = [&](double z) {
    // toy location kernel, peaked at the cell nearest to z
    std::vector<double> v(3, 0.1);
    const std::size_t peak = z < -0.25 ? 0 : (z < 0.25 ? 1 : 2);
    v[peak] = 0.8;
    return GridDensity(g3, std::move(v));
  };

  // K = 1: atoms are pure kernel densities
  DiscretePrior k1 = stick_breaking_prior(base, 1.0, 1, kernel, 10, 42);
  for (std::size_t i = 0; i < k1.size(); ++i) {
    bool matches = false;
    for (double z : {-0.5, 0.0, 0.5}) {
      GridDensity k = kernel(z);
      bool eq = true;
      for (std::size_t x = 0; x < 3; ++x) {
        if (std::abs(k.value(x) - k1.atom(i).density.value(x)) > 1e-14) eq = false;
      }
      matches = matches || eq;
    }
    CHECK(matches);
  }

  // every atom is normalized
  DiscretePrior big = stick_breaking_prior(base, 1.0, 20, kernel, 50, 7);
  for (std::size_t i = 0; i < big.size(); ++i) {
    CHECK(big.atom(i).density.total_mass() == Approx(1.0).margin(1e-10));
  }

  // tiny concentration: the first stick takes nearly everything
  std::vector<double> w1s;
  for (std::size_t d = 0; d < 200; ++d) {
    CounterRng rng = CounterRng::derive_stream(1234, d);
    w1s.push_back(stick_breaking_weights(rng, 20, 1e-3)[0]);
  }
  std::sort(w1s.begin(), w1s.end());
  CHECK(w1s[100] > 0.99);
}
