#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conslab/bayes.hpp"
#include "conslab/certify.hpp"
#include "conslab/errors.hpp"
#include "conslab/measures.hpp"
#include "conslab/scenarios.hpp"

namespace conslab {

using json = nlohmann::json;

// A fully built experiment scenario: the true density, the prior over the
// model family (atoms indexed like the family), optional theta annotations
// for marginal targets, and the target atom set.
struct Scenario {
  std::string id;
  GridDensity p0;
  DiscretePrior prior;
  std::optional<std::vector<std::array<double, 2>>> thetas;
  std::optional<std::array<double, 2>> theta0;
  std::optional<FProfile> f;
  std::optional<double> sigma;
  std::optional<std::size_t> truth_index;  // p0's atom index when p0 is in the family
  std::vector<char> target_mask;
  std::string target_desc;
  double target_epsilon = 0.0;
};

struct ExperimentConfig {
  Scenario scenario;
  std::vector<std::size_t> schedule;
  std::size_t replications = 1;
  std::uint64_t master_seed = 1;
  TestingPowerOptions tolerances;
  json certificates;  // array of certificate specs
  json oracle;        // oracle batch spec
  std::string raw_text;
};

namespace detail {

inline GridDensity bernoulli_density(const GridPtr& grid, double p) {
  return GridDensity(grid, {1.0 - p, p});
}

inline double jget(const json& j, const char* key, double dflt) {
  return j.contains(key) ? j.at(key).get<double>() : dflt;
}
inline std::size_t jget_u(const json& j, const char* key, std::size_t dflt) {
  return j.contains(key) ? j.at(key).get<std::size_t>() : dflt;
}

// prior spec over an already-built family (uniform | explicit | net, with an
// optional extra point mass on the truth atom)
inline DiscretePrior build_family_prior(const json& spec, const std::vector<GridDensity>& family,
                                        const std::vector<std::string>& ids,
                                        std::optional<std::size_t> truth_index) {
  std::vector<PriorAtom> atoms;
  for (std::size_t i = 0; i < family.size(); ++i) {
    atoms.push_back(PriorAtom{ids.empty() ? "a" + std::to_string(i) : ids[i], family[i]});
  }
  const std::string kind = spec.value("kind", "uniform");
  if (kind == "uniform") {
    std::vector<double> masses(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
    return DiscretePrior(std::move(atoms), std::move(masses));
  }
  if (kind == "explicit") {
    std::vector<double> masses = spec.at("masses").get<std::vector<double>>();
    return DiscretePrior(std::move(atoms), std::move(masses));
  }
  if (kind == "net") {
    std::vector<double> eta = spec.at("eta").get<std::vector<double>>();
    std::vector<double> lambda = spec.at("lambda").get<std::vector<double>>();
    const std::string metric_name = spec.value("metric", "hellinger");
    DivergenceKind metric = metric_name == "hellinger"       ? DivergenceKind::hellinger()
                            : metric_name == "total_variation" ? DivergenceKind::total_variation()
                                                               : DivergenceKind::kl();
    DiscretePrior net = net_prior(family, metric, eta, lambda);
    const double extra = jget(spec, "truth_atom_mass", 0.0);
    if (extra > 0.0) {
      if (!truth_index) throw ConfigError("truth_atom_mass needs a scenario with a truth atom");
      std::vector<double> masses = net.masses();
      for (double& m : masses) m *= (1.0 - extra);
      masses[*truth_index] += extra;
      return DiscretePrior(std::move(atoms), std::move(masses), PriorProvenance::net);
    }
    std::vector<double> masses = net.masses();
    return DiscretePrior(std::move(atoms), std::move(masses), PriorProvenance::net);
  }
  throw ConfigError("unknown prior kind: " + kind);
}

}  // namespace detail

inline Scenario build_scenario(const json& root) {
  const json& sc = root.at("scenario");
  const json prior_spec = root.contains("prior") ? root.at("prior") : json::object();
  const std::string kind = sc.at("kind").get<std::string>();
  const std::string id = sc.value("id", kind);

  if (kind == "explicit") {
    const json& g = sc.at("grid");
    std::vector<double> points = g.at("points").get<std::vector<double>>();
    std::vector<double> mass = g.contains("cell_mass")
                                   ? g.at("cell_mass").get<std::vector<double>>()
                                   : std::vector<double>(points.size(), 1.0);
    GridPtr grid = std::make_shared<const DominatingGrid>(std::move(points), std::move(mass));
    GridDensity p0 = normalize(GridDensity(grid, sc.at("p0").get<std::vector<double>>()));
    std::vector<GridDensity> family;
    std::vector<std::string> ids;
    for (const auto& row : sc.at("family")) {
      family.push_back(normalize(GridDensity(grid, row.get<std::vector<double>>())));
      ids.push_back("f" + std::to_string(family.size() - 1));
    }
    std::optional<std::size_t> truth;
    for (std::size_t i = 0; i < family.size(); ++i) {
      if (total_variation_distance(family[i], p0) == 0.0) truth = i;
    }
    DiscretePrior prior = detail::build_family_prior(prior_spec, family, ids, truth);
    return Scenario{id, std::move(p0), std::move(prior), std::nullopt, std::nullopt,
                    std::nullopt, std::nullopt, truth, {}, "", 0.0};
  }

  if (kind == "bernoulli_mesh") {
    const double mesh = detail::jget(sc, "mesh", 0.01);
    const double lo = detail::jget(sc, "lo", mesh);
    const double hi = detail::jget(sc, "hi", 1.0 - mesh);
    const double p0v = detail::jget(sc, "p0", 0.5);
    GridPtr grid = DominatingGrid::integer_points(2);
    std::vector<GridDensity> family;
    std::vector<std::string> ids;
    std::optional<std::size_t> truth;
    for (double p = lo; p < hi + mesh / 4.0; p += mesh) {
      family.push_back(detail::bernoulli_density(grid, p));
      ids.push_back("p" + std::to_string(p));
      if (std::abs(p - p0v) < mesh / 4.0) truth = family.size() - 1;
    }
    if (!truth) throw ConfigError("bernoulli mesh must contain the true parameter");
    GridDensity p0 = detail::bernoulli_density(grid, p0v);
    DiscretePrior prior = detail::build_family_prior(prior_spec, family, ids, truth);
    return Scenario{id, std::move(p0), std::move(prior), std::nullopt, std::nullopt,
                    std::nullopt, std::nullopt, truth, {}, "", 0.0};
  }

  if (kind == "fixed_width") {
    FixedWidthParams params;
    params.theta_lo = detail::jget(sc, "theta_lo", -0.3);
    params.theta_hi = detail::jget(sc, "theta_hi", 0.3);
    params.theta_mesh = detail::jget(sc, "theta_mesh", 0.05);
    params.x_refine = detail::jget_u(sc, "x_refine", 1);
    params.j_cells = detail::jget_u(sc, "j_cells", 40);
    params.m_bound = detail::jget(sc, "m_bound", 1.0);
    params.nuisance_draws = detail::jget_u(sc, "nuisance_draws", 8);
    params.seed = detail::jget_u(sc, "seed", 2);
    FixedWidthModel model = build_fixed_width(params);
    const double theta0 = detail::jget(sc, "theta0", 0.0);
    GridDensity p0 = model.truth_density(theta0);
    DiscretePrior prior =
        detail::build_family_prior(prior_spec, model.family, model.family_ids, std::nullopt);
    std::vector<std::array<double, 2>> thetas;
    for (double t : model.family_theta) thetas.push_back({t, t + 1.0});
    return Scenario{id,
                    std::move(p0),
                    std::move(prior),
                    std::move(thetas),
                    std::array<double, 2>{theta0, theta0 + 1.0},
                    model.f,
                    std::nullopt,
                    std::nullopt,
                    {},
                    "",
                    0.0};
  }

  if (kind == "support_boundary") {
    SupportBoundaryParams params;
    params.sigma = detail::jget(sc, "sigma", 2.0);
    params.m_bound = detail::jget(sc, "m_bound", 1.0);
    params.j_cells = detail::jget_u(sc, "j_cells", 50);
    params.theta_lo = detail::jget(sc, "theta_lo", -0.5);
    params.theta_hi = detail::jget(sc, "theta_hi", 1.5);
    params.theta_mesh = detail::jget(sc, "theta_mesh", 0.1);
    params.x_refine = detail::jget_u(sc, "x_refine", 2);
    params.nuisance_draws = detail::jget_u(sc, "nuisance_draws", 10);
    params.seed = detail::jget_u(sc, "seed", 1);
    SupportBoundaryModel model = build_support_boundary(params);
    const double t01 = detail::jget(sc, "theta0_1", 0.0);
    const double t02 = detail::jget(sc, "theta0_2", 1.0);
    std::optional<std::size_t> truth;
    for (std::size_t k = 0; k < model.family.size(); ++k) {
      if (std::abs(model.family_thetas[k][0] - t01) < 1e-12 &&
          std::abs(model.family_thetas[k][1] - t02) < 1e-12 && model.family_eta[k] == 0) {
        truth = k;
      }
    }
    if (!truth) throw ConfigError("support boundary truth theta pair is not on the mesh");
    GridDensity p0 = model.family[*truth];
    DiscretePrior prior =
        detail::build_family_prior(prior_spec, model.family, model.family_ids, truth);
    return Scenario{id,
                    std::move(p0),
                    std::move(prior),
                    model.family_thetas,
                    std::array<double, 2>{t01, t02},
                    model.f,
                    params.sigma,
                    truth,
                    {},
                    "",
                    0.0};
  }

  if (kind == "mixture_normal" || kind == "mixture_uniform") {
    MixtureParams params;
    params.kind =
        kind == "mixture_normal" ? MixtureKind::normal_location : MixtureKind::uniform_scale;
    params.scale = detail::jget(sc, "scale", 1.0);
    params.latent_lo = detail::jget(sc, "latent_lo", kind == "mixture_normal" ? -1.0 : 0.5);
    params.latent_hi = detail::jget(sc, "latent_hi", kind == "mixture_normal" ? 1.0 : 2.0);
    params.latent_cells = detail::jget_u(sc, "latent_cells", 81);
    params.x_cells = detail::jget_u(sc, "x_cells", 120);
    params.x_lo = detail::jget(sc, "x_lo", -6.0);
    params.x_hi = detail::jget(sc, "x_hi", 6.0);
    params.truncation = detail::jget_u(sc, "truncation", 20);
    params.draws = detail::jget_u(sc, "draws", 100);
    params.concentration = detail::jget(sc, "concentration", 1.0);
    params.seed = detail::jget_u(sc, "seed", 5);
    MixtureModel model = build_mixture(params);
    GridDensity p0 = model.prior.atom(model.truth_index).density;
    return Scenario{id,
                    std::move(p0),
                    model.prior,
                    std::nullopt,
                    std::nullopt,
                    std::nullopt,
                    std::nullopt,
                    model.truth_index,
                    {},
                    "",
                    0.0};
  }

  throw ConfigError("unknown scenario kind: " + kind);
}

// Fills the target atom mask from the "target" object.
inline void apply_target(Scenario& scenario, const json& root) {
  if (!root.contains("target")) return;
  const json& t = root.at("target");
  const std::string kind = t.at("kind").get<std::string>();
  const double eps = t.at("epsilon").get<double>();
  scenario.target_epsilon = eps;
  scenario.target_mask.assign(scenario.prior.size(), 0);
  if (kind == "hellinger_complement") {
    scenario.target_desc = "H(P, P0) > " + std::to_string(eps);
    for (std::size_t i = 0; i < scenario.prior.size(); ++i) {
      scenario.target_mask[i] =
          hellinger_distance(scenario.prior.atom(i).density, scenario.p0) > eps ? 1 : 0;
    }
    return;
  }
  if (kind == "kl_complement") {
    scenario.target_desc = "KL(P0||P) >= " + std::to_string(eps);
    for (std::size_t i = 0; i < scenario.prior.size(); ++i) {
      scenario.target_mask[i] =
          kl_divergence(scenario.p0, scenario.prior.atom(i).density) >= eps ? 1 : 0;
    }
    return;
  }
  if (kind == "theta_ball_complement") {
    if (!scenario.thetas || !scenario.theta0) {
      throw ConfigError("theta target needs a theta-indexed scenario");
    }
    scenario.target_desc = "max|theta - theta0| > " + std::to_string(eps);
    for (std::size_t i = 0; i < scenario.prior.size(); ++i) {
      const auto& th = (*scenario.thetas)[i];
      const double d = std::max(std::abs(th[0] - (*scenario.theta0)[0]),
                                std::abs(th[1] - (*scenario.theta0)[1]));
      scenario.target_mask[i] = d > eps ? 1 : 0;
    }
    return;
  }
  throw ConfigError("unknown target kind: " + kind);
}

inline ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    Scenario scenario = build_scenario(root);
    apply_target(scenario, root);
    ExperimentConfig cfg{std::move(scenario),
                         {},
                         root.value("replications", std::size_t(1)),
                         root.value("seed", std::uint64_t(1)),
                         {},
                         root.contains("certificates") ? root.at("certificates") : json::array(),
                         root.contains("oracle") ? root.at("oracle") : json::object(),
                         text};
    if (root.contains("schedule")) {
      cfg.schedule = root.at("schedule").get<std::vector<std::size_t>>();
      for (std::size_t i = 1; i < cfg.schedule.size(); ++i) {
        if (!(cfg.schedule[i] > cfg.schedule[i - 1])) {
          throw ConfigError("schedule must be strictly increasing");
        }
      }
    }
    if (!(cfg.replications >= 1)) throw ConfigError("replications must be >= 1");
    if (root.contains("tolerances")) {
      const json& t = root.at("tolerances");
      cfg.tolerances.alpha_tol = detail::jget(t, "alpha_tol", cfg.tolerances.alpha_tol);
      cfg.tolerances.inner_tol = detail::jget(t, "inner_tol", cfg.tolerances.inner_tol);
      cfg.tolerances.fw_max_iter = detail::jget_u(t, "fw_max_iter", cfg.tolerances.fw_max_iter);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Runs every certificate requested by the config; the returned flags say
// whether each certificate matched its declared expectation ("pass" by
// default, "fail" for deliberate counterexample scenarios).
struct CertificateRun {
  Certificate certificate;
  std::string expect;
  bool as_expected = false;
};

inline std::vector<CertificateRun> run_certificates(const ExperimentConfig& cfg) {
  std::vector<CertificateRun> out;
  const Scenario& sc = cfg.scenario;
  CertifyOptions opts;
  opts.power = cfg.tolerances;
  for (const json& spec : cfg.certificates) {
    const std::string kind = spec.at("kind").get<std::string>();
    const std::string expect = spec.value("expect", "pass");
    Certificate cert;
    if (kind == "schwartz") {
      cert = certify_schwartz(sc.p0, sc.prior, spec.at("epsilon").get<double>(), opts);
    } else if (kind == "kl_consistency") {
      std::optional<double> radius;
      if (spec.contains("cover_radius")) radius = spec.at("cover_radius").get<double>();
      cert = certify_kl_consistency(sc.p0, sc.prior, spec.at("epsilon").get<double>(), opts,
                                    radius);
    } else if (kind == "metric_ball") {
      const double eps = spec.at("epsilon").get<double>();
      const double r = spec.value("r", 2.0);
      MetricBallOptions mb;
      mb.certify = opts;
      mb.eps_prime = spec.value("eps_prime", 0.0);
      double L;
      if (!spec.contains("L") || spec.at("L").is_string()) {
        // envelope scan over the candidate ball, ignoring support-violating pairs
        const double ep = mb.eps_prime > 0.0 ? mb.eps_prime : eps;
        double scan = 0.0;
        for (std::size_t qi = 0; qi < sc.prior.size(); ++qi) {
          if (!(sc.prior.mass(qi) > 0.0)) continue;
          const GridDensity& q = sc.prior.atom(qi).density;
          if (divergence(DivergenceKind::matusita(r), q, sc.p0) > ep) continue;
          const double e0 = l2_ratio_norm(sc.p0, q);
          if (std::isfinite(e0)) scan = std::max(scan, e0);
          for (std::size_t pi = 0; pi < sc.prior.size(); ++pi) {
            const double e = l2_ratio_norm(sc.prior.atom(pi).density, q);
            if (std::isfinite(e)) scan = std::max(scan, e);
          }
        }
        if (!(scan > 0.0)) throw ConfigError("envelope scan found no finite pair");
        L = scan * 1.0000001;
      } else {
        L = spec.at("L").get<double>();
      }
      cert = certify_metric_ball(sc.p0, sc.prior, eps, r, L, mb);
    } else if (kind == "marginal") {
      if (!sc.thetas || !sc.theta0) throw ConfigError("marginal certificate needs thetas");
      MarginalOptions mo;
      mo.certify = opts;
      mo.s = spec.value("s", 2.0);
      if (spec.contains("delta")) mo.delta = spec.at("delta").get<double>();
      const double eps = spec.at("epsilon").get<double>();
      if (sc.f && sc.sigma) mo.f_eps_over_sigma = (*sc.f)(eps / *sc.sigma);
      cert = certify_marginal(sc.p0, sc.prior, *sc.thetas, *sc.theta0, eps, mo);
    } else if (kind == "fixed_width_bands") {
      if (!sc.thetas || !sc.theta0 || !sc.f) {
        throw ConfigError("fixed_width_bands needs a fixed-width scenario");
      }
      const double eps = spec.at("epsilon").get<double>();
      std::vector<double> theta_scalar;
      for (const auto& th : *sc.thetas) theta_scalar.push_back(th[0]);
      const double mesh = spec.value("theta_mesh", 0.05);
      FixedWidthPieces pieces =
          fixed_width_pieces(theta_scalar, (*sc.theta0)[0], eps, mesh);
      Cover cover;
      cover.target_desc = "|theta - theta0| > " + std::to_string(eps);
      std::vector<std::vector<std::size_t>> bsets;
      if (!pieces.v_plus.empty()) {
        cover.pieces.push_back(pieces.v_plus);
        bsets.push_back(pieces.b_plus);
      }
      if (!pieces.v_minus.empty()) {
        cover.pieces.push_back(pieces.v_minus);
        bsets.push_back(pieces.b_minus);
      }
      cert = certify_main(sc.p0, sc.prior, cover, bsets, opts, "fixed_width_bands");
      const double bound = 1.0 - (*sc.f)(eps);
      for (PieceReport& p : cert.per_piece) {
        p.proof_bound = bound;
        p.proof_bound_ok = p.pi_value <= bound + 1e-9;
        if (!p.proof_bound_ok && cert.pass) {
          cert.pass = false;
          cert.failing_condition = "proof_bound";
        }
      }
    } else if (kind == "kl_prior_probe") {
      std::vector<double> deltas = spec.contains("deltas")
                                       ? spec.at("deltas").get<std::vector<double>>()
                                       : opts.kl_deltas;
      KlPriorReport rep = kl_prior_check(sc.p0, sc.prior, deltas);
      cert.theorem = "kl_prior_probe";
      cert.target_desc = "Pi{KL(P0||Q) < delta} > 0 for all deltas";
      cert.pass = rep.pass;
      cert.domination = domination_check(sc.p0, sc.prior);
      if (!rep.pass) cert.failing_condition = "kl_prior";
      std::ostringstream os;
      os << "inf KL over charged atoms = " << rep.inf_kl;
      cert.notes.push_back(os.str());
    } else {
      throw ConfigError("unknown certificate kind: " + kind);
    }
    CertificateRun run{std::move(cert), expect, false};
    run.as_expected = (expect == "fail") ? !run.certificate.pass : run.certificate.pass;
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace conslab
