#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "conslab/bayes.hpp"
#include "conslab/certify.hpp"
#include "conslab/config.hpp"
#include "conslab/measures.hpp"
#include "conslab/transforms.hpp"

namespace conslab {

struct TrajectoryPoint {
  std::size_t n = 0;
  double mass = std::numeric_limits<double>::quiet_NaN();
  double predictive_loglik = 0.0;
  bool dom_ok = true;
};

struct Trajectory {
  std::size_t replication = 0;
  std::uint64_t seed_key = 0;
  std::vector<TrajectoryPoint> points;  // one per schedule entry
  bool breached = false;
  std::size_t breach_at = 0;  // observation index of the breach
};

struct ExperimentResult {
  std::vector<Trajectory> trajectories;
  std::vector<CertificateRun> certificates;
  std::vector<double> bound_at_n;  // per schedule entry; NaN without a passing certificate
  std::size_t breaches = 0;
};

// Recomputes the certificate's n-sample bound: the sum over pieces of the
// i.i.d. testing bound at the piece's optimal alpha.
inline double certificate_bound_at(const GridDensity& p0, const DiscretePrior& prior,
                                   const Certificate& cert, std::size_t n,
                                   const TestingPowerOptions& opts = {}) {
  if (cert.cover_used.pieces.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < cert.cover_used.pieces.size(); ++i) {
    const std::vector<std::size_t>& b_idx =
        cert.b_sets.size() == 1 ? cert.b_sets[0] : cert.b_sets[i];
    std::vector<GridDensity> v, b;
    for (std::size_t k : cert.cover_used.pieces[i]) v.push_back(prior.atom(k).density);
    std::vector<double> bw;
    const double mass_b = prior.mass_of(b_idx);
    for (std::size_t k : b_idx) {
      b.push_back(prior.atom(k).density);
      bw.push_back(prior.mass(k) / mass_b);
    }
    total += ht_bound_iid(p0, v, b, bw, mass_b, n, cert.per_piece[i].alpha_star, opts).value;
  }
  return total;
}

namespace detail {

inline Trajectory run_one_replication(const Scenario& scenario,
                                      const std::vector<std::size_t>& schedule,
                                      std::uint64_t master_seed, std::size_t rep) {
  Trajectory traj;
  traj.replication = rep;
  CounterRng rng = CounterRng::derive_stream(master_seed, rep);
  traj.seed_key = rng.key();
  const DiscretePrior& prior = scenario.prior;
  const std::vector<double> cdf = cumulative_masses(scenario.p0);
  std::vector<double> lw(prior.size(), 0.0);
  const auto& mask = scenario.target_mask;

  std::size_t next = 0;
  const std::size_t n_max = schedule.empty() ? 0 : schedule.back();
  for (std::size_t n = 1; n <= n_max && next < schedule.size(); ++n) {
    const Observation obs = sample_one(cdf, rng);
    double max_lw = -kInf;
    for (std::size_t i = 0; i < prior.size(); ++i) {
      if (lw[i] == -kInf) continue;
      lw[i] += prior.atom(i).density.log_value(obs);
      if (prior.mass(i) > 0.0) max_lw = std::max(max_lw, lw[i]);
    }
    if (max_lw == -kInf) {
      traj.breached = true;
      traj.breach_at = n - 1;
      // remaining schedule points are recorded as undefined
      for (; next < schedule.size(); ++next) {
        TrajectoryPoint pt;
        pt.n = schedule[next];
        pt.dom_ok = false;
        pt.predictive_loglik = -kInf;
        traj.points.push_back(pt);
      }
      return traj;
    }
    if (n == schedule[next]) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < prior.size(); ++i) {
        if (!(prior.mass(i) > 0.0) || lw[i] == -kInf) continue;
        const double w = prior.mass(i) * std::exp(lw[i] - max_lw);
        den += w;
        if (mask.empty() || mask[i]) num += w;
      }
      TrajectoryPoint pt;
      pt.n = n;
      pt.mass = num / den;
      pt.predictive_loglik = max_lw + std::log(den);
      pt.dom_ok = true;
      traj.points.push_back(pt);
      ++next;
    }
  }
  return traj;
}

}  // namespace detail

// Seeded consistency experiment: per replication, i.i.d.-P0 data are sampled
// incrementally, the posterior is updated, and the target-set mass recorded
// at each scheduled n. Results are a pure function of the master seed; the
// thread count only distributes independent replications.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  ExperimentResult result;
  result.certificates = run_certificates(cfg);
  const Scenario& sc = cfg.scenario;

  result.trajectories.resize(cfg.replications);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      result.trajectories[rep] =
          detail::run_one_replication(sc, cfg.schedule, cfg.master_seed, rep);
    }
  };
  if (threads <= 1 || cfg.replications <= 1) {
    work(0, cfg.replications);
  } else {
    const std::size_t nt = std::min<std::size_t>(threads, cfg.replications);
    std::vector<std::thread> pool;
    const std::size_t chunk = (cfg.replications + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(cfg.replications, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }
  for (const Trajectory& t : result.trajectories) {
    if (t.breached) ++result.breaches;
  }

  // bound overlay from the first passing certificate with a usable cover
  result.bound_at_n.assign(cfg.schedule.size(), std::numeric_limits<double>::quiet_NaN());
  for (const CertificateRun& run : result.certificates) {
    if (run.certificate.pass && !run.certificate.cover_used.pieces.empty()) {
      for (std::size_t k = 0; k < cfg.schedule.size(); ++k) {
        result.bound_at_n[k] = certificate_bound_at(sc.p0, sc.prior, run.certificate,
                                                    cfg.schedule[k], cfg.tolerances);
      }
      break;
    }
  }
  return result;
}

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points_used = 0;
  double zero_fraction = 0.0;  // schedule points with exactly zero mass
  bool all_zero = false;       // slope reported as -inf
};

// Least-squares slope of ln(mass) against n. Exactly-zero masses are
// excluded from the fit (they are reported as a fraction and censored at
// 1e-300 only for log output elsewhere).
inline DecayFit decay_fit(std::span<const std::size_t> ns, std::span<const double> masses) {
  if (ns.size() != masses.size()) throw DegenerateInputError("decay_fit needs matching series");
  DecayFit fit;
  std::vector<double> xs, ys;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (std::isnan(masses[i])) continue;
    if (masses[i] > 0.0) {
      xs.push_back(static_cast<double>(ns[i]));
      ys.push_back(std::log(masses[i]));
    } else {
      ++zeros;
    }
  }
  fit.zero_fraction = ns.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(ns.size());
  if (xs.empty()) {
    fit.all_zero = true;
    fit.slope = -kInf;
    return fit;
  }
  if (xs.size() < 3) {
    throw DegenerateInputError("decay_fit needs at least 3 schedule points with positive mass");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.points_used = xs.size();
  return fit;
}

// Median target mass per schedule entry across replications (breached points
// are skipped).
inline std::vector<double> median_trajectory(const ExperimentResult& result,
                                             std::size_t schedule_size) {
  std::vector<double> medians(schedule_size, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < schedule_size; ++k) {
    std::vector<double> vals;
    for (const Trajectory& t : result.trajectories) {
      if (k < t.points.size() && !std::isnan(t.points[k].mass)) vals.push_back(t.points[k].mass);
    }
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    const std::size_t m = vals.size();
    medians[k] = m % 2 == 1 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  }
  return medians;
}

}  // namespace conslab
