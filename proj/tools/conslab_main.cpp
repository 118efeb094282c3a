// Command-line harness: certificate checks, seeded consistency simulations,
// the exhaustive tiny-instance oracle, and report generation.
//
// Exit codes: 0 all certificates/criteria pass, 1 a named condition failed,
// 2 configuration error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conslab/simlab.hpp"

namespace fs = std::filesystem;
using namespace conslab;

namespace {

int cmd_check(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  std::vector<CertificateRun> runs = run_certificates(cfg);
  if (runs.empty()) {
    std::cout << "no certificates configured\n";
    return 0;
  }
  bool all_ok = true;
  for (const CertificateRun& run : runs) {
    const Certificate& c = run.certificate;
    std::cout << (run.as_expected ? "[OK]   " : "[FAIL] ") << c.theorem << ": "
              << (c.pass ? "pass" : "fail(" + c.failing_condition + ")")
              << " (expected " << run.expect << ")";
    if (c.exponent != kInf && !c.per_piece.empty()) {
      std::cout << " exponent=" << format_double(c.exponent);
    }
    std::cout << "\n";
    std::cout << c.text();
    all_ok = all_ok && run.as_expected;
  }
  return all_ok ? 0 : 1;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::size_t reps_override, std::uint64_t seed_override, bool has_seed,
                 std::size_t threads) {
  ExperimentConfig cfg = load_config(config_path);
  if (reps_override > 0) cfg.replications = reps_override;
  if (has_seed) cfg.master_seed = seed_override;
  if (cfg.schedule.empty()) throw ConfigError("simulate needs a schedule");
  ExperimentResult result = run_experiment(cfg, threads);
  emit_report(fs::path(out_dir), cfg, result);
  std::cout << "wrote " << (fs::path(out_dir) / "results.csv").string() << " ("
            << result.trajectories.size() << " replications, " << cfg.schedule.size()
            << " schedule points, " << result.breaches << " breaches)\n";
  bool all_ok = true;
  for (const CertificateRun& run : result.certificates) {
    std::cout << (run.as_expected ? "[OK]   " : "[FAIL] ") << run.certificate.theorem << ": "
              << (run.certificate.pass
                      ? "pass"
                      : "fail(" + run.certificate.failing_condition + ")")
              << "\n";
    all_ok = all_ok && run.as_expected;
  }
  return all_ok ? 0 : 1;
}

int cmd_oracle(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  const std::size_t instances =
      cfg.oracle.contains("instances") ? cfg.oracle.at("instances").get<std::size_t>() : 25;
  const std::uint64_t seed =
      cfg.oracle.contains("seed") ? cfg.oracle.at("seed").get<std::uint64_t>() : 7;
  CounterRng rng(seed);
  double worst_ht = kInf, worst_walker = kInf;
  std::cout << "instance,n,exact,ht_bound,ht_alpha,walker_bound,slack_ht,slack_walker\n";
  for (std::size_t t = 0; t < instances; ++t) {
    OracleInstance inst = random_oracle_instance(rng);
    OracleComparison cmp =
        oracle_compare(inst.p0, inst.prior, inst.target, inst.b_set, inst.n, cfg.tolerances);
    std::cout << t << ',' << cmp.n << ',' << format_double(cmp.exact) << ','
              << format_double(cmp.ht_bound) << ',' << format_double(cmp.ht_alpha) << ','
              << format_double(cmp.walker) << ',' << format_double(cmp.slack_ht) << ','
              << format_double(cmp.slack_walker) << "\n";
    worst_ht = std::min(worst_ht, cmp.slack_ht);
    worst_walker = std::min(worst_walker, cmp.slack_walker);
  }
  std::cout << "worst slack: ht=" << format_double(worst_ht)
            << " walker=" << format_double(worst_walker) << "\n";
  const bool ok = worst_ht >= -1e-9 && worst_walker >= -1e-9;
  std::cout << (ok ? "[OK]   oracle dominance holds\n" : "[FAIL] oracle dominance violated\n");
  return ok ? 0 : 1;
}

int cmd_report(const std::string& dir, bool svg) {
  const fs::path base(dir);
  std::ifstream in(base / "results.csv", std::ios::binary);
  if (!in) throw ConfigError("no results.csv in " + dir);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::vector<CsvRow> rows = parse_csv(ss.str());
  if (rows.empty()) throw ConfigError("results.csv contains no data rows");
  SeriesSummary summary = summarize_rows(rows);
  std::string cert_text;
  std::ifstream cert(base / "certificate.txt", std::ios::binary);
  if (cert) {
    std::ostringstream cs;
    cs << cert.rdbuf();
    cert_text = cs.str();
  }
  const std::string text = summary_text(summary, cert_text);
  write_file(base / "summary.txt", text);
  std::cout << text;
  if (svg) {
    write_file(base / "plots.svg", svg_plot(summary));
    std::cout << "wrote " << (base / "plots.svg").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite-grid laboratory for Bayesian posterior consistency"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", report_dir;
  std::size_t reps = 0, threads = 1;
  std::uint64_t seed = 0;
  bool svg = false;

  CLI::App* check = app.add_subcommand("check", "run the configured certificates");
  check->add_option("config", config_path, "scenario config (json)")->required();

  CLI::App* simulate = app.add_subcommand("simulate", "run the seeded consistency simulation");
  simulate->add_option("config", config_path, "scenario config (json)")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--reps", reps, "override replication count");
  CLI::Option* seed_opt = simulate->add_option("--seed", seed, "override master seed");
  simulate->add_option("--threads", threads, "worker threads (results are thread-invariant)");

  CLI::App* oracle = app.add_subcommand("oracle", "exhaustive tiny-instance bound comparison");
  oracle->add_option("config", config_path, "scenario config (json)")->required();

  CLI::App* report = app.add_subcommand("report", "summarize a simulation output directory");
  report->add_option("dir", report_dir, "directory holding results.csv")->required();
  report->add_flag("--svg", svg, "also write plots.svg");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check(config_path);
    if (simulate->parsed()) {
      return cmd_simulate(config_path, out_dir, reps, seed, seed_opt->count() > 0, threads);
    }
    if (oracle->parsed()) return cmd_oracle(config_path);
    if (report->parsed()) return cmd_report(report_dir, svg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
