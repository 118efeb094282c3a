#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "conslab/config.hpp"
#include "conslab/experiment.hpp"
#include "conslab/errors.hpp"

namespace conslab {

// Shortest decimal that round-trips the double exactly.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (x == kInf) return "inf";
  if (x == -kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == x) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof shorter, "%.*g", prec, x);
      std::sscanf(shorter, "%lf", &back);
      if (back == x) return shorter;
    }
  }
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

struct CsvRow {
  std::string scenario_id;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double target_mass = 0.0;
  double log_target_mass = 0.0;
  double bound_value = 0.0;
  int domination_ok = 1;
};

inline constexpr const char* kCsvHeader =
    "scenario_id,replication,seed,n,target_mass,log_target_mass,bound_value,domination_ok";

// Exact zeros are written as 0 in the mass column and censored at 1e-300 in
// the log column.
inline std::vector<CsvRow> result_rows(const ExperimentConfig& cfg,
                                       const ExperimentResult& result) {
  std::vector<CsvRow> rows;
  for (const Trajectory& traj : result.trajectories) {
    for (std::size_t k = 0; k < traj.points.size(); ++k) {
      const TrajectoryPoint& pt = traj.points[k];
      CsvRow row;
      row.scenario_id = cfg.scenario.id;
      row.replication = traj.replication;
      row.seed = traj.seed_key;
      row.n = pt.n;
      row.target_mass = pt.mass;
      row.log_target_mass =
          std::isnan(pt.mass) ? std::numeric_limits<double>::quiet_NaN()
                              : std::log(std::max(pt.mass, 1e-300));
      row.bound_value = k < result.bound_at_n.size()
                            ? result.bound_at_n[k]
                            : std::numeric_limits<double>::quiet_NaN();
      row.domination_ok = pt.dom_ok ? 1 : 0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string rows_to_csv(const std::vector<CsvRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const CsvRow& r : rows) {
    os << r.scenario_id << ',' << r.replication << ',' << r.seed << ',' << r.n << ','
       << format_double(r.target_mass) << ',' << format_double(r.log_target_mass) << ','
       << format_double(r.bound_value) << ',' << r.domination_ok << "\n";
  }
  return os.str();
}

inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError("results csv is missing the mandatory header row");
  }
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    CsvRow r;
    std::getline(ls, r.scenario_id, ',');
    std::getline(ls, field, ',');
    r.replication = std::stoull(field);
    std::getline(ls, field, ',');
    r.seed = std::stoull(field);
    std::getline(ls, field, ',');
    r.n = std::stoull(field);
    std::getline(ls, field, ',');
    r.target_mass = parse_double(field);
    std::getline(ls, field, ',');
    r.log_target_mass = parse_double(field);
    std::getline(ls, field, ',');
    r.bound_value = parse_double(field);
    std::getline(ls, field, ',');
    r.domination_ok = std::stoi(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct SeriesSummary {
  std::vector<std::size_t> ns;
  std::vector<double> q10, q50, q90;
  std::vector<double> bound;
  std::vector<double> zero_fraction;
  std::size_t replications = 0;
  std::size_t breached_rows = 0;
};

inline SeriesSummary summarize_rows(const std::vector<CsvRow>& rows) {
  SeriesSummary s;
  std::vector<std::size_t> ns;
  for (const CsvRow& r : rows) {
    bool seen = false;
    for (std::size_t n : ns) seen = seen || n == r.n;
    if (!seen) ns.push_back(r.n);
    s.replications = std::max(s.replications, r.replication + 1);
    if (!r.domination_ok) ++s.breached_rows;
  }
  std::sort(ns.begin(), ns.end());
  auto quantile = [](std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double idx = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] * (1.0 - (idx - double(lo))) + v[hi] * (idx - double(lo));
  };
  for (std::size_t n : ns) {
    std::vector<double> vals;
    double bound = std::numeric_limits<double>::quiet_NaN();
    std::size_t zeros = 0, total = 0;
    for (const CsvRow& r : rows) {
      if (r.n != n) continue;
      ++total;
      if (!std::isnan(r.bound_value)) bound = r.bound_value;
      if (!std::isnan(r.target_mass)) {
        vals.push_back(r.target_mass);
        if (r.target_mass == 0.0) ++zeros;
      }
    }
    s.ns.push_back(n);
    s.q10.push_back(quantile(vals, 0.1));
    s.q50.push_back(quantile(vals, 0.5));
    s.q90.push_back(quantile(vals, 0.9));
    s.bound.push_back(bound);
    s.zero_fraction.push_back(total ? double(zeros) / double(total) : 0.0);
  }
  return s;
}

inline std::string summary_text(const SeriesSummary& s, const std::string& certificate_text) {
  std::ostringstream os;
  os << "replications: " << s.replications << "\n";
  os << "rows with domination breach: " << s.breached_rows << "\n";
  os << "almost-sure statements are represented by quantiles over finitely many"
        " replications; the q10/q50/q90 columns below are that convention\n";
  os << "n,q10,q50,q90,bound,zero_fraction\n";
  for (std::size_t k = 0; k < s.ns.size(); ++k) {
    os << s.ns[k] << ',' << format_double(s.q10[k]) << ',' << format_double(s.q50[k]) << ','
       << format_double(s.q90[k]) << ',' << format_double(s.bound[k]) << ','
       << format_double(s.zero_fraction[k]) << "\n";
  }
  std::vector<double> medians = s.q50;
  bool fittable = s.ns.size() >= 3;
  if (fittable) {
    try {
      DecayFit fit = decay_fit(s.ns, medians);
      os << "decay_fit slope: " << format_double(fit.slope)
         << " intercept: " << format_double(fit.intercept)
         << " points: " << fit.points_used
         << " zero_fraction: " << format_double(fit.zero_fraction) << "\n";
    } catch (const Error& e) {
      os << "decay_fit: " << e.what() << "\n";
    }
  }
  if (!certificate_text.empty()) {
    os << "--- certificate ---\n" << certificate_text;
  }
  return os.str();
}

// Minimal line plot: median and quantile band of log10 mass against n, with
// the certificate bound overlaid when present.
inline std::string svg_plot(const SeriesSummary& s) {
  const double width = 640, height = 420, ml = 60, mr = 20, mt = 20, mb = 40;
  double n_min = kInf, n_max = -kInf, y_min = 0.0, y_max = -300.0;
  auto ylog = [](double v) { return std::log10(std::max(v, 1e-300)); };
  for (std::size_t k = 0; k < s.ns.size(); ++k) {
    n_min = std::min(n_min, double(s.ns[k]));
    n_max = std::max(n_max, double(s.ns[k]));
    for (double v : {s.q10[k], s.q50[k], s.q90[k], s.bound[k]}) {
      if (std::isnan(v)) continue;
      y_max = std::max(y_max, ylog(v));
      y_min = std::min(y_min, ylog(v));
    }
  }
  if (!(n_max > n_min)) {
    n_max = n_min + 1.0;
  }
  if (!(y_max > y_min)) {
    y_max = y_min + 1.0;
  }
  auto px = [&](double n) { return ml + (n - n_min) / (n_max - n_min) * (width - ml - mr); };
  auto py = [&](double v) {
    return height - mb - (ylog(v) - y_min) / (y_max - y_min) * (height - mt - mb);
  };
  auto polyline = [&](const std::vector<double>& ys, const char* color, const char* dash) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (dash[0]) os << " stroke-dasharray=\"" << dash << "\"";
    os << " points=\"";
    for (std::size_t k = 0; k < s.ns.size(); ++k) {
      if (std::isnan(ys[k])) continue;
      os << px(double(s.ns[k])) << ',' << py(ys[k]) << ' ';
    }
    os << "\"/>\n";
    return os.str();
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
     << height - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (width / 2) << "\" y=\"" << height - 8
     << "\" font-size=\"12\" text-anchor=\"middle\">n</text>\n";
  os << "<text x=\"14\" y=\"" << (height / 2)
     << "\" font-size=\"12\" transform=\"rotate(-90 14 " << (height / 2)
     << ")\" text-anchor=\"middle\">log10 target mass</text>\n";
  os << polyline(s.q10, "#8ecae6", "4,3");
  os << polyline(s.q90, "#8ecae6", "4,3");
  os << polyline(s.q50, "#023047", "");
  os << polyline(s.bound, "#d62828", "7,4");
  os << "<text x=\"" << width - mr - 180 << "\" y=\"" << mt + 14
     << "\" font-size=\"12\" fill=\"#023047\">median</text>\n";
  os << "<text x=\"" << width - mr - 180 << "\" y=\"" << mt + 30
     << "\" font-size=\"12\" fill=\"#8ecae6\">q10 / q90</text>\n";
  os << "<text x=\"" << width - mr - 180 << "\" y=\"" << mt + 46
     << "\" font-size=\"12\" fill=\"#d62828\">certificate bound</text>\n";
  os << "</svg>\n";
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file: " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing output file: " + path.string());
}

// Writes results.csv, the bit-exact config echo, and the certificate text
// report next to each other. Refuses empty results before creating any file.
inline void emit_report(const std::filesystem::path& out_dir, const ExperimentConfig& cfg,
                        const ExperimentResult& result) {
  if (result.trajectories.empty() || cfg.schedule.empty()) {
    throw DegenerateInputError("refusing to emit a report for an empty trajectory set");
  }
  std::filesystem::create_directories(out_dir);
  const std::vector<CsvRow> rows = result_rows(cfg, result);
  write_file(out_dir / "results.csv", rows_to_csv(rows));
  write_file(out_dir / "config_echo.json", cfg.raw_text);
  std::ostringstream cert;
  for (const CertificateRun& run : result.certificates) {
    cert << run.certificate.text();
    cert << "expected: " << run.expect << (run.as_expected ? " (as expected)" : " (MISMATCH)")
         << "\n\n";
  }
  write_file(out_dir / "certificate.txt", cert.str());
}

}  // namespace conslab
