#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vdl/active_loop.hpp"
#include "vdl/evaluation.hpp"

namespace vdl {

inline std::string gates_name(const TermGates& g) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(g.rep, "rep");
  add(g.div, "div");
  add(g.amb, "amb");
  return out.empty() ? "none" : out;
}

/// One learning curve. Missing EERs are NaN.
struct ReportRow {
  std::string config;
  std::string variant;
  std::vector<double> eers;
  std::optional<double> fixed_auc;  // set when the last column is not the mean of `eers`

  double auc() const {
    if (fixed_auc) return *fixed_auc;
    for (double e : eers)
      if (std::isnan(e)) return std::numeric_limits<double>::quiet_NaN();
    return auc_over_iterations(eers);
  }
};

struct Report {
  std::vector<double> sampling;  // footer, one value per iteration
  std::vector<ReportRow> rows;
};

/// Row label of a session: gate pattern and variant for learned displays, strategy name otherwise.
inline ReportRow report_row(const SessionState& s) {
  ReportRow row;
  if (s.config.strategy == Strategy::learned_early || s.config.strategy == Strategy::learned_surrogate) {
    row.config = gates_name(s.config.optimizer.gates);
    row.variant = s.config.strategy == Strategy::learned_early ? "early" : "surrogate";
  } else {
    row.config = std::string(to_string(s.config.strategy));
    row.variant = "-";
  }
  for (const auto& m : s.metrics) row.eers.push_back(m.eer_percent.value_or(std::numeric_limits<double>::quiet_NaN()));
  return row;
}

inline Report report_table(std::span<const SessionState> sessions) {
  Report r;
  if (sessions.empty()) return r;
  const std::size_t T = sessions.front().metrics.size();
  const std::size_t K = sessions.front().config.k;
  for (const auto& s : sessions) {
    if (s.metrics.size() != T) throw std::invalid_argument("report_table: sessions ran a different number of iterations");
    if (s.config.k != K) throw std::invalid_argument("report_table: sessions use different display sizes");
    r.rows.push_back(report_row(s));
  }
  for (const auto& m : sessions.front().metrics) r.sampling.push_back(m.sampling_percent);
  return r;
}

namespace detail {

inline std::string csv_number(double v) { return std::isnan(v) ? "NA" : format_double(v); }

inline std::string fixed_2dp(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << truncate_2dp(v);
  return out.str();
}

}  // namespace detail

/// `config,variant,iter1..iterT,auc` at full precision, then a `samp` footer row.
inline void write_report_csv(const Report& r, std::ostream& out, const char* auc_column = "auc") {
  out << "config,variant";
  for (std::size_t t = 1; t <= r.sampling.size(); ++t) out << ",iter" << t;
  out << ',' << auc_column << '\n';
  for (const auto& row : r.rows) {
    out << row.config << ',' << row.variant;
    for (double e : row.eers) out << ',' << detail::csv_number(e);
    out << ',' << detail::csv_number(row.auc()) << '\n';
  }
  out << "samp,";
  for (double s : r.sampling) out << ',' << detail::csv_number(s);
  out << ",\n";
}

/// Fixed-width table with two decimals, in the layout of the published ablation table.
inline void write_report_text(const Report& r, std::ostream& out) {
  out << std::left << std::setw(19) << "config" << std::setw(11) << "variant";
  for (std::size_t t = 1; t <= r.sampling.size(); ++t) out << std::right << std::setw(7) << t;
  out << std::right << std::setw(8) << "AUC" << '\n';
  for (const auto& row : r.rows) {
    out << std::left << std::setw(19) << row.config << std::setw(11) << row.variant << std::right;
    for (double e : row.eers) out << std::setw(7) << detail::fixed_2dp(e);
    out << std::setw(8) << detail::fixed_2dp(row.auc()) << '\n';
  }
  out << std::left << std::setw(30) << "Samp%" << std::right;
  for (double s : r.sampling) out << std::setw(7) << detail::fixed_2dp(s);
  out << std::setw(8) << "-" << '\n';
}

/// Entrywise mean and sample standard deviation of same-shaped reports. The
/// deviation report's last column is the deviation of the per-report AUCs.
inline std::pair<Report, Report> aggregate_reports(std::span<const Report> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_reports: nothing to aggregate");
  Report mean = reports.front(), sd = reports.front();
  const double n = static_cast<double>(reports.size());
  for (std::size_t r = 0; r < mean.rows.size(); ++r) {
    for (std::size_t t = 0; t < mean.rows[r].eers.size(); ++t) {
      double s = 0.0;
      for (const auto& rep : reports) s += rep.rows.at(r).eers.at(t);
      const double m = s / n;
      double ss = 0.0;
      for (const auto& rep : reports) ss += (rep.rows[r].eers[t] - m) * (rep.rows[r].eers[t] - m);
      mean.rows[r].eers[t] = m;
      sd.rows[r].eers[t] = reports.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    double a = 0.0, aa = 0.0;
    for (const auto& rep : reports) a += rep.rows[r].auc();
    a /= n;
    for (const auto& rep : reports) aa += (rep.rows[r].auc() - a) * (rep.rows[r].auc() - a);
    sd.rows[r].fixed_auc = reports.size() > 1 ? std::sqrt(aa / (n - 1.0)) : 0.0;
  }
  return {mean, sd};
}

}  // namespace vdl
