#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vdl/classifier.hpp"
#include "vdl/errors.hpp"

namespace vdl {

/// EARLY mixes entropy and distance terms; SURROGATE uses squared deviations only.
enum class Variant { early, surrogate };

/// 0/1 multipliers on the representativity, diversity and ambiguity terms.
/// The entropic regularizer on the memberships is always active.
struct TermGates {
  bool rep = true;
  bool div = true;
  bool amb = true;

  bool operator==(const TermGates&) const = default;
};

struct OptimizerConfig {
  Variant variant = Variant::surrogate;
  std::size_t k = 16;
  std::optional<double> alpha;  // diversity weight, defaults to 1/k
  std::optional<double> beta;   // ambiguity weight, defaults to 1/k
  // gamma = rho * mean |bracket|. Values near 1 put gamma above the clustering
  // critical temperature on most data and every exemplar collapses onto the mean.
  double rho = 0.05;
  TermGates gates;
  double epsilon = 1e-3;        // summed entrywise-L1 step below which the solve stops
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;

  double alpha_value() const { return alpha.value_or(1.0 / static_cast<double>(k)); }
  double beta_value() const { return beta.value_or(1.0 / static_cast<double>(k)); }
};

inline constexpr double kGammaFloor = 1e-12;
inline constexpr double kRowSumTolerance = 1e-9;

/// Entry (i,k) = |x_i - D_k|^2 for rows x_i of `x` (n x d) and D_k of `exemplars` (K x d).
inline Eigen::MatrixXd squared_distance_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& exemplars) {
  if (x.cols() != exemplars.cols()) {
    throw std::invalid_argument("squared_distance_matrix: dimension mismatch (" + std::to_string(x.cols()) + " vs " +
                                std::to_string(exemplars.cols()) + ")");
  }
  Eigen::MatrixXd out(x.rows(), exemplars.rows());
  for (Eigen::Index k = 0; k < exemplars.rows(); ++k)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, k) = (x.row(i) - exemplars.row(k)).squaredNorm();
  return out;
}

inline void require_row_stochastic(const Eigen::MatrixXd& mu, const char* where) {
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    const double s = mu.row(i).sum();
    if (!(mu.row(i).minCoeff() >= 0.0) || std::abs(s - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << where << ": membership row " << i << " is not on the simplex (sum " << s << ")";
      throw ContractViolation(msg.str());
    }
  }
}

/// gamma = rho * mean |entry|, floored at kGammaFloor.
inline double gamma_policy(const Eigen::MatrixXd& bracket, double rho) {
  const double mean_abs = bracket.size() == 0 ? 0.0 : bracket.cwiseAbs().mean();
  return std::max(rho * mean_abs, kGammaFloor);
}

/// Column masses m_k = (1/n) sum_i mu_ik as a row vector.
inline Eigen::RowVectorXd column_masses(const Eigen::MatrixXd& mu) {
  return mu.colwise().sum() / static_cast<double>(mu.rows());
}

/**
 * The matrix inside the exponential of the membership update:
 *   rep * d(X, D) + div * (alpha/n) * 1_n r
 * with r_k = 1 + log m_k (early) or m_k - 1/K (surrogate), masses taken from
 * the previous memberships. Masses entering the log are floored at the
 * smallest normal double.
 */
inline Eigen::MatrixXd membership_bracket(const Eigen::MatrixXd& x, const Eigen::MatrixXd& exemplars,
                                          const Eigen::MatrixXd& mu_prev, const OptimizerConfig& cfg) {
  const Eigen::Index n = x.rows(), K = exemplars.rows();
  Eigen::MatrixXd bracket = Eigen::MatrixXd::Zero(n, K);
  if (cfg.gates.rep) bracket = squared_distance_matrix(x, exemplars);
  const double alpha = cfg.alpha_value();
  if (cfg.gates.div && alpha != 0.0) {
    const Eigen::RowVectorXd m = column_masses(mu_prev);
    Eigen::RowVectorXd r(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      r[k] = cfg.variant == Variant::early ? 1.0 + std::log(std::max(m[k], std::numeric_limits<double>::min()))
                                           : m[k] - 1.0 / static_cast<double>(K);
    }
    bracket.rowwise() += (alpha / static_cast<double>(n)) * r;
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(bracket(i, k))) {
        std::ostringstream msg;
        msg << "membership update: non-finite bracket entry (" << i << ", " << k << ") = " << bracket(i, k);
        throw NumericalError(msg.str());
      }
    }
  }
  return bracket;
}

struct MembershipStep {
  Eigen::MatrixXd mu;
  double gamma = 0.0;
};

/// Row-normalized exp(-bracket / gamma). Each row is shifted by its minimum
/// before exponentiation; the shift cancels in the normalization.
inline Eigen::MatrixXd normalized_exponential(const Eigen::MatrixXd& bracket, double gamma) {
  Eigen::MatrixXd mu(bracket.rows(), bracket.cols());
  for (Eigen::Index i = 0; i < bracket.rows(); ++i) {
    const double lo = bracket.row(i).minCoeff();
    for (Eigen::Index k = 0; k < bracket.cols(); ++k) mu(i, k) = std::exp(-(bracket(i, k) - lo) / gamma);
    mu.row(i) /= mu.row(i).sum();
  }
  return mu;
}

inline MembershipStep membership_update(const Eigen::MatrixXd& x, const Eigen::MatrixXd& exemplars,
                                        const Eigen::MatrixXd& mu_prev, const OptimizerConfig& cfg) {
  require_row_stochastic(mu_prev, "membership_update");
  const Eigen::MatrixXd bracket = membership_bracket(x, exemplars, mu_prev, cfg);
  const double gamma = gamma_policy(bracket, cfg.rho);
  return {normalized_exponential(bracket, gamma), gamma};
}

/// Ambiguity pull on exemplar k: sum_c grad f_c(D_k) * coef_c, where coef_c is
/// log f_c + 1 (early) or f_c - 1/2 (surrogate).
inline Eigen::VectorXd ambiguity_direction(const ClassifierModel& model, const Eigen::VectorXd& exemplar,
                                           Variant variant) {
  const Probabilities p = probabilities(model, exemplar);
  const double coef_change = variant == Variant::early ? std::log(p.change) + 1.0 : p.change - 0.5;
  const double coef_none = variant == Variant::early ? std::log(p.no_change) + 1.0 : p.no_change - 0.5;
  return probability_gradient(model, exemplar, ScoreClass::change) * coef_change +
         probability_gradient(model, exemplar, ScoreClass::no_change) * coef_none;
}

struct ExemplarStep {
  Eigen::MatrixXd exemplars;
  std::size_t frozen = 0;  // columns kept at their previous value by the mass floor
};

/**
 * D_k = (rep * sum_i mu_ik x_i + amb * beta * ambiguity_direction(D_prev_k)) / sum_i mu_ik.
 *
 * A column whose mass sum_i mu_ik falls below 1e-8 * n / K keeps its previous
 * value instead of dividing by a vanishing mass.
 */
inline ExemplarStep exemplar_update(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                                    const Eigen::MatrixXd& exemplars_prev, const ClassifierModel& model,
                                    const OptimizerConfig& cfg) {
  const Eigen::Index n = x.rows(), K = mu.cols();
  if (mu.rows() != n || exemplars_prev.rows() != K || exemplars_prev.cols() != x.cols())
    throw std::invalid_argument("exemplar_update: shape mismatch");
  const double floor = 1e-8 * static_cast<double>(n) / static_cast<double>(K);
  const double beta = cfg.beta_value();
  ExemplarStep out{exemplars_prev, 0};
  for (Eigen::Index k = 0; k < K; ++k) {
    const double mass = mu.col(k).sum();
    if (mass < floor) {
      ++out.frozen;
      continue;
    }
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(x.cols());
    if (cfg.gates.rep) numer = x.transpose() * mu.col(k);
    if (cfg.gates.amb && beta != 0.0) {
      numer += beta * ambiguity_direction(model, exemplars_prev.row(k).transpose(), cfg.variant);
    }
    out.exemplars.row(k) = (numer / mass).transpose();
  }
  if (!out.exemplars.allFinite()) throw NumericalError("exemplar_update: non-finite exemplar");
  return out;
}

struct ObjectiveTerms {
  double representativity = 0.0;
  double diversity = 0.0;
  double ambiguity = 0.0;
  double regularizer = 0.0;
  double total() const { return representativity + diversity + ambiguity + regularizer; }
};

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

/// Gated objective terms, each already multiplied by its weight.
inline ObjectiveTerms objective_terms(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                                      const Eigen::MatrixXd& exemplars, const ClassifierModel& model,
                                      const OptimizerConfig& cfg, double gamma) {
  require_row_stochastic(mu, "objective");
  const Eigen::Index K = mu.cols();
  ObjectiveTerms t;
  if (cfg.gates.rep) t.representativity = mu.cwiseProduct(squared_distance_matrix(x, exemplars)).sum();
  if (cfg.gates.div) {
    const Eigen::RowVectorXd m = column_masses(mu);
    double s = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (cfg.variant == Variant::early) {
        s += xlogx(m[k]);
      } else {
        const double dev = m[k] - 1.0 / static_cast<double>(K);
        s += dev * dev;
      }
    }
    t.diversity = (cfg.variant == Variant::early ? 1.0 : 0.5) * cfg.alpha_value() * s;
  }
  if (cfg.gates.amb) {
    const auto f = scoring_matrix(model, exemplars);
    double s = 0.0;
    for (Eigen::Index k = 0; k < f.cols(); ++k) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        if (cfg.variant == Variant::early) {
          s += xlogx(f(c, k));
        } else {
          const double dev = f(c, k) - 0.5;
          s += dev * dev;
        }
      }
    }
    t.ambiguity = (cfg.variant == Variant::early ? 1.0 : 0.5) * cfg.beta_value() * s;
  }
  double reg = 0.0;
  for (Eigen::Index k = 0; k < mu.cols(); ++k)
    for (Eigen::Index i = 0; i < mu.rows(); ++i) reg += xlogx(mu(i, k));
  t.regularizer = gamma * reg;
  return t;
}

inline double objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu, const Eigen::MatrixXd& exemplars,
                        const ClassifierModel& model, const OptimizerConfig& cfg, double gamma) {
  return objective_terms(x, mu, exemplars, model, cfg, gamma).total();
}

struct OptimizerState {
  Eigen::MatrixXd mu;         // n x K
  Eigen::MatrixXd exemplars;  // K x d
};

/// K distinct seeded data rows as exemplars; memberships are seeded uniform(0,1) draws, row-normalized.
inline OptimizerState initial_state(const Eigen::MatrixXd& x, const OptimizerConfig& cfg) {
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t K = cfg.k;
  if (K == 0) throw std::invalid_argument("solve_display: K must be >= 1");
  if (n < K) throw std::invalid_argument("solve_display: need n >= K (n=" + std::to_string(n) + ", K=" + std::to_string(K) + ")");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (std::size_t r = 0; r < K; ++r) {
    std::uniform_int_distribution<std::size_t> pick(r, n - 1);
    std::swap(rows[r], rows[pick(rng)]);
  }
  OptimizerState s;
  s.exemplars.resize(static_cast<Eigen::Index>(K), x.cols());
  for (std::size_t r = 0; r < K; ++r) s.exemplars.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  s.mu.resize(x.rows(), static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < s.mu.rows(); ++i) {
    for (Eigen::Index k = 0; k < s.mu.cols(); ++k) s.mu(i, k) = unif(rng) + std::numeric_limits<double>::min();
    s.mu.row(i) /= s.mu.row(i).sum();
  }
  return s;
}

struct AlternationStep {
  OptimizerState state;
  double gamma = 0.0;
  std::size_t frozen = 0;
};

/// One block-coordinate pass: memberships from the current exemplars, then
/// exemplars from the fresh memberships.
inline AlternationStep alternate(const Eigen::MatrixXd& x, const OptimizerState& s, const ClassifierModel& model,
                                 const OptimizerConfig& cfg) {
  MembershipStep ms = membership_update(x, s.exemplars, s.mu, cfg);
  ExemplarStep es = exemplar_update(x, ms.mu, s.exemplars, model, cfg);
  return {{std::move(ms.mu), std::move(es.exemplars)}, ms.gamma, es.frozen};
}

struct TrajectoryPoint {
  double objective = 0.0;
  double step_l1 = 0.0;
  double gamma = 0.0;
  std::size_t frozen_columns = 0;
};

struct SolveResult {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd exemplars;
  std::size_t iterations_used = 0;
  std::vector<TrajectoryPoint> trajectory;
  bool converged = false;
};

/**
 * Alternates membership and exemplar updates from `init` until
 * |mu' - mu|_1 + |D' - D|_1 < epsilon or max_iterations passes were made.
 * Each trajectory point holds the objective after the pass, evaluated with
 * the gamma that pass used.
 */
inline SolveResult solve_display(const Eigen::MatrixXd& x, const ClassifierModel& model, const OptimizerConfig& cfg,
                                 OptimizerState init) {
  if (cfg.k == 0 || static_cast<std::size_t>(x.rows()) < cfg.k) throw std::invalid_argument("solve_display: need n >= K >= 1");
  if (init.mu.rows() != x.rows() || init.mu.cols() != static_cast<Eigen::Index>(cfg.k) ||
      init.exemplars.rows() != static_cast<Eigen::Index>(cfg.k) || init.exemplars.cols() != x.cols())
    throw std::invalid_argument("solve_display: initial state shape mismatch");
  SolveResult out;
  OptimizerState cur = std::move(init);
  while (out.iterations_used < cfg.max_iterations) {
    AlternationStep next;
    try {
      next = alternate(x, cur, model, cfg);
    } catch (const NumericalError& e) {
      throw NumericalError("solve_display iteration " + std::to_string(out.iterations_used) + ": " + e.what());
    }
    TrajectoryPoint p;
    p.step_l1 = (next.state.mu - cur.mu).cwiseAbs().sum() + (next.state.exemplars - cur.exemplars).cwiseAbs().sum();
    p.gamma = next.gamma;
    p.frozen_columns = next.frozen;
    p.objective = objective(x, next.state.mu, next.state.exemplars, model, cfg, next.gamma);
    out.trajectory.push_back(p);
    ++out.iterations_used;
    cur = std::move(next.state);
    if (p.step_l1 < cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.mu = std::move(cur.mu);
  out.exemplars = std::move(cur.exemplars);
  return out;
}

inline SolveResult solve_display(const Eigen::MatrixXd& x, const ClassifierModel& model, const OptimizerConfig& cfg) {
  return solve_display(x, model, cfg, initial_state(x, cfg));
}

/// CSV `iter,objective,step_l1,gamma`, one row per pass.
inline void write_trajectory_csv(const SolveResult& r, std::ostream& out) {
  out << "iter,objective,step_l1,gamma\n";
  for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
    const auto& p = r.trajectory[t];
    out << t + 1 << ',' << detail::format_double(p.objective) << ',' << detail::format_double(p.step_l1) << ','
        << detail::format_double(p.gamma) << '\n';
  }
}

}  // namespace vdl
