#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vdl/dataset.hpp"
#include "vdl/errors.hpp"

namespace vdl {

/// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor] so logs stay finite.
inline constexpr double kProbabilityFloor = 1e-12;

struct ClassifierOptions {
  double reg_c = 1.0;        // hinge-loss weight (inverse regularization strength)
  double temperature = 1.0;  // probability = sigmoid(score / temperature)
  bool balanced = false;     // per-class C scaled by n / (2 n_class)
  double tolerance = 1e-8;   // maximal KKT violation at termination
  std::size_t max_iterations = 10'000'000;
};

/// Linear max-margin change classifier with sigmoid-calibrated probabilities.
struct ClassifierModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double reg_c = 1.0;
  double temperature = 1.0;
  std::size_t trained_on = 0;
  bool degenerate = false;  // trained on a single class: constant score
};

enum class ScoreClass { change = 1, no_change = 2 };

struct Probabilities {
  double change;
  double no_change;
};

namespace detail {

inline void check_dim(const ClassifierModel& m, Eigen::Index size) {
  if (size != m.weights.size()) {
    throw std::invalid_argument("feature dimension " + std::to_string(size) + " does not match model dimension " +
                                std::to_string(m.weights.size()));
  }
}

inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace detail

inline double score(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  detail::check_dim(model, x.size());
  return model.weights.dot(x) + model.bias;
}

inline Probabilities probabilities(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double p = std::clamp(detail::sigmoid(score(model, x) / model.temperature), kProbabilityFloor,
                              1.0 - kProbabilityFloor);
  return {p, 1.0 - p};
}

/// 2 x K matrix; column k holds (p_change, p_no_change) of exemplar row k of `exemplars`.
inline Eigen::Matrix<double, 2, Eigen::Dynamic> scoring_matrix(const ClassifierModel& model,
                                                               const Eigen::MatrixXd& exemplars) {
  detail::check_dim(model, exemplars.cols());
  Eigen::Matrix<double, 2, Eigen::Dynamic> f(2, exemplars.rows());
  for (Eigen::Index k = 0; k < exemplars.rows(); ++k) {
    const Probabilities p = probabilities(model, exemplars.row(k).transpose());
    f(0, k) = p.change;
    f(1, k) = p.no_change;
  }
  return f;
}

/// Gradient of the class probability with respect to the input vector. Uses the
/// unclamped sigmoid; the clamp only bites where the gradient is below 1e-12.
inline Eigen::VectorXd probability_gradient(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                            ScoreClass cls) {
  const double p = detail::sigmoid(score(model, x) / model.temperature);
  const double g = p * (1.0 - p) / model.temperature;
  return (cls == ScoreClass::change ? g : -g) * model.weights;
}

/// 0.5 |w|^2 + sum_i C_i max(0, 1 - y_i (w.x_i + b)).
inline double hinge_objective(const Eigen::VectorXd& weights, double bias, const Eigen::MatrixXd& x,
                              std::span<const Label> y, const ClassifierOptions& opts = {}) {
  std::size_t n_pos = 0;
  for (Label l : y) n_pos += (l == Label::positive);
  const double n = static_cast<double>(y.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = to_int(y[i]);
    double c = opts.reg_c;
    if (opts.balanced) c *= n / (2.0 * static_cast<double>(yi > 0 ? n_pos : y.size() - n_pos));
    const double margin = yi * (weights.dot(x.row(static_cast<Eigen::Index>(i)).transpose()) + bias);
    loss += c * std::max(0.0, 1.0 - margin);
  }
  return 0.5 * weights.squaredNorm() + loss;
}

/**
 * Trains an L2-regularized hinge-loss SVM with unregularized bias by SMO on
 * the dual (second-order working-set selection, linear Gram matrix cached).
 * Fully deterministic: identical input produces bitwise identical weights.
 *
 * A single-class input yields a constant-score model (`degenerate`), with
 * score +1 for all-positive and -1 for all-negative input.
 */
inline ClassifierModel train(const Eigen::MatrixXd& x, std::span<const Label> y, const ClassifierOptions& opts = {}) {
  if (y.empty()) throw std::invalid_argument("train: no labeled samples");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("train: row/label count mismatch");
  if (!(opts.reg_c > 0)) throw std::invalid_argument("train: reg_c must be positive");
  if (!(opts.temperature > 0)) throw std::invalid_argument("train: temperature must be positive");

  ClassifierModel model;
  model.weights = Eigen::VectorXd::Zero(x.cols());
  model.reg_c = opts.reg_c;
  model.temperature = opts.temperature;
  model.trained_on = y.size();

  const auto n = static_cast<Eigen::Index>(y.size());
  std::size_t n_pos = 0;
  for (Label l : y) n_pos += (l == Label::positive);
  if (n_pos == 0 || n_pos == y.size()) {
    model.degenerate = true;
    model.bias = n_pos == 0 ? -1.0 : 1.0;
    return model;
  }

  Eigen::VectorXd yv(n), upper(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    yv[i] = to_int(y[static_cast<std::size_t>(i)]);
    double c = opts.reg_c;
    if (opts.balanced) {
      const auto n_cls = yv[i] > 0 ? n_pos : y.size() - n_pos;
      c *= static_cast<double>(n) / (2.0 * static_cast<double>(n_cls));
    }
    upper[i] = c;
  }
  const Eigen::MatrixXd gram = x * x.transpose();
  constexpr double kTau = 1e-12;

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // Q alpha - 1
  auto at_upper = [&](Eigen::Index t) { return alpha[t] >= upper[t]; };
  auto at_lower = [&](Eigen::Index t) { return alpha[t] <= 0.0; };
  auto q = [&](Eigen::Index a, Eigen::Index b) { return yv[a] * yv[b] * gram(a, b); };

  std::size_t iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (yv[t] > 0) {
        if (!at_upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
      } else {
        if (!at_lower(t) && grad[t] >= gmax) { gmax = grad[t]; i = t; }
      }
    }
    if (i < 0) break;
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      double grad_diff = 0.0;
      double quad = 0.0;
      if (yv[t] > 0) {
        if (at_lower(t)) continue;
        gmax2 = std::max(gmax2, grad[t]);
        grad_diff = gmax + grad[t];
        quad = gram(i, i) + gram(t, t) - 2.0 * yv[i] * q(i, t);
      } else {
        if (at_upper(t)) continue;
        gmax2 = std::max(gmax2, -grad[t]);
        grad_diff = gmax - grad[t];
        quad = gram(i, i) + gram(t, t) + 2.0 * yv[i] * q(i, t);
      }
      if (grad_diff > 0) {
        const double obj = -(grad_diff * grad_diff) / (quad > 0 ? quad : kTau);
        if (obj <= best) { best = obj; j = t; }
      }
    }
    if (gmax + gmax2 < opts.tolerance || j < 0) break;

    const double old_i = alpha[i], old_j = alpha[j];
    const double ci = upper[i], cj = upper[j];
    if (yv[i] != yv[j]) {
      double quad = gram(i, i) + gram(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) { alpha[i] = ci; alpha[j] = ci - diff; }
      } else {
        if (alpha[j] > cj) { alpha[j] = cj; alpha[i] = cj + diff; }
      }
    } else {
      double quad = gram(i, i) + gram(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) { alpha[i] = ci; alpha[j] = sum - ci; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > cj) {
        if (alpha[j] > cj) { alpha[j] = cj; alpha[i] = sum - cj; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (Eigen::Index t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // Bias from free support vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yv[t] * grad[t];
    if (at_upper(t)) {
      if (yv[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (yv[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

  model.weights = x.transpose() * alpha.cwiseProduct(yv);
  model.bias = -rho;
  if (!model.weights.allFinite() || !std::isfinite(model.bias)) throw NumericalError("train: non-finite SVM solution");
  return model;
}

}  // namespace vdl
