#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "vdl/classifier.hpp"
#include "vdl/dataset.hpp"
#include "vdl/errors.hpp"
#include "vdl/evaluation.hpp"
#include "vdl/exemplar_optimizer.hpp"

namespace vdl {

enum class Strategy { random, uncertainty, maxmin, learned_early, learned_surrogate };

inline constexpr std::string_view kStrategyNames[] = {"random", "uncertainty", "maxmin", "learned-early",
                                                      "learned-surrogate"};

inline std::string_view to_string(Strategy s) { return kStrategyNames[static_cast<std::size_t>(s)]; }

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kStrategyNames); ++i)
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  return std::nullopt;
}

inline std::string strategy_names_joined() {
  std::string out;
  for (auto n : kStrategyNames) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

enum class DisplayOrigin { virtual_early, virtual_surrogate, random, uncertainty, maxmin };

struct Display {
  std::vector<SampleId> sample_ids;
  DisplayOrigin origin = DisplayOrigin::random;
};

/// A display together with the labels the oracle returned for it, in display order.
struct LabeledDisplay {
  Display display;
  std::vector<Label> labels;
};

struct SessionConfig {
  Strategy strategy = Strategy::learned_surrogate;
  std::size_t k = 16;
  std::size_t t = 10;  // number of displays (budget T)
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;  // k, variant and seed are overridden per iteration
  ClassifierOptions classifier;
  // Called after each virtual-display solve with the iteration index (not persisted).
  std::function<void(std::size_t, const SolveResult&)> on_solve;
};

struct SessionState {
  SessionConfig config;
  std::size_t t = 0;
  std::vector<LabeledDisplay> displays;
  std::optional<Display> pending;  // display awaiting labels, absent once t == T
  std::optional<ClassifierModel> model;
  std::vector<MetricRecord> metrics;

  bool complete() const { return t >= config.t; }
};

/// Receives the ids of the current display and answers one label per id.
using Oracle = std::function<std::vector<Label>(std::span<const SampleId>)>;

/// Ground-truth lookup on TRAIN samples; every read is recorded as an oracle read.
inline Oracle simulated_oracle(const Pool& pool) {
  return [&pool](std::span<const SampleId> ids) {
    std::vector<Label> out;
    out.reserve(ids.size());
    for (SampleId id : ids) {
      const std::size_t i = pool.index_of(id);
      const auto l = pool.ground_truth(i, LabelUse::oracle);
      if (!l) throw InvalidState("simulated oracle: sample " + std::to_string(id) + " has no ground truth");
      out.push_back(*l);
    }
    return out;
  };
}

namespace detail {

/// Stream-splitting for per-purpose, per-iteration seeds (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t t) {
  std::uint64_t z = seed ^ (purpose * 0x9E3779B97F4A7C15ULL) ^ (t * 0xBF58476D1CE4E5B9ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum SeedPurpose : std::uint64_t { kInitialDisplay = 1, kRandomDisplay = 2, kOptimizer = 3, kMaxminFallback = 4 };

/// TRAIN indices (pool order) whose ids are not excluded.
inline std::vector<std::size_t> available_train(const Pool& pool, const std::unordered_set<SampleId>& excluded) {
  std::vector<std::size_t> out;
  for (std::size_t i : pool.indices(Split::train))
    if (!excluded.count(pool.id(i))) out.push_back(i);
  return out;
}

inline void require_available(std::size_t available, std::size_t k, const char* who) {
  if (available < k) {
    throw InvalidState(std::string(who) + ": only " + std::to_string(available) + " available samples for K=" +
                       std::to_string(k));
  }
}

inline Display sample_uniform(const Pool& pool, std::vector<std::size_t> candidates, std::size_t k,
                              std::uint64_t seed, DisplayOrigin origin) {
  std::mt19937_64 rng(seed);
  for (std::size_t r = 0; r < k; ++r) {
    std::uniform_int_distribution<std::size_t> pick(r, candidates.size() - 1);
    std::swap(candidates[r], candidates[pick(rng)]);
  }
  Display d;
  d.origin = origin;
  for (std::size_t r = 0; r < k; ++r) d.sample_ids.push_back(pool.id(candidates[r]));
  return d;
}

}  // namespace detail

/// K distinct uniformly drawn TRAIN ids.
inline Display initial_display(const Pool& pool, std::size_t k, std::uint64_t seed) {
  auto candidates = pool.indices(Split::train);
  detail::require_available(candidates.size(), k, "initial_display");
  return detail::sample_uniform(pool, std::move(candidates), k, seed, DisplayOrigin::random);
}

inline Display random_display(const Pool& pool, const std::unordered_set<SampleId>& excluded, std::size_t k,
                              std::uint64_t seed) {
  auto candidates = detail::available_train(pool, excluded);
  detail::require_available(candidates.size(), k, "random_display");
  return detail::sample_uniform(pool, std::move(candidates), k, seed, DisplayOrigin::random);
}

/**
 * Replaces each virtual exemplar by a real available TRAIN sample.
 *
 * Exemplars are visited in ascending order of the distance to their nearest
 * available sample (ties: lower exemplar index). Each claims its nearest
 * still-available sample (ties: smallest id), which then leaves the pool.
 */
inline Display map_exemplars_to_pool(const Eigen::MatrixXd& exemplars, const Pool& pool,
                                     const std::unordered_set<SampleId>& excluded,
                                     DisplayOrigin origin = DisplayOrigin::virtual_surrogate) {
  const auto K = static_cast<std::size_t>(exemplars.rows());
  std::vector<std::size_t> avail = detail::available_train(pool, excluded);
  detail::require_available(avail.size(), K, "map_exemplars_to_pool");
  std::sort(avail.begin(), avail.end(), [&](std::size_t a, std::size_t b) { return pool.id(a) < pool.id(b); });

  Eigen::MatrixXd cand(static_cast<Eigen::Index>(avail.size()), exemplars.cols());
  for (std::size_t r = 0; r < avail.size(); ++r) cand.row(static_cast<Eigen::Index>(r)) = pool.features().row(static_cast<Eigen::Index>(avail[r]));
  const Eigen::MatrixXd dist = squared_distance_matrix(cand, exemplars);

  std::vector<double> nearest(K);
  for (std::size_t k = 0; k < K; ++k) nearest[k] = dist.col(static_cast<Eigen::Index>(k)).minCoeff();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nearest[a] < nearest[b]; });

  std::vector<bool> taken(avail.size(), false);
  std::vector<SampleId> chosen(K);
  for (std::size_t k : order) {
    std::size_t best = avail.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < avail.size(); ++r) {
      const double dd = dist(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      if (!taken[r] && dd < best_d) {
        best_d = dd;
        best = r;
      }
    }
    taken[best] = true;
    chosen[k] = pool.id(avail[best]);
  }
  return Display{std::move(chosen), origin};
}

/// K available samples with the smallest |score|; ties by id.
inline Display uncertainty_display(const Pool& pool, const ClassifierModel& model,
                                   const std::unordered_set<SampleId>& excluded, std::size_t k) {
  auto avail = detail::available_train(pool, excluded);
  detail::require_available(avail.size(), k, "uncertainty_display");
  std::vector<std::pair<double, SampleId>> keyed;
  keyed.reserve(avail.size());
  for (std::size_t i : avail) keyed.emplace_back(std::abs(score(model, pool.features().row(static_cast<Eigen::Index>(i)).transpose())), pool.id(i));
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end());
  Display d;
  d.origin = DisplayOrigin::uncertainty;
  for (std::size_t r = 0; r < k; ++r) d.sample_ids.push_back(keyed[r].second);
  return d;
}

/**
 * Greedy farthest-point selection: repeatedly takes the available sample whose
 * minimum squared distance to the labeled set plus the picks so far is
 * largest (ties: smallest id). Falls back to a random draw when nothing has
 * been labeled yet.
 */
inline Display maxmin_display(const Pool& pool, std::span<const SampleId> labeled_ids,
                              const std::unordered_set<SampleId>& excluded, std::size_t k, std::uint64_t seed) {
  if (labeled_ids.empty()) {
    Display d = random_display(pool, excluded, k, seed);
    d.origin = DisplayOrigin::maxmin;
    return d;
  }
  auto avail = detail::available_train(pool, excluded);
  detail::require_available(avail.size(), k, "maxmin_display");
  std::sort(avail.begin(), avail.end(), [&](std::size_t a, std::size_t b) { return pool.id(a) < pool.id(b); });
  const Eigen::MatrixXd& X = pool.features();
  std::vector<double> mind(avail.size(), std::numeric_limits<double>::infinity());
  auto absorb = [&](std::size_t pool_index) {
    for (std::size_t r = 0; r < avail.size(); ++r)
      mind[r] = std::min(mind[r], (X.row(static_cast<Eigen::Index>(avail[r])) - X.row(static_cast<Eigen::Index>(pool_index))).squaredNorm());
  };
  for (SampleId id : labeled_ids) absorb(pool.index_of(id));
  std::vector<bool> taken(avail.size(), false);
  Display d;
  d.origin = DisplayOrigin::maxmin;
  for (std::size_t r = 0; r < k; ++r) {
    std::size_t best = avail.size();
    double best_d = -1.0;
    for (std::size_t c = 0; c < avail.size(); ++c) {
      if (!taken[c] && mind[c] > best_d) {
        best_d = mind[c];
        best = c;
      }
    }
    taken[best] = true;
    d.sample_ids.push_back(pool.id(avail[best]));
    absorb(avail[best]);
  }
  return d;
}

/// Ids of every sample already shown in the session.
inline std::unordered_set<SampleId> shown_ids(const SessionState& s) {
  std::unordered_set<SampleId> out;
  for (const auto& ld : s.displays) out.insert(ld.display.sample_ids.begin(), ld.display.sample_ids.end());
  return out;
}

namespace detail {

inline Display next_display(const SessionState& s, const Pool& pool) {
  const SessionConfig& cfg = s.config;
  const auto excluded = shown_ids(s);
  switch (cfg.strategy) {
    case Strategy::random:
      return random_display(pool, excluded, cfg.k, derive_seed(cfg.seed, kRandomDisplay, s.t));
    case Strategy::uncertainty:
      return uncertainty_display(pool, *s.model, excluded, cfg.k);
    case Strategy::maxmin: {
      std::vector<SampleId> labeled(excluded.begin(), excluded.end());
      std::sort(labeled.begin(), labeled.end());
      return maxmin_display(pool, labeled, excluded, cfg.k, derive_seed(cfg.seed, kMaxminFallback, s.t));
    }
    case Strategy::learned_early:
    case Strategy::learned_surrogate: {
      const bool early = cfg.strategy == Strategy::learned_early;
      const auto avail = available_train(pool, excluded);
      require_available(avail.size(), cfg.k, "learned display");
      Eigen::MatrixXd x(static_cast<Eigen::Index>(avail.size()), static_cast<Eigen::Index>(pool.dim()));
      for (std::size_t r = 0; r < avail.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = pool.features().row(static_cast<Eigen::Index>(avail[r]));
      OptimizerConfig oc = cfg.optimizer;
      oc.k = cfg.k;
      oc.variant = early ? Variant::early : Variant::surrogate;
      oc.seed = derive_seed(cfg.seed, kOptimizer, s.t);
      const SolveResult res = solve_display(x, *s.model, oc);
      if (cfg.on_solve) cfg.on_solve(s.t, res);
      return map_exemplars_to_pool(res.exemplars, pool, excluded,
                                   early ? DisplayOrigin::virtual_early : DisplayOrigin::virtual_surrogate);
    }
  }
  throw std::logic_error("unknown strategy");
}

}  // namespace detail

/// EER of `model` on the EVAL split, or nothing when EVAL lacks labels of both classes.
inline std::optional<double> evaluate_eer(const ClassifierModel& model, const Pool& pool) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (std::size_t i : pool.indices(Split::eval)) {
    const auto l = pool.ground_truth(i, LabelUse::evaluation);
    if (!l) continue;
    scores.push_back(score(model, pool.features().row(static_cast<Eigen::Index>(i)).transpose()));
    labels.push_back(*l);
  }
  const bool both = std::find(labels.begin(), labels.end(), Label::positive) != labels.end() &&
                    std::find(labels.begin(), labels.end(), Label::negative) != labels.end();
  if (!both) return std::nullopt;
  return eer(scores, labels);
}

/// Fresh session with the initial random display pending.
inline SessionState start_session(const Pool& pool, const SessionConfig& cfg) {
  if (cfg.k == 0) throw std::invalid_argument("K must be >= 1");
  if (cfg.t == 0) throw std::invalid_argument("T must be >= 1");
  if (!pool.is_split()) throw std::invalid_argument("pool must be split into TRAIN/EVAL first");
  const std::size_t n_train = pool.indices(Split::train).size();
  if (cfg.t * cfg.k > n_train) {
    throw std::invalid_argument("budget T*K = " + std::to_string(cfg.t * cfg.k) + " exceeds TRAIN size " +
                                std::to_string(n_train));
  }
  SessionState s;
  s.config = cfg;
  s.pending = initial_display(pool, cfg.k, detail::derive_seed(cfg.seed, detail::kInitialDisplay, 0));
  return s;
}

/// Validates oracle output for `display`; throws ProtocolError on any defect.
inline void check_labels(const Display& display, const std::vector<Label>& labels) {
  if (labels.size() != display.sample_ids.size()) {
    throw ProtocolError("oracle returned " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(display.sample_ids.size()) + " displayed samples");
  }
  for (Label l : labels)
    if (l != Label::positive && l != Label::negative) throw ProtocolError("oracle returned a label outside {-1,+1}");
}

/**
 * Labels the pending display with `labels`, retrains on every label gathered
 * so far, records metrics and prepares the next display. The input state is
 * left untouched; on error nothing is committed.
 */
inline SessionState advance(const SessionState& state, const std::vector<Label>& labels, const Pool& pool) {
  if (state.complete() || !state.pending) throw InvalidState("session is complete");
  check_labels(*state.pending, labels);
  SessionState s = state;
  s.displays.push_back({*s.pending, labels});
  s.pending.reset();

  std::vector<Label> y;
  std::vector<std::size_t> rows;
  for (const auto& ld : s.displays) {
    for (std::size_t r = 0; r < ld.labels.size(); ++r) {
      rows.push_back(pool.index_of(ld.display.sample_ids[r]));
      y.push_back(ld.labels[r]);
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pool.dim()));
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = pool.features().row(static_cast<Eigen::Index>(rows[r]));
  s.model = train(x, y, s.config.classifier);

  ++s.t;
  s.metrics.push_back({s.t, sampling_percent(s.t, s.config.k, pool.size()), evaluate_eer(*s.model, pool)});
  if (!s.complete()) s.pending = detail::next_display(s, pool);
  return s;
}

inline SessionState run_iteration(const SessionState& state, const Oracle& oracle, const Pool& pool) {
  if (state.complete() || !state.pending) throw InvalidState("session is complete");
  return advance(state, oracle(state.pending->sample_ids), pool);
}

inline SessionState run_session(const Pool& pool, const SessionConfig& cfg, const Oracle& oracle) {
  SessionState s = start_session(pool, cfg);
  while (!s.complete()) s = run_iteration(s, oracle, pool);
  return s;
}

}  // namespace vdl
