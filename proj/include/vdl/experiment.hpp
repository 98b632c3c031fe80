#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vdl/active_loop.hpp"
#include "vdl/dataset.hpp"
#include "vdl/report.hpp"

namespace vdl {

/// Batch experiment over simulated-oracle sessions.
struct ExperimentSpec {
  std::optional<std::string> dataset;  // CSV pool; synthesized per seed when absent
  std::size_t synth_n = 2200;
  std::size_t synth_d = 16;
  std::size_t synth_positives = 39;
  SynthesisGeometry geometry;
  std::vector<Strategy> strategies{Strategy::random, Strategy::uncertainty, Strategy::maxmin, Strategy::learned_early,
                                   Strategy::learned_surrogate};
  std::vector<TermGates> gate_grid;  // empty: the seven non-empty rep/div/amb patterns
  std::vector<Variant> variants{Variant::early, Variant::surrogate};
  std::size_t t = 10;
  std::size_t k = 16;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out = ".";
  OptimizerConfig optimizer;
  ClassifierOptions classifier;
};

/// The seven non-empty gate patterns in published-table order.
inline std::vector<TermGates> all_gate_patterns() {
  return {{false, false, true}, {false, true, false}, {true, false, false}, {true, false, true},
          {false, true, true},  {true, true, false},  {true, true, true}};
}

/// TRAIN/EVAL-split pool for one seed: the seed drives both synthesis and the split.
inline Pool experiment_pool(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.dataset) return split_half(load_csv(*spec.dataset), seed);
  const double fraction = static_cast<double>(spec.synth_positives) / static_cast<double>(spec.synth_n);
  return split_half(synthesize(spec.synth_n, spec.synth_d, fraction, seed, spec.geometry), seed);
}

struct CellFailure {
  std::string cell;
  std::string message;
};

struct ExperimentResult {
  std::vector<Report> per_seed;  // aligned with spec.seeds
  Report mean;
  Report sd;
  std::vector<CellFailure> failures;
};

namespace detail {

inline SessionConfig cell_config(const ExperimentSpec& spec, Strategy strategy, std::uint64_t seed) {
  SessionConfig c;
  c.strategy = strategy;
  c.k = spec.k;
  c.t = spec.t;
  c.seed = seed;
  c.optimizer = spec.optimizer;
  c.optimizer.k = spec.k;
  c.classifier = spec.classifier;
  return c;
}

/// Placeholder row for a failed cell so all reports keep one shape.
inline ReportRow failed_row(const std::string& config, const std::string& variant, std::size_t t) {
  return {config, variant, std::vector<double>(t, std::numeric_limits<double>::quiet_NaN()), std::nullopt};
}

inline std::vector<double> sampling_row(const ExperimentSpec& spec, const Pool& pool) {
  std::vector<double> out;
  for (std::size_t t = 1; t <= spec.t; ++t) out.push_back(sampling_percent(t, spec.k, pool.size()));
  return out;
}

inline void write_outputs(const ExperimentSpec& spec, const std::string& stem, const ExperimentResult& r) {
  std::filesystem::create_directories(spec.out);
  auto open = [&](const std::string& name) {
    std::ofstream f(spec.out / name);
    if (!f) throw std::runtime_error("cannot write " + (spec.out / name).string());
    return f;
  };
  for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
    auto f = open(stem + "_seed" + std::to_string(spec.seeds[s]) + ".csv");
    write_report_csv(r.per_seed[s], f);
  }
  {
    auto f = open(stem + ".csv");
    write_report_csv(r.mean, f);
  }
  {
    auto f = open(stem + "_std.csv");
    write_report_csv(r.sd, f, "auc_sd");
  }
  {
    auto f = open(stem + ".txt");
    write_report_text(r.mean, f);
  }
}

inline ExperimentResult finish(const ExperimentSpec& spec, const std::string& stem, ExperimentResult r) {
  auto [mean, sd] = aggregate_reports(r.per_seed);
  r.mean = std::move(mean);
  r.sd = std::move(sd);
  write_outputs(spec, stem, r);
  return r;
}

}  // namespace detail

/**
 * Gate-pattern x variant grid of learned displays (the ablation table).
 * Writes ablation.csv (seed mean), ablation_std.csv, ablation_seed<S>.csv and
 * ablation.txt into spec.out. A failing cell is reported and left as NA.
 */
inline ExperimentResult run_ablation(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw std::invalid_argument("run_ablation: need at least one seed");
  const auto grid = spec.gate_grid.empty() ? all_gate_patterns() : spec.gate_grid;
  ExperimentResult out;
  for (std::uint64_t seed : spec.seeds) {
    const Pool pool = experiment_pool(spec, seed);
    Report rep;
    rep.sampling = detail::sampling_row(spec, pool);
    for (const TermGates& g : grid) {
      for (Variant v : spec.variants) {
        SessionConfig cfg = detail::cell_config(spec, v == Variant::early ? Strategy::learned_early : Strategy::learned_surrogate, seed);
        cfg.optimizer.gates = g;
        const std::string variant = v == Variant::early ? "early" : "surrogate";
        try {
          rep.rows.push_back(report_row(run_session(pool, cfg, simulated_oracle(pool))));
        } catch (const std::exception& e) {
          out.failures.push_back({gates_name(g) + "/" + variant + "/seed" + std::to_string(seed), e.what()});
          rep.rows.push_back(detail::failed_row(gates_name(g), variant, spec.t));
        }
      }
    }
    out.per_seed.push_back(std::move(rep));
  }
  return detail::finish(spec, "ablation", std::move(out));
}

/// Error rate of a classifier trained on every TRAIN label, the lower-bound reference.
inline double fully_supervised_eer(const Pool& pool, const ClassifierOptions& opts) {
  const auto train_idx = pool.indices(Split::train);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(train_idx.size()), static_cast<Eigen::Index>(pool.dim()));
  std::vector<Label> y;
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = pool.features().row(static_cast<Eigen::Index>(train_idx[r]));
    const auto l = pool.ground_truth(train_idx[r], LabelUse::oracle);
    if (!l) throw InvalidState("fully supervised reference needs labels on every TRAIN sample");
    y.push_back(*l);
  }
  const auto e = evaluate_eer(train(x, y, opts), pool);
  if (!e) throw InvalidState("EVAL split lacks labels of both classes");
  return *e;
}

/**
 * Every configured strategy plus a `fully-supervised` reference row (constant
 * across iterations). Writes comparison.csv, comparison_std.csv,
 * comparison_seed<S>.csv and comparison.txt into spec.out.
 */
inline ExperimentResult run_comparison(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw std::invalid_argument("run_comparison: need at least one seed");
  ExperimentResult out;
  for (std::uint64_t seed : spec.seeds) {
    const Pool pool = experiment_pool(spec, seed);
    Report rep;
    rep.sampling = detail::sampling_row(spec, pool);
    for (Strategy s : spec.strategies) {
      const SessionConfig cfg = detail::cell_config(spec, s, seed);
      try {
        ReportRow row = report_row(run_session(pool, cfg, simulated_oracle(pool)));
        row.config = std::string(to_string(s));
        row.variant = "-";
        rep.rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        out.failures.push_back({std::string(to_string(s)) + "/seed" + std::to_string(seed), e.what()});
        rep.rows.push_back(detail::failed_row(std::string(to_string(s)), "-", spec.t));
      }
    }
    try {
      rep.rows.push_back({"fully-supervised", "-", std::vector<double>(spec.t, fully_supervised_eer(pool, spec.classifier)), std::nullopt});
    } catch (const std::exception& e) {
      out.failures.push_back({"fully-supervised/seed" + std::to_string(seed), e.what()});
      rep.rows.push_back(detail::failed_row("fully-supervised", "-", spec.t));
    }
    out.per_seed.push_back(std::move(rep));
  }
  return detail::finish(spec, "comparison", std::move(out));
}

}  // namespace vdl
