// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "oracles.hpp"
#include "vdl/experiment.hpp"

using namespace vdl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-26s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

ClassifierModel random_model(std::mt19937_64& rng, Eigen::Index d) {
  ClassifierModel m;
  m.weights = oracle::random_matrix(rng, d, 1);
  m.bias = oracle::random_matrix(rng, 1, 1)(0, 0);
  return m;
}

Outcome sampling_schedule() {
  const double footer[] = {1.45, 2.90, 4.36, 5.81, 7.27, 8.72, 10.18, 11.63, 13.09, 14.54};
  std::string got;
  bool ok = true;
  for (std::size_t t = 1; t <= 10; ++t) {
    const double v = truncate_2dp(sampling_percent(t, 16, 2200));
    ok = ok && std::abs(v - footer[t - 1]) < 1e-9;
    got += fmt("%.2f ", v);
  }
  return {ok, "Samp% = " + got};
}

Outcome auc_identity() {
  const std::vector<double> row{47.81, 32.56, 9.88, 4.54, 2.71, 2.00, 1.56, 1.21, 1.10, 1.08};
  const double a = auc_over_iterations(row);
  return {std::abs(a - 10.44) <= 0.01, fmt("AUC = %.4f vs 10.44 (tol 0.01)", a)};
}

Outcome membership_optimality() {
  const TermGates patterns[] = {{true, false, false}, {true, true, false}, {true, false, true}, {true, true, true}};
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_dist(2, 20), k_dist(1, 3);
  double worst = -std::numeric_limits<double>::infinity();
  for (int inst = 0; inst < 50; ++inst) {
    const Eigen::Index K = k_dist(rng), n = std::max<Eigen::Index>(n_dist(rng), K);
    OptimizerConfig c;
    c.variant = inst % 2 ? Variant::early : Variant::surrogate;
    c.k = static_cast<std::size_t>(K);
    c.gates = patterns[(inst / 2) % 4];
    if (inst % 3 == 0) c.alpha = 5.0;  // make the diversity pull visible
    const Eigen::MatrixXd x = oracle::random_matrix(rng, n, 2, 1.5), d = oracle::random_matrix(rng, K, 2);
    const Eigen::MatrixXd prev = oracle::random_stochastic(rng, n, K);
    const auto step = membership_update(x, d, prev, c);
    const oracle::ObjectiveParams p{c.variant == Variant::early, c.gates.rep, c.gates.div, c.gates.amb,
                                    c.alpha_value(), c.beta_value(), step.gamma};
    const Eigen::MatrixXd costs = oracle::membership_costs(x, d, prev, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> w;
      for (Eigen::Index k = 0; k < K; ++k) w.push_back(step.mu(i, k));
      const double gap = oracle::row_value(costs, i, w, step.gamma) - oracle::simplex_grid_min(costs, i, step.gamma, 1e-3);
      worst = std::max(worst, gap);
    }
  }
  return {worst <= 1e-6, fmt("max(update - grid) = %.3g over 50 instances (tol 1e-6)", worst)};
}

Outcome soft_kmeans_reduction() {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd x = oracle::random_matrix(rng, 30, 2, 0.8);
  for (Eigen::Index i = 0; i < 30; ++i) x(i, 0) += 4.0 * static_cast<double>(i % 3);
  OptimizerConfig c;
  c.k = 3;
  c.alpha = 0.0;
  c.beta = 0.0;
  c.seed = 7;
  c.epsilon = 1e-10;
  c.max_iterations = 10000;
  ClassifierModel m;
  m.weights = Eigen::Vector2d(1.0, -0.5);
  const auto init = initial_state(x, c);
  const auto r = solve_display(x, m, c, init);
  const auto ref = oracle::soft_kmeans(x, init.mu, init.exemplars, c.rho, 1e-10, 10000);
  const double diff = std::abs(r.trajectory.back().objective - ref.objective);
  return {diff <= 1e-6 && r.converged,
          fmt("|objective - soft k-means| = %.3g (tol 1e-6), %g vs %g iterations", diff,
              static_cast<double>(r.iterations_used), static_cast<double>(ref.iterations))};
}

Outcome annealing_limit() {
  const Pool p = synthesize(500, 16, 0.05, 11);
  OptimizerConfig c;
  c.k = 16;
  c.rho = 1e-3;
  c.gates = {true, false, false};
  c.seed = 11;
  ClassifierModel m;
  m.weights = Eigen::VectorXd::Zero(16);
  const auto r = solve_display(p.features(), m, c);
  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < 500; ++i) {
    Eigen::Index a = 0, b = 0;
    r.mu.row(i).maxCoeff(&a);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < 16; ++k) {
      const double v = oracle::sqdist(p.features(), i, r.exemplars, k);
      if (v < best) best = v, b = k;
    }
    agree += a == b;
  }
  const double share = static_cast<double>(agree) / 500.0;
  return {share >= 0.99, fmt("argmax matches nearest exemplar on %.1f%% of 500 points (need 99%%)", 100 * share)};
}

Outcome monotone_descent() {
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t passes = 0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    std::mt19937_64 rng(inst + 100);
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(inst) * 5;
    const Eigen::MatrixXd x = oracle::random_matrix(rng, n, 3, 2.0);
    OptimizerConfig c;
    c.variant = inst % 2 ? Variant::early : Variant::surrogate;
    c.k = 2 + inst % 5;
    c.gates = {true, true, false};
    c.seed = inst;
    const ClassifierModel m = random_model(rng, 3);
    OptimizerState s = initial_state(x, c);
    for (std::size_t it = 0; it < c.max_iterations; ++it) {
      const auto step = alternate(x, s, m, c);
      const double before = objective(x, s.mu, s.exemplars, m, c, step.gamma);
      const double after = objective(x, step.state.mu, step.state.exemplars, m, c, step.gamma);
      worst = std::max(worst, after - before);
      ++passes;
      const double l1 = (step.state.mu - s.mu).cwiseAbs().sum() + (step.state.exemplars - s.exemplars).cwiseAbs().sum();
      s = step.state;
      if (l1 < c.epsilon) break;
    }
  }
  return {worst <= 1e-10, fmt("max objective increase = %.3g over %g alternations (tol 1e-10)", worst,
                              static_cast<double>(passes))};
}

Outcome gradient_oracle() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 50, 4);
    std::vector<Label> y;
    for (Eigen::Index i = 0; i < 50; ++i) y.push_back(x(i, 0) + 0.3 * x(i, 2) > 0.1 ? Label::positive : Label::negative);
    ClassifierOptions o;
    o.temperature = seed % 2 ? 1.0 : 1.7;
    const auto m = train(x, y, o);
    for (int r = 0; r < 10; ++r) {
      const Eigen::VectorXd v = oracle::random_matrix(rng, 4, 1, 0.5);
      const Eigen::VectorXd g = probability_gradient(m, v, ScoreClass::change);
      const double h = 1e-6 * std::max(1.0, v.norm());
      for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::VectorXd a = v, b = v;
        a(j) += h;
        b(j) -= h;
        const double pa = oracle::sig((m.weights.dot(a) + m.bias) / m.temperature);
        const double pb = oracle::sig((m.weights.dot(b) + m.bias) / m.temperature);
        const double numeric = (pa - pb) / (2 * h);
        worst = std::max(worst, std::abs(g(j) - numeric) / std::max(std::abs(numeric), 1e-12));
      }
    }
  }
  return {worst <= 1e-5, fmt("max relative error = %.3g at 50 points (tol 1e-5)", worst)};
}

Outcome eer_oracle() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> size(2, 300), bucket(0, 12);
    const int n = size(rng);
    std::vector<double> s;
    std::vector<Label> l;
    for (int i = 0; i < n; ++i) {
      const bool pos = i == 0 || (i != 1 && g(rng) > 0.5);
      l.push_back(pos ? Label::positive : Label::negative);
      s.push_back(seed % 4 == 0 ? static_cast<double>(bucket(rng)) + (pos ? 3 : 0) : g(rng) + (pos ? 1.0 : 0.0));
    }
    worst = std::max(worst, std::abs(eer(s, l) - oracle::eer(s, l)));
  }
  return {worst <= 1e-9, fmt("max |eer - enumeration| = %.3g over 100 score sets (tol 1e-9)", worst)};
}

Outcome end_to_end_ranking() {
  const fs::path out = fs::temp_directory_path() / ("vdl_acceptance_" + std::to_string(::getpid()));
  ExperimentSpec spec;
  spec.synth_n = 2200;
  spec.synth_d = 16;
  spec.synth_positives = 39;
  spec.k = 16;
  spec.t = 10;
  spec.seeds = {1, 2, 3, 4, 5};
  spec.out = out;
  spec.strategies = {Strategy::random, Strategy::uncertainty, Strategy::learned_surrogate};
  const auto cmp = run_comparison(spec);
  spec.variants = {Variant::surrogate};
  spec.gate_grid = {{true, true, true}, {true, false, false}, {false, true, false}, {false, false, true}};
  const auto abl = run_ablation(spec);
  fs::remove_all(out);
  if (!cmp.failures.empty() || !abl.failures.empty()) return {false, "experiment cells failed"};

  const double random = cmp.mean.rows[0].auc(), uncertainty = cmp.mean.rows[1].auc(), learned = cmp.mean.rows[2].auc();
  const double full = abl.mean.rows[0].auc();
  bool ok = learned < random && learned < uncertainty;
  std::string detail = fmt("AUC surrogate %.2f < random %.2f, < uncertainty %.2f;", learned, random, uncertainty);
  for (std::size_t r = 1; r < abl.mean.rows.size(); ++r) {
    const double single = abl.mean.rows[r].auc();
    ok = ok && full <= single + 0.5;
    detail += " full " + fmt("%.2f", full) + " <= " + abl.mean.rows[r].config + " " + fmt("%.2f", single) + "+0.5;";
  }
  return {ok, detail};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(VDL_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome compare_determinism() {
  const fs::path base = fs::temp_directory_path() / ("vdl_acceptance_cli_" + std::to_string(::getpid()));
  fs::remove_all(base);
  const std::string args = "compare --seed 1,2 --out ";
  if (run_cli(args + (base / "a").string()) != 0 || run_cli(args + (base / "b").string()) != 0)
    return {false, "compare exited nonzero"};
  std::size_t files = 0;
  bool same = true;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    same = same && slurp(entry.path()) == slurp(base / "b" / entry.path().filename());
  }
  fs::remove_all(base);
  return {same && files == 4, fmt("%g CSV files bitwise identical across two runs", static_cast<double>(files))};
}

}  // namespace

int main() {
  criterion("sampling-schedule", sampling_schedule);
  criterion("auc-identity", auc_identity);
  criterion("membership-optimality", membership_optimality);
  criterion("soft-kmeans-reduction", soft_kmeans_reduction);
  criterion("annealing-limit", annealing_limit);
  criterion("monotone-descent", monotone_descent);
  criterion("gradient-oracle", gradient_oracle);
  criterion("eer-oracle", eer_oracle);
  criterion("end-to-end-ranking", end_to_end_ranking);
  criterion("compare-determinism", compare_determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
