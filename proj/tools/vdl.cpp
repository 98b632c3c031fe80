// Command-line front end: synthetic pools, single simulated-oracle sessions,
// ablation and comparison grids, and the labeling HTTP service.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vdl/active_loop.hpp"
#include "vdl/dataset.hpp"
#include "vdl/experiment.hpp"
#include "vdl/http_server.hpp"
#include "vdl/report.hpp"
#include "vdl/serialization.hpp"
#include "vdl/session_service.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string data;
  std::size_t n = 2200;
  std::size_t d = 16;
  std::size_t positives = 39;
  std::size_t k = 16;
  std::size_t t = 10;
  std::vector<std::uint64_t> seeds{1};
  std::string out = ".";
  double rho = vdl::OptimizerConfig{}.rho;
  double reg_c = 1.0;
  bool balanced = false;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool many_seeds) {
  cmd.add_option("--data", o.data, "Pool CSV (synthesized when omitted)");
  cmd.add_option("--n", o.n, "Synthetic pool size")->check(CLI::PositiveNumber);
  cmd.add_option("--d", o.d, "Synthetic feature dimension")->check(CLI::PositiveNumber);
  cmd.add_option("--pos", o.positives, "Synthetic positive count")->check(CLI::PositiveNumber);
  cmd.add_option("--k", o.k, "Display size K")->check(CLI::PositiveNumber);
  cmd.add_option("--t", o.t, "Number of displays T")->check(CLI::PositiveNumber);
  if (many_seeds) {
    cmd.add_option("--seed", o.seeds, "Seeds (repeat or comma-separate)")->delimiter(',');
  } else {
    cmd.add_option("--seed", o.seeds.front(), "Seed");
  }
  cmd.add_option("--out", o.out, "Output directory");
  cmd.add_option("--rho", o.rho, "Membership temperature scale")->check(CLI::PositiveNumber);
  cmd.add_option("--reg-c", o.reg_c, "SVM hinge weight C")->check(CLI::PositiveNumber);
  cmd.add_flag("--balanced", o.balanced, "Class-balanced SVM weights");
}

vdl::ExperimentSpec make_spec(const CommonOptions& o) {
  vdl::ExperimentSpec spec;
  if (!o.data.empty()) spec.dataset = o.data;
  spec.synth_n = o.n;
  spec.synth_d = o.d;
  spec.synth_positives = o.positives;
  spec.k = o.k;
  spec.t = o.t;
  spec.seeds = o.seeds;
  spec.out = o.out;
  spec.optimizer.rho = o.rho;
  spec.classifier.reg_c = o.reg_c;
  spec.classifier.balanced = o.balanced;
  return spec;
}

std::optional<vdl::Variant> parse_variant(const std::string& v) {
  if (v == "early") return vdl::Variant::early;
  if (v == "surrogate") return vdl::Variant::surrogate;
  return std::nullopt;
}

int report_failures(const vdl::ExperimentResult& r) {
  for (const auto& f : r.failures) std::cerr << "cell " << f.cell << " failed: " << f.message << '\n';
  return r.failures.empty() ? 0 : 1;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-exemplar display learning for interactive change detection"};
  app.require_subcommand(1);

  CommonOptions synth_opts;
  std::string synth_path = "pool.csv";
  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled pool as CSV");
  synth->add_option("--n", synth_opts.n, "Pool size")->check(CLI::PositiveNumber);
  synth->add_option("--d", synth_opts.d, "Feature dimension")->check(CLI::PositiveNumber);
  synth->add_option("--pos", synth_opts.positives, "Number of positives")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opts.seeds.front(), "Seed");
  synth->add_option("--out", synth_path, "Output CSV path");

  CommonOptions session_opts;
  std::string strategy_name = "learned-surrogate";
  std::string session_variant;
  bool dump_trajectory = false;
  auto* session = app.add_subcommand("session", "Run one simulated-oracle session");
  add_common(*session, session_opts, false);
  session->add_option("--strategy", strategy_name, "random|uncertainty|maxmin|learned-early|learned-surrogate");
  session->add_option("--variant", session_variant, "Override the learned variant (early|surrogate)");
  session->add_flag("--trajectory", dump_trajectory, "Write per-iteration optimizer trajectories");

  CommonOptions ablate_opts;
  std::string ablate_variant;
  auto* ablate = app.add_subcommand("ablate", "Gate-pattern ablation of learned displays");
  add_common(*ablate, ablate_opts, true);
  ablate->add_option("--variant", ablate_variant, "Restrict to one variant (early|surrogate)");

  CommonOptions compare_opts;
  std::vector<std::string> compare_strategies;
  auto* compare = app.add_subcommand("compare", "Compare display strategies and the fully supervised reference");
  add_common(*compare, compare_opts, true);
  compare->add_option("--strategy", compare_strategies, "Strategies to include (default: all)")->delimiter(',');

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state_dir = "sessions";
  std::string data_root = ".";
  std::string assets;
  auto* serve = app.add_subcommand("serve", "Serve labeling sessions over HTTP");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--state-dir", state_dir, "Session persistence directory");
  serve->add_option("--data-root", data_root, "Directory relative dataset paths resolve against");
  serve->add_option("--assets", assets, "Thumbnail root served under /assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      const double fraction = static_cast<double>(synth_opts.positives) / static_cast<double>(synth_opts.n);
      const vdl::Pool pool = vdl::synthesize(synth_opts.n, synth_opts.d, fraction, synth_opts.seeds.front());
      vdl::write_csv(pool, synth_path);
      std::cout << "wrote " << pool.size() << " samples to " << synth_path << '\n';
      return 0;
    }

    if (*session) {
      const auto strategy = vdl::parse_strategy(strategy_name);
      if (!strategy) {
        std::cerr << "unknown strategy '" << strategy_name << "'; allowed: " << vdl::strategy_names_joined() << '\n';
        return 2;
      }
      vdl::ExperimentSpec spec = make_spec(session_opts);
      vdl::SessionConfig cfg = vdl::detail::cell_config(spec, *strategy, session_opts.seeds.front());
      if (!session_variant.empty()) {
        const auto v = parse_variant(session_variant);
        if (!v) {
          std::cerr << "unknown variant '" << session_variant << "'\n";
          return 2;
        }
        if (cfg.strategy == vdl::Strategy::learned_early || cfg.strategy == vdl::Strategy::learned_surrogate)
          cfg.strategy = *v == vdl::Variant::early ? vdl::Strategy::learned_early : vdl::Strategy::learned_surrogate;
      }
      fs::create_directories(session_opts.out);
      if (dump_trajectory) {
        cfg.on_solve = [&](std::size_t t, const vdl::SolveResult& r) {
          std::ofstream f(fs::path(session_opts.out) / ("trajectory_iter" + std::to_string(t) + ".csv"));
          vdl::write_trajectory_csv(r, f);
        };
      }
      const vdl::Pool pool = vdl::experiment_pool(spec, session_opts.seeds.front());
      const vdl::SessionState state = vdl::run_session(pool, cfg, vdl::simulated_oracle(pool));
      {
        std::ofstream f(fs::path(session_opts.out) / "session.json");
        f << vdl::to_json(state).dump(2) << '\n';
      }
      const vdl::SessionState states[] = {state};
      const vdl::Report rep = vdl::report_table(states);
      {
        std::ofstream f(fs::path(session_opts.out) / "session.csv");
        vdl::write_report_csv(rep, f);
      }
      vdl::write_report_text(rep, std::cout);
      return 0;
    }

    if (*ablate) {
      vdl::ExperimentSpec spec = make_spec(ablate_opts);
      if (!ablate_variant.empty()) {
        const auto v = parse_variant(ablate_variant);
        if (!v) {
          std::cerr << "unknown variant '" << ablate_variant << "'\n";
          return 2;
        }
        spec.variants = {*v};
      }
      const auto r = vdl::run_ablation(spec);
      vdl::write_report_text(r.mean, std::cout);
      return report_failures(r);
    }

    if (*compare) {
      vdl::ExperimentSpec spec = make_spec(compare_opts);
      if (!compare_strategies.empty()) {
        spec.strategies.clear();
        for (const auto& name : compare_strategies) {
          const auto s = vdl::parse_strategy(name);
          if (!s) {
            std::cerr << "unknown strategy '" << name << "'; allowed: " << vdl::strategy_names_joined() << '\n';
            return 2;
          }
          spec.strategies.push_back(*s);
        }
      }
      const auto r = vdl::run_comparison(spec);
      vdl::write_report_text(r.mean, std::cout);
      return report_failures(r);
    }

    if (*serve) {
      vdl::SessionService service(state_dir, data_root, assets);
      httplib::Server server;
      vdl::mount_routes(server, service);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << "listening on " << host << ':' << port << std::endl;
      if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ':' << port << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
