// tomo: command-line front-end for ingesting link counts, running the
// two-stage particle filter, baselines and the simulation experiments.

#include "tomo/baselines.hpp"
#include "tomo/errors.hpp"
#include "tomo/io.hpp"
#include "tomo/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>

using namespace tomo;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct DataFlags {
  std::string routing;
  std::string links;
  std::string truth;
};

void add_data_flags(CLI::App* app, DataFlags& d, bool required = true) {
  auto* r = app->add_option("--routing", d.routing, "routing matrix CSV (counters x routes)");
  auto* l = app->add_option("--links", d.links, "link counts CSV (t, one column per counter)");
  if (required) {
    r->required()->check(CLI::ExistingFile);
    l->required()->check(CLI::ExistingFile);
  }
  app->add_option("--truth", d.truth, "OD truth CSV (t, one column per route)")->check(CLI::ExistingFile);
}

void print_report(const IngestReport& r) {
  std::cout << "epochs " << r.epochs << "\ncounters " << r.counters << "\nroutes " << r.routes << "\nrank "
            << r.rank << "\npolytope_dim " << r.polytope_dim << "\nidentifiable " << (r.identifiable ? "yes" : "no")
            << '\n';
  if (r.truth_violation > 0.0) std::cout << "truth_violation " << r.truth_violation << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

Dataset load(const DataFlags& d) {
  IngestReport report;
  Dataset data = ingest(d.routing, d.links, d.truth, report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  return data;
}

void print_errors(const std::string& method, const std::optional<ErrorSummary>& e) {
  if (!e) return;
  std::cout << method << " mean_L1 " << e->mean_l1 << " (se " << e->se_l1 << ") mean_L2 " << e->mean_l2 << " (se "
            << e->se_l2 << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network tomography with a dynamic multilevel model and two-stage particle filtering"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // ingest
  DataFlags ingest_flags;
  auto* ingest_cmd = app.add_subcommand("ingest", "validate a dataset and print its summary");
  add_data_flags(ingest_cmd, ingest_flags);

  // run
  DataFlags run_flags;
  RunConfig config;
  std::string stage1 = "ssm";
  std::string out_dir = "tomo_out";
  std::string manifest_in;
  std::string resampling = "systematic";
  std::size_t threads = 0;
  double alpha = 0.0;
  auto* run_cmd = app.add_subcommand("run", "two-stage inference: stage 1, calibration, particle filter");
  add_data_flags(run_cmd, run_flags, false);
  run_cmd->add_option("--stage1", stage1, "ssm, gravity or naive")->capture_default_str();
  run_cmd->add_option("--particles", config.filter.n_particles, "particles per epoch")->capture_default_str();
  run_cmd->add_option("--move-iters", config.filter.n_move, "move sweeps per epoch")->capture_default_str();
  run_cmd->add_option("--window", config.ssm.window, "SSM fitting window")->capture_default_str();
  run_cmd->add_option("--median-window", config.median_window, "running median width")->capture_default_str();
  run_cmd->add_option("--rho", config.rho, "autoregression of log intensities")->capture_default_str();
  run_cmd->add_option("--tau", config.tau, "variance power")->capture_default_str();
  auto* alpha_opt = run_cmd->add_option("--alpha", alpha, "Gamma shape of the variance prior (default n/2)");
  run_cmd->add_option("--seed", config.filter.seed, "random seed")->capture_default_str();
  run_cmd->add_option("--rda-steps", config.filter.rda_steps_per_draw, "sampler steps between proposal draws")
      ->capture_default_str();
  run_cmd->add_option("--resampling", resampling, "systematic or multinomial")->capture_default_str();
  run_cmd->add_option("--threads", threads, "worker threads, 0 = hardware")->capture_default_str();
  run_cmd->add_option("--topology", config.topology, "node totals for --stage1 gravity, e.g. star:4");
  run_cmd->add_option("--counter-map", config.counter_map, "node totals for --stage1 gravity from a CSV")
      ->check(CLI::ExistingFile);
  run_cmd->add_flag("--dump-particles", config.dump_particles, "write particles.bin");
  run_cmd->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  run_cmd->add_option("--manifest", manifest_in, "rerun the run recorded in a manifest")->check(CLI::ExistingFile);

  // baseline
  DataFlags base_flags;
  std::string method = "ipfp";
  std::string base_topology;
  std::string base_map;
  std::string base_out = "tomo_out";
  double lam = 0.0;
  auto* base_cmd = app.add_subcommand("baseline", "IPFP, gravity or tomogravity point estimates");
  add_data_flags(base_cmd, base_flags);
  base_cmd->add_option("--method", method, "ipfp, gravity or tomogravity")->capture_default_str();
  base_cmd->add_option("--lambda", lam, "tomogravity regularization weight")->capture_default_str();
  base_cmd->add_option("--topology", base_topology, "node totals from a topology spec");
  base_cmd->add_option("--counter-map", base_map, "node totals from a CSV")->check(CLI::ExistingFile);
  base_cmd->add_option("--out-dir", base_out, "output directory")->capture_default_str();

  // experiment
  std::string design;
  std::string exp_config;
  std::string pool_path;
  std::string exp_out;
  std::size_t exp_threads = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "simulation studies");
  exp_cmd->add_option("design", design, "relerr or star")->required()->check(CLI::IsMember({"relerr", "star"}));
  exp_cmd->add_option("--config", exp_config, "JSON config")->check(CLI::ExistingFile);
  exp_cmd->add_option("--pool", pool_path, "OD series pool CSV for the star benchmark")->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", exp_out, "results CSV")->required();
  exp_cmd->add_option("--threads", exp_threads, "worker threads, 0 = hardware")->capture_default_str();

  // simulate
  std::string sim_topology = "star:3";
  std::size_t sim_epochs = 300;
  std::uint64_t sim_seed = 1;
  double sim_rho = 0.5;
  double sim_tau = 2.0;
  double sim_median = 500.0;
  double sim_gsd = 6.0;
  std::string sim_out = "tomo_sim";
  auto* sim_cmd = app.add_subcommand("simulate", "write a simulated dataset (routing, links, truth)");
  sim_cmd->add_option("--topology", sim_topology, "star:N, chainN or two_router:A,B")->capture_default_str();
  sim_cmd->add_option("--epochs", sim_epochs)->capture_default_str();
  sim_cmd->add_option("--seed", sim_seed)->capture_default_str();
  sim_cmd->add_option("--rho", sim_rho)->capture_default_str();
  sim_cmd->add_option("--tau", sim_tau)->capture_default_str();
  sim_cmd->add_option("--lambda0-median", sim_median, "median initial intensity")->capture_default_str();
  sim_cmd->add_option("--lambda0-gsd", sim_gsd, "geometric sd of the initial intensity")->capture_default_str();
  sim_cmd->add_option("--out-dir", sim_out)->capture_default_str();

  // check
  std::string check_routing;
  std::size_t max_minors = 1'000'000;
  auto* check_cmd = app.add_subcommand("check", "rank, unimodularity and identifiability of a routing matrix");
  check_cmd->add_option("--routing", check_routing)->required()->check(CLI::ExistingFile);
  check_cmd->add_option("--max-minors", max_minors)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (ingest_cmd->parsed()) {
      IngestReport report;
      ingest(ingest_flags.routing, ingest_flags.links, ingest_flags.truth, report);
      print_report(report);
      if (!report.violating_epochs.empty()) {
        std::cout << "violating_epochs";
        for (auto t : report.violating_epochs) std::cout << ' ' << t + 1;
        std::cout << '\n';
      }
    } else if (run_cmd->parsed()) {
      Manifest m;
      if (!manifest_in.empty()) {
        m = read_manifest(manifest_in);
        if (run_cmd->count("--out-dir") == 0) out_dir = m.out_dir;
        if (run_cmd->count("--threads") != 0) m.config.filter.threads = m.config.ssm.threads = threads;
      } else {
        if (run_flags.routing.empty() || run_flags.links.empty()) {
          throw ValidationError("run needs --routing and --links, or --manifest");
        }
        config.stage1 = parse_stage1(stage1);
        if (*alpha_opt) config.alpha = alpha;
        config.filter.resampling = resampling == "multinomial" ? Resampling::multinomial : Resampling::systematic;
        if (resampling != "multinomial" && resampling != "systematic") {
          throw ValidationError("--resampling must be systematic or multinomial");
        }
        config.filter.threads = config.ssm.threads = threads;
        config.ssm.tau = config.tau;
        m = Manifest{"run", run_flags.routing, run_flags.links, run_flags.truth, out_dir, config};
      }
      m.out_dir = out_dir;
      const Dataset data = load({m.routing_path, m.links_path, m.truth_path});
      std::cout << "config " << run_config_to_json(m.config) << '\n';
      const RunOutputs out = run_pipeline(data, m.config, out_dir);
      write_manifest((fs::path(out_dir) / "manifest.json").string(), m, out.files);
      print_errors("sirm_" + to_string(m.config.stage1), out.errors);
      std::cout << "wrote " << out_dir << '\n';
    } else if (base_cmd->parsed()) {
      const Dataset data = load(base_flags);
      const BaselineMethod which = parse_baseline(method);
      CounterMapFile totals;
      if (which != BaselineMethod::ipfp) totals = resolve_counter_map(data, base_topology, base_map);
      std::optional<ErrorSummary> errors;
      run_baseline(data, which, totals, lam, base_out, errors);
      print_errors(method, errors);
      std::cout << "wrote " << base_out << '\n';
    } else if (exp_cmd->parsed()) {
      auto progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
      if (design == "relerr") {
        RelerrConfig c = exp_config.empty() ? RelerrConfig{} : relerr_config_from_json(exp_config);
        if (exp_cmd->count("--threads") != 0) c.filter.threads = c.ssm.threads = exp_threads;
        const RelerrResult result = run_relerr_experiment(c, progress);
        write_relerr_csv(exp_out, result);
        for (const auto& topology : c.topologies) {
          const auto ratios = relative_l2_errors(result, topology);
          double mean = 0.0;
          for (double r : ratios) mean += r;
          if (!ratios.empty()) mean /= static_cast<double>(ratios.size());
          std::cout << topology << " naive/two_stage L2 ratio " << mean << " over " << ratios.size() << " reps\n";
        }
        if (result.failures > 0) std::cerr << result.failures << " reps failed\n";
      } else {
        if (pool_path.empty()) throw ValidationError("experiment star needs --pool");
        StarBenchmarkConfig c = exp_config.empty() ? StarBenchmarkConfig{} : star_config_from_json(exp_config);
        if (exp_cmd->count("--threads") != 0) c.filter.threads = c.ssm.threads = exp_threads;
        const Matrix pool = read_series_csv(pool_path).values;
        const auto rows = run_star_benchmark(c, pool, progress);
        write_star_benchmark_csv(exp_out, rows, c.selection_rule);
      }
      std::cout << "wrote " << exp_out << '\n';
    } else if (sim_cmd->parsed()) {
      const Topology top = parse_topology(sim_topology);
      const RoutingMatrix a = build_routing(top);
      const std::size_t n = top.route_count();
      Rng rng = stream_rng(sim_seed, 0);
      std::normal_distribution<double> normal;
      Vector lambda0(static_cast<Index>(n));
      for (Index j = 0; j < lambda0.size(); ++j) lambda0(j) = sim_median * std::exp(std::log(sim_gsd) * normal(rng));
      const auto sim = simulate(naive_priors(n, sim_epochs, sim_rho, sim_tau), std::nullopt, lambda0, sim_epochs,
                                a.entries(), rng);
      fs::create_directories(sim_out);
      write_routing_csv((fs::path(sim_out) / "routing.csv").string(), a);
      write_series_csv((fs::path(sim_out) / "links.csv").string(), sim.y, a.counter_names());
      write_series_csv((fs::path(sim_out) / "truth.csv").string(), sim.x, a.route_names());
      std::cout << "wrote " << sim_out << '\n';
    } else if (check_cmd->parsed()) {
      const RoutingMatrix a = read_routing_csv(check_routing);
      std::cout << "counters " << a.counters() << "\nroutes " << a.routes() << "\nrank " << a.rank()
                << "\npolytope_dim " << a.polytope_dim() << "\nidentifiable "
                << (check_identifiability(a.entries()) ? "yes" : "no") << '\n';
      try {
        const UnimodularReport u = check_unimodular(a.independent_rows(), max_minors);
        std::cout << "unimodular " << (u.unimodular ? "yes" : "no") << "\nminors_checked " << u.minors_checked
                  << '\n';
        if (!u.unimodular) std::cout << "violating_determinant " << u.violating_determinant << '\n';
      } catch (const EnumerationTooLarge& e) {
        std::cout << "unimodular unknown (" << e.what() << ")\n";
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
