#include "tomo/simstudy.hpp"

#include "tomo/baselines.hpp"
#include "tomo/calibrate.hpp"
#include "tomo/errors.hpp"
#include "tomo/io.hpp"
#include "tomo/polytope.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

namespace tomo {

namespace {

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("topology: bad node count '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  return out;
}

double median_of(Vector v) {
  if (v.size() == 0) return 0.0;
  std::sort(v.data(), v.data() + v.size());
  const Index mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  Rng rng = stream_rng(seed, stream, substream);
  return rng();
}

FilterConfig seeded(FilterConfig config, std::uint64_t seed) {
  config.seed = seed;
  return config;
}

}  // namespace

ErrorSummary l_errors(const Matrix& x_hat, const Matrix& x_true) {
  if (x_hat.rows() != x_true.rows() || x_hat.cols() != x_true.cols()) {
    throw ShapeMismatch("l_errors: estimate and truth shapes differ");
  }
  const Index T = x_hat.rows();
  if (T == 0) throw ValidationError("l_errors: no epochs");
  const Matrix diff = x_hat - x_true;
  const Vector l1 = diff.cwiseAbs().rowwise().sum();
  const Vector l2 = diff.rowwise().norm();
  auto mean_se = [T](const Vector& v, double& mean, double& se) {
    mean = v.mean();
    if (T < 2) {
      se = 0.0;
      return;
    }
    const double var = (v.array() - mean).square().sum() / static_cast<double>(T - 1);
    se = std::sqrt(var / static_cast<double>(T));
  };
  ErrorSummary out;
  mean_se(l1, out.mean_l1, out.se_l1);
  mean_se(l2, out.mean_l2, out.se_l2);
  return out;
}

Topology parse_topology(const std::string& spec) {
  std::string kind = spec;
  std::string args;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    kind = spec.substr(0, colon);
    args = spec.substr(colon + 1);
  } else {
    const auto digit = spec.find_first_of("0123456789");
    if (digit != std::string::npos) {
      kind = spec.substr(0, digit);
      args = spec.substr(digit);
    }
  }
  const auto counts = parse_counts(args);
  if (kind == "star" && counts.size() == 1) return star_topology(counts[0]);
  if (kind == "chain" && counts.size() == 1) return chain_topology(counts[0]);
  if ((kind == "two_router" || kind == "tworouter") && counts.size() == 2) {
    return two_router_topology(counts[0], counts[1]);
  }
  throw ValidationError("unknown topology '" + spec + "'");
}

TwoStagePriors two_stage_priors(const Matrix& y, const Matrix& a, const SsmOptions& ssm, double rho, double tau,
                                std::size_t median_window) {
  TwoStagePriors out;
  out.fit = fit_sliding(y, a, ssm);
  const CorrectedSeries corrected = correct_and_smooth(out.fit.x_hat, a, y, median_window);
  out.corrected = corrected.smoothed;
  out.priors = priors_from_ssm(out.corrected, out.fit.v_hat, out.fit.phi_hat, rho, tau);
  return out;
}

// ---------------------------------------------------------------------------
// Relative error experiment

RelerrResult run_relerr_experiment(const RelerrConfig& config, const ProgressCallback& progress) {
  if (config.reps == 0 || config.epochs == 0) throw ValidationError("relerr: reps and epochs must be positive");
  if (!(config.lambda0_median > 0.0) || !(config.lambda0_gsd >= 1.0)) {
    throw ValidationError("relerr: lambda0 median must be positive and gsd at least 1");
  }
  RelerrResult result;
  for (std::size_t k = 0; k < config.topologies.size(); ++k) {
    const Topology topology = parse_topology(config.topologies[k]);
    const auto routing = std::make_shared<const RoutingMatrix>(build_routing(topology));
    const Matrix& a = routing->entries();
    const auto n = static_cast<std::size_t>(routing->routes());
    const std::size_t dim = routing->polytope_dim();
    const PriorSchedule truth = naive_priors(n, config.epochs, config.rho, config.tau);

    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      Rng rng = stream_rng(config.seed, k, rep);
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector lambda0(static_cast<Index>(n));
      for (auto& v : lambda0) v = config.lambda0_median * std::exp(std::log(config.lambda0_gsd) * normal(rng));
      const auto sim = simulate(truth, std::nullopt, lambda0, config.epochs, a, rng);
      const std::uint64_t filter_seed = derived_seed(config.seed, 1000 + k, rep);

      try {
        const PosteriorSummary naive = sirm_filter(sim.y, routing, truth, seeded(config.filter, filter_seed));
        const TwoStagePriors stage = two_stage_priors(sim.y, a, config.ssm, config.rho, config.tau);
        const PosteriorSummary two = sirm_filter(sim.y, routing, stage.priors, seeded(config.filter, filter_seed));
        RelerrRow row_naive{config.topologies[k], dim, rep, "naive", l_errors(naive.mean, sim.x), median_of(naive.ess)};
        RelerrRow row_two{config.topologies[k], dim, rep, "two_stage", l_errors(two.mean, sim.x), median_of(two.ess)};
        if (progress) {
          std::ostringstream msg;
          msg << config.topologies[k] << " rep " << rep + 1 << "/" << config.reps << ": L2 naive "
              << row_naive.errors.mean_l2 << " two-stage " << row_two.errors.mean_l2 << " ratio "
              << row_naive.errors.mean_l2 / row_two.errors.mean_l2 << " median ESS " << row_naive.median_ess << " / "
              << row_two.median_ess;
          progress(msg.str());
        }
        result.rows.push_back(std::move(row_naive));
        result.rows.push_back(std::move(row_two));
      } catch (const NumericalError& e) {
        ++result.failures;
        result.failure_messages.push_back(config.topologies[k] + " rep " + std::to_string(rep + 1) + ": " + e.what());
        if (progress) progress(result.failure_messages.back());
      }
    }
  }
  return result;
}

std::vector<double> relative_l2_errors(const RelerrResult& result, const std::string& topology) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < result.rows.size(); ++i) {
    const auto& a = result.rows[i];
    const auto& b = result.rows[i + 1];
    if (a.topology == topology && b.topology == topology && a.rep == b.rep && a.method == "naive" &&
        b.method == "two_stage") {
      out.push_back(a.errors.mean_l2 / b.errors.mean_l2);
    }
  }
  return out;
}

void write_relerr_csv(const std::string& path, const RelerrResult& result) {
  auto out = open_output(path);
  out << "topology,dim,rep,method,mean_L1,se_L1,mean_L2,se_L2,median_ess\n";
  for (const auto& r : result.rows) {
    out << r.topology << ',' << r.dim << ',' << r.rep + 1 << ',' << r.method << ',' << r.errors.mean_l1 << ','
        << r.errors.se_l1 << ',' << r.errors.mean_l2 << ',' << r.errors.se_l2 << ',' << r.median_ess << '\n';
  }
}

// ---------------------------------------------------------------------------
// Star benchmark

double sparsity_covariate(const Matrix& y, const RoutingMatrix& a) {
  if (y.cols() != a.counters()) throw ShapeMismatch("sparsity: y columns differ from the routing counters");
  if (y.rows() == 0) throw ValidationError("sparsity: no epochs");
  const Matrix& entries = a.entries();
  double total = 0.0;
  for (Index t = 0; t < y.rows(); ++t) {
    Index live = 0;
    for (Index j = 0; j < entries.cols(); ++j) {
      bool forced = false;
      for (Index i = 0; i < entries.rows() && !forced; ++i) forced = entries(i, j) > 0.0 && y(t, i) == 0.0;
      if (!forced) ++live;
    }
    total += static_cast<double>(live) / static_cast<double>(entries.cols());
  }
  return std::log10(total / static_cast<double>(y.rows()));
}

std::vector<StarBenchmarkRow> run_star_benchmark(const StarBenchmarkConfig& config, const Matrix& od_pool,
                                                 const ProgressCallback& progress) {
  if ((od_pool.array() < 0.0).any()) throw NegativeEntry("star benchmark: negative entry in the OD pool");
  std::vector<StarBenchmarkRow> rows;
  std::size_t run = 0;
  for (std::size_t k = 0; k < config.node_counts.size(); ++k) {
    const std::size_t nodes = config.node_counts[k];
    const Topology topology = star_topology(nodes);
    const auto routing = std::make_shared<const RoutingMatrix>(build_routing(topology));
    const Matrix& a = routing->entries();
    const std::size_t n = nodes * nodes;
    if (static_cast<std::size_t>(od_pool.cols()) < n) {
      throw ValidationError("star benchmark: pool has " + std::to_string(od_pool.cols()) + " series but star(" +
                            std::to_string(nodes) + ") needs " + std::to_string(n));
    }
    const CounterMap map = topology.counter_map();
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      ++run;
      Rng rng = stream_rng(config.seed, k, rep);
      std::vector<Index> cols(static_cast<std::size_t>(od_pool.cols()));
      std::iota(cols.begin(), cols.end(), Index{0});
      std::shuffle(cols.begin(), cols.end(), rng);
      Matrix x(od_pool.rows(), static_cast<Index>(n));
      for (std::size_t j = 0; j < n; ++j) x.col(static_cast<Index>(j)) = od_pool.col(cols[j]);
      const Matrix y = x * a.transpose();
      const double sparsity = sparsity_covariate(y, *routing);
      const std::uint64_t filter_seed = derived_seed(config.seed, 1000 + k, rep);

      auto add = [&](const std::string& method, const Matrix& estimate) {
        rows.push_back({run, nodes, rep, method, routing->polytope_dim(), sparsity, l_errors(estimate, x)});
        if (progress) {
          std::ostringstream msg;
          msg << "star(" << nodes << ") rep " << rep + 1 << " " << method << ": L1 " << rows.back().errors.mean_l1
              << " L2 " << rows.back().errors.mean_l2;
          progress(msg.str());
        }
      };
      add("ipfp", ipfp_series(y, a));
      add("gravity", gravity_series(y, map, nodes));
      const TwoStagePriors stage = two_stage_priors(y, a, config.ssm, config.rho, config.tau);
      add("gssm", stage.corrected);
      const PriorSchedule naive = naive_priors(n, static_cast<std::size_t>(y.rows()), config.rho, config.tau);
      add("naive", sirm_filter(y, routing, naive, seeded(config.filter, filter_seed)).mean);
      add("two_stage", sirm_filter(y, routing, stage.priors, seeded(config.filter, filter_seed)).mean);
    }
  }
  return rows;
}

void write_star_benchmark_csv(const std::string& path, const std::vector<StarBenchmarkRow>& rows,
                              const std::string& selection_rule) {
  auto out = open_output(path);
  out << "# pool selection: " << selection_rule << '\n';
  out << "run,nodes,rep,method,dim,sparsity,mean_L1,se_L1,mean_L2,se_L2,log10_L1,log10_L2\n";
  for (const auto& r : rows) {
    out << r.run << ',' << r.nodes << ',' << r.rep + 1 << ',' << r.method << ',' << r.dim << ',' << r.sparsity << ','
        << r.errors.mean_l1 << ',' << r.errors.se_l1 << ',' << r.errors.mean_l2 << ',' << r.errors.se_l2 << ','
        << std::log10(r.errors.mean_l1) << ',' << std::log10(r.errors.mean_l2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON configs

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_filter(const nlohmann::json& j, FilterConfig& f) {
  read_key(j, "particles", f.n_particles);
  read_key(j, "move_iters", f.n_move);
  read_key(j, "rda_steps_per_draw", f.rda_steps_per_draw);
  read_key(j, "rda_steps_per_move", f.rda_steps_per_move);
  read_key(j, "proposal_chains", f.proposal_chains);
  read_key(j, "threads", f.threads);
  std::string resampling;
  read_key(j, "resampling", resampling);
  if (resampling == "multinomial") {
    f.resampling = Resampling::multinomial;
  } else if (!resampling.empty() && resampling != "systematic") {
    throw ValidationError("config key 'resampling' must be systematic or multinomial");
  }
}

void read_ssm(const nlohmann::json& j, SsmOptions& s) {
  read_key(j, "window", s.window);
  read_key(j, "ssm_rho", s.rho);
  read_key(j, "sigma2", s.sigma2);
}

}  // namespace

RelerrConfig relerr_config_from_json(const std::string& path) {
  const auto j = load_json(path);
  RelerrConfig c;
  read_key(j, "topologies", c.topologies);
  read_key(j, "reps", c.reps);
  read_key(j, "epochs", c.epochs);
  read_key(j, "rho", c.rho);
  read_key(j, "tau", c.tau);
  read_key(j, "lambda0_median", c.lambda0_median);
  read_key(j, "lambda0_gsd", c.lambda0_gsd);
  read_key(j, "seed", c.seed);
  read_filter(j, c.filter);
  read_ssm(j, c.ssm);
  c.ssm.tau = c.tau;
  return c;
}

StarBenchmarkConfig star_config_from_json(const std::string& path) {
  const auto j = load_json(path);
  StarBenchmarkConfig c;
  read_key(j, "node_counts", c.node_counts);
  read_key(j, "reps", c.reps);
  read_key(j, "rho", c.rho);
  read_key(j, "tau", c.tau);
  read_key(j, "seed", c.seed);
  read_key(j, "selection_rule", c.selection_rule);
  read_filter(j, c.filter);
  read_ssm(j, c.ssm);
  c.ssm.tau = c.tau;
  return c;
}

}  // namespace tomo
