#include "tomo/pipeline.hpp"

#include "tomo/baselines.hpp"
#include "tomo/errors.hpp"
#include "tomo/io.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace tomo {

namespace fs = std::filesystem;

namespace {

/// Column order of `table` that lines up with `names`, or empty when the
/// names do not match as sets.
std::vector<Index> match_columns(const std::vector<std::string>& columns, const std::vector<std::string>& names) {
  if (columns.size() != names.size()) return {};
  std::map<std::string, Index> position;
  for (std::size_t j = 0; j < columns.size(); ++j) position[columns[j]] = static_cast<Index>(j);
  if (position.size() != columns.size()) return {};
  std::vector<Index> order;
  for (const auto& name : names) {
    const auto it = position.find(name);
    if (it == position.end()) return {};
    order.push_back(it->second);
  }
  return order;
}

Matrix align(const LabeledMatrix& table, const std::vector<std::string>& names, const std::string& what,
             std::vector<std::string>& warnings) {
  const auto expected = static_cast<Index>(names.size());
  if (const auto order = match_columns(table.col_names, names); !order.empty()) {
    Matrix out(table.values.rows(), expected);
    for (Index j = 0; j < expected; ++j) out.col(j) = table.values.col(order[static_cast<std::size_t>(j)]);
    return out;
  }
  if (table.values.cols() != expected) {
    throw ShapeMismatch(what + " has " + std::to_string(table.values.cols()) + " columns, expected " +
                        std::to_string(expected));
  }
  warnings.push_back(what + " column names do not match; columns taken in file order");
  return table.values;
}

void check_nonnegative(const Matrix& m, const std::string& what) {
  for (Index t = 0; t < m.rows(); ++t) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (std::isnan(m(t, j))) throw ValidationError(what + ": missing value at epoch " + std::to_string(t + 1));
      if (m(t, j) < 0.0) {
        throw NegativeEntry(what + ": negative value at epoch " + std::to_string(t + 1) + ", column " +
                            std::to_string(j + 1));
      }
    }
  }
}

std::string join(const fs::path& dir, const std::string& file) { return (dir / file).string(); }

}  // namespace

// ---------------------------------------------------------------------------
// Ingest

Dataset ingest(const std::string& routing_path, const std::string& links_path, const std::string& truth_path,
               IngestReport& report) {
  Dataset data;
  data.routing_path = routing_path;
  data.links_path = links_path;
  data.truth_path = truth_path;
  data.routing = std::make_shared<const RoutingMatrix>(read_routing_csv(routing_path));
  const RoutingMatrix& a = *data.routing;

  report = IngestReport{};
  data.y = align(read_series_csv(links_path), a.counter_names(), "link file", report.warnings);
  check_nonnegative(data.y, "link file");

  report.epochs = static_cast<std::size_t>(data.y.rows());
  report.counters = static_cast<std::size_t>(a.counters());
  report.routes = static_cast<std::size_t>(a.routes());
  report.rank = a.rank();
  report.polytope_dim = a.polytope_dim();
  report.identifiable = check_identifiability(a.entries());
  if (report.rank < report.counters) {
    report.warnings.push_back("rank deficient routing matrix: rank " + std::to_string(report.rank) + " < " +
                              std::to_string(report.counters) + " counters");
  }

  if (!truth_path.empty()) {
    Matrix truth = align(read_series_csv(truth_path), a.route_names(), "truth file", report.warnings);
    check_nonnegative(truth, "truth file");
    if (truth.rows() != data.y.rows()) {
      throw ShapeMismatch("truth has " + std::to_string(truth.rows()) + " epochs, links have " +
                          std::to_string(data.y.rows()));
    }
    for (Index t = 0; t < truth.rows(); ++t) {
      const Vector y_t = data.y.row(t).transpose();
      const double scale = 1.0 + y_t.cwiseAbs().maxCoeff();
      const double v = (a.entries() * truth.row(t).transpose() - y_t).cwiseAbs().maxCoeff() / scale;
      report.truth_violation = std::max(report.truth_violation, v);
      if (v > 1e-6) report.violating_epochs.push_back(static_cast<std::size_t>(t));
    }
    if (!report.violating_epochs.empty()) {
      report.warnings.push_back(std::to_string(report.violating_epochs.size()) +
                                " epochs where the truth does not reproduce the links");
    }
    data.truth = std::move(truth);
  }
  return data;
}

CounterMapFile read_counter_map_csv(const std::string& path, const RoutingMatrix& routing) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < routing.counter_names().size(); ++i) by_name[routing.counter_names()[i]] = i;

  CounterMapFile out;
  out.map.assign(static_cast<std::size_t>(routing.counters()), std::nullopt);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      cell.erase(std::remove(cell.begin(), cell.end(), '"'), cell.end());
      cells.push_back(cell);
    }
    if (line_no == 1 && !cells.empty() && cells[0] == "counter") continue;
    if (cells.size() != 3) throw ValidationError(path + ":" + std::to_string(line_no) + ": expected 3 cells");
    std::size_t counter;
    if (const auto it = by_name.find(cells[0]); it != by_name.end()) {
      counter = it->second;
    } else {
      try {
        counter = std::stoul(cells[0]);
      } catch (const std::exception&) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": unknown counter '" + cells[0] + "'");
      }
      if (counter >= out.map.size()) throw ValidationError(path + ": counter index out of range");
    }
    std::size_t node;
    try {
      node = std::stoul(cells[1]);
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad node '" + cells[1] + "'");
    }
    Direction dir;
    if (cells[2] == "outbound" || cells[2] == "out") {
      dir = Direction::outbound;
    } else if (cells[2] == "inbound" || cells[2] == "in") {
      dir = Direction::inbound;
    } else {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": direction must be outbound or inbound");
    }
    out.map[counter] = CounterRole{node, dir};
    out.node_count = std::max(out.node_count, node + 1);
  }
  if (out.node_count * out.node_count != static_cast<std::size_t>(routing.routes())) {
    throw ValidationError("counter map covers " + std::to_string(out.node_count) + " nodes but the routing has " +
                          std::to_string(routing.routes()) + " routes");
  }
  return out;
}

CounterMapFile resolve_counter_map(const Dataset& data, const std::string& topology, const std::string& counter_map) {
  if (!counter_map.empty()) return read_counter_map_csv(counter_map, *data.routing);
  if (!topology.empty()) {
    const Topology top = parse_topology(topology);
    if (top.counter_count() != static_cast<std::size_t>(data.routing->counters()) ||
        top.route_count() != static_cast<std::size_t>(data.routing->routes())) {
      throw ShapeMismatch("topology " + topology + " does not match the routing matrix shape");
    }
    return {top.counter_map(), top.node_count};
  }
  throw MissingTotals("node totals need --topology or --counter-map");
}

// ---------------------------------------------------------------------------
// Pipeline

Stage1 parse_stage1(const std::string& text) {
  if (text == "ssm") return Stage1::ssm;
  if (text == "gravity") return Stage1::gravity;
  if (text == "naive") return Stage1::naive;
  throw ValidationError("stage1 must be ssm, gravity or naive");
}

std::string to_string(Stage1 stage) {
  switch (stage) {
    case Stage1::ssm:
      return "ssm";
    case Stage1::gravity:
      return "gravity";
    case Stage1::naive:
      return "naive";
  }
  return "ssm";
}

void write_metrics_csv(const std::string& path, const std::string& method, const ErrorSummary& errors) {
  auto out = open_output(path);
  out << "method,mean_L1,se_L1,mean_L2,se_L2\n";
  out << method << ',' << errors.mean_l1 << ',' << errors.se_l1 << ',' << errors.mean_l2 << ',' << errors.se_l2
      << '\n';
}

RunOutputs run_pipeline(const Dataset& data, const RunConfig& config, const std::string& out_dir) {
  const RoutingMatrix& a = *data.routing;
  const auto n = static_cast<std::size_t>(a.routes());
  const auto T = static_cast<std::size_t>(data.y.rows());
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  RunOutputs out;

  switch (config.stage1) {
    case Stage1::ssm: {
      SsmOptions ssm = config.ssm;
      ssm.tau = config.tau;
      const SsmFit fit = fit_sliding(data.y, a.entries(), ssm);
      write_ssm_fit_csv(join(dir, "ssm_fit.csv"), fit, a.route_names());
      out.files.push_back("ssm_fit.csv");
      const CorrectedSeries corrected = correct_and_smooth(fit.x_hat, a.entries(), data.y, config.median_window);
      out.priors = priors_from_ssm(corrected.smoothed, fit.v_hat, fit.phi_hat, config.rho, config.tau);
      break;
    }
    case Stage1::gravity: {
      const CounterMapFile totals = resolve_counter_map(data, config.topology, config.counter_map);
      const Matrix grav = gravity_series(data.y, totals.map, totals.node_count);
      out.priors = priors_from_gravity(grav, config.rho, config.tau);
      break;
    }
    case Stage1::naive:
      out.priors = naive_priors(n, T, config.rho, config.tau);
      break;
  }
  if (config.alpha) out.priors.alpha = *config.alpha;
  write_priors_csv(join(dir, "priors.csv"), out.priors, a.route_names());
  write_priors_sidecar(join(dir, "priors.json"), out.priors);
  out.files.push_back("priors.csv");
  out.files.push_back("priors.json");

  std::unique_ptr<ParticleDumpWriter> dump;
  EpochObserver observer;
  if (config.dump_particles) {
    dump = std::make_unique<ParticleDumpWriter>(join(dir, "particles.bin"), T, config.filter.n_particles, n);
    observer = [&dump](std::size_t t, const Polytope&, const std::vector<Particle>& particles) {
      dump->write_epoch(t, particles);
    };
  }
  out.posterior = sirm_filter(data.y, data.routing, out.priors, config.filter, observer);
  dump.reset();
  if (config.dump_particles) out.files.push_back("particles.bin");

  write_estimates_csv(join(dir, "estimates.csv"), out.posterior, a.route_names());
  write_diagnostics_csv(join(dir, "diagnostics.csv"), out.posterior);
  out.files.push_back("estimates.csv");
  out.files.push_back("diagnostics.csv");
  if (data.truth) {
    out.errors = l_errors(out.posterior.mean, *data.truth);
    write_metrics_csv(join(dir, "metrics.csv"), "sirm_" + to_string(config.stage1), *out.errors);
    out.files.push_back("metrics.csv");
  }
  return out;
}

BaselineMethod parse_baseline(const std::string& text) {
  if (text == "ipfp") return BaselineMethod::ipfp;
  if (text == "gravity") return BaselineMethod::gravity;
  if (text == "tomogravity") return BaselineMethod::tomogravity;
  throw ValidationError("baseline method must be ipfp, gravity or tomogravity");
}

Matrix run_baseline(const Dataset& data, BaselineMethod method, const CounterMapFile& totals, double lam,
                    const std::string& out_dir, std::optional<ErrorSummary>& errors) {
  const RoutingMatrix& a = *data.routing;
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  Matrix estimate;
  std::string name;
  switch (method) {
    case BaselineMethod::ipfp:
      estimate = ipfp_series(data.y, a.entries());
      name = "ipfp";
      break;
    case BaselineMethod::gravity:
      estimate = gravity_series(data.y, totals.map, totals.node_count);
      name = "gravity";
      break;
    case BaselineMethod::tomogravity:
      estimate = tomogravity_series(data.y, a.entries(), totals.map, totals.node_count, lam);
      name = "tomogravity";
      break;
  }
  write_point_estimates_csv(join(dir, "estimates.csv"), estimate, a.route_names());
  errors.reset();
  if (data.truth) {
    errors = l_errors(estimate, *data.truth);
    write_metrics_csv(join(dir, "metrics.csv"), name, *errors);
  }
  return estimate;
}

// ---------------------------------------------------------------------------
// Manifest

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << value;
  return ss.str();
}

std::string file_digest(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

namespace {

nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["stage1"] = to_string(c.stage1);
  j["rho"] = c.rho;
  j["tau"] = c.tau;
  j["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
  j["median_window"] = c.median_window;
  j["particles"] = c.filter.n_particles;
  j["move_iters"] = c.filter.n_move;
  j["rda_steps_per_draw"] = c.filter.rda_steps_per_draw;
  j["rda_steps_per_move"] = c.filter.rda_steps_per_move;
  j["proposal_chains"] = c.filter.proposal_chains;
  j["resampling"] = c.filter.resampling == Resampling::systematic ? "systematic" : "multinomial";
  j["seed"] = c.filter.seed;
  j["initial_log_sd"] = c.filter.initial_log_sd;
  j["phi_step_sd"] = c.filter.phi_step_sd;
  j["window"] = c.ssm.window;
  j["ssm_rho"] = c.ssm.rho;
  j["sigma2"] = c.ssm.sigma2;
  j["ssm_parallel"] = c.ssm.parallel;
  j["topology"] = c.topology;
  j["counter_map"] = c.counter_map;
  j["dump_particles"] = c.dump_particles;
  return j;
}

RunConfig config_from(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.stage1 = parse_stage1(j.at("stage1").get<std::string>());
    c.rho = j.at("rho").get<double>();
    c.tau = j.at("tau").get<double>();
    if (!j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
    c.median_window = j.at("median_window").get<std::size_t>();
    c.filter.n_particles = j.at("particles").get<std::size_t>();
    c.filter.n_move = j.at("move_iters").get<std::size_t>();
    c.filter.rda_steps_per_draw = j.at("rda_steps_per_draw").get<std::size_t>();
    c.filter.rda_steps_per_move = j.at("rda_steps_per_move").get<std::size_t>();
    c.filter.proposal_chains = j.at("proposal_chains").get<std::size_t>();
    c.filter.resampling =
        j.at("resampling").get<std::string>() == "multinomial" ? Resampling::multinomial : Resampling::systematic;
    c.filter.seed = j.at("seed").get<std::uint64_t>();
    c.filter.initial_log_sd = j.at("initial_log_sd").get<double>();
    c.filter.phi_step_sd = j.at("phi_step_sd").get<double>();
    c.ssm.window = j.at("window").get<std::size_t>();
    c.ssm.rho = j.at("ssm_rho").get<double>();
    c.ssm.sigma2 = j.at("sigma2").get<double>();
    c.ssm.parallel = j.at("ssm_parallel").get<bool>();
    c.topology = j.at("topology").get<std::string>();
    c.counter_map = j.at("counter_map").get<std::string>();
    c.dump_particles = j.at("dump_particles").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  c.ssm.tau = c.tau;
  return c;
}

}  // namespace

std::string run_config_to_json(const RunConfig& config) { return config_json(config).dump(); }

RunConfig run_config_from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
}

void write_manifest(const std::string& path, const Manifest& manifest, const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["tool"] = "tomo";
  j["version"] = kVersion;
  j["command"] = manifest.command;
  auto input = [](const std::string& p) {
    nlohmann::json e;
    e["path"] = p.empty() ? "" : fs::absolute(p).string();
    e["fnv1a"] = file_digest(p);
    return e;
  };
  j["inputs"]["routing"] = input(manifest.routing_path);
  j["inputs"]["links"] = input(manifest.links_path);
  j["inputs"]["truth"] = input(manifest.truth_path);
  j["out_dir"] = fs::absolute(manifest.out_dir).string();
  const nlohmann::json config = config_json(manifest.config);
  j["config"] = config;
  j["config_hash"] = hex64(fnv1a(config.dump()));
  j["seed"] = manifest.config.filter.seed;
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  j["versions"]["eigen"] = eigen.str();
  j["versions"]["compiler"] = __VERSION__;
  j["versions"]["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                          std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : outputs) {
    files.push_back({{"file", f}, {"fnv1a", file_digest(join(fs::path(manifest.out_dir), f))}});
  }
  j["outputs"] = files;
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  Manifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.routing_path = j.at("inputs").at("routing").at("path").get<std::string>();
    m.links_path = j.at("inputs").at("links").at("path").get<std::string>();
    m.truth_path = j.at("inputs").at("truth").at("path").get<std::string>();
    m.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  m.config = config_from(j.at("config"));
  const std::string recorded = j.value("config_hash", "");
  if (!recorded.empty() && recorded != hex64(fnv1a(config_json(m.config).dump()))) {
    throw ValidationError(path + ": config hash does not match the recorded config");
  }
  for (const auto& [key, file] : {std::pair{"routing", m.routing_path}, {"links", m.links_path}, {"truth", m.truth_path}}) {
    const std::string digest = j.at("inputs").at(key).value("fnv1a", "");
    if (!file.empty() && !digest.empty() && file_digest(file) != digest) {
      throw ValidationError(path + ": input " + file + " changed since the manifest was written");
    }
  }
  return m;
}

}  // namespace tomo
