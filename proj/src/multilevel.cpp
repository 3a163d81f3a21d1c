#include "tomo/multilevel.hpp"

#include "tomo/errors.hpp"
#include "tomo/io.hpp"
#include "tomo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>

namespace tomo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMinVariance = std::numeric_limits<double>::min();

enum Phase : std::uint64_t { kPropose = 0, kParticle = 1, kMove = 2, kResample = 3, kInitial = 4 };

Rng phase_rng(std::uint64_t seed, std::size_t epoch, Phase phase, std::size_t attempt, std::size_t index) {
  const std::uint64_t stream = (static_cast<std::uint64_t>(epoch) << 16) | (static_cast<std::uint64_t>(phase) << 8) |
                               static_cast<std::uint64_t>(attempt & 0xff);
  return stream_rng(seed, stream, index);
}

double gamma_logpdf(double value, double shape, double scale) {
  if (!(value > 0.0)) return kNegInf;
  return (shape - 1.0) * std::log(value) - value / scale - shape * std::log(scale) - std::lgamma(shape);
}

double model_variance(double lambda, double phi, double tau) {
  return std::max(std::pow(lambda, tau) * std::expm1(phi), kMinVariance);
}

/// Sum over routes of the truncated-normal model log density.
double model_logpdf(const Vector& x, const Vector& lambda, double phi, double tau) {
  double total = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    total += truncnorm_logpdf(x[j], lambda[j], model_variance(lambda[j], phi, tau));
  }
  return total;
}

double gaussian_kernel(const Vector& x, const Vector& mean, const Vector& var) {
  double total = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double r = x[j] - mean[j];
    total -= 0.5 * r * r / var[j];
  }
  return total;
}

/// Type-7 quantile of sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Draws `count` points from the Gaussian kernel N(mean, diag(var)) on the
/// polytope with `chains` independent random-directions chains, each burned
/// in for 10 * steps and thinned by `steps`.
std::vector<Vector> proposal_draws(const Polytope& p, const Vector& mean, const Vector& var, std::size_t count,
                                   std::size_t chains, std::size_t steps, std::uint64_t seed, std::size_t epoch,
                                   std::size_t attempt, std::size_t threads) {
  std::vector<Vector> draws(count);
  const Vector start = feasible_point(p, mean);
  if (p.dim() == 0) {
    std::fill(draws.begin(), draws.end(), start);
    return draws;
  }
  chains = std::clamp<std::size_t>(chains, 1, count);
  parallel_for(chains, threads, [&](std::size_t c) {
    Rng rng = phase_rng(seed, epoch, kPropose, attempt, c);
    RdaSampler sampler(p);
    auto log_density = [&](const Vector& x) { return gaussian_kernel(x, mean, var); };
    Vector x = start;
    double log_fx = log_density(x);
    for (std::size_t s = 0; s < 10 * steps; ++s) sampler.step(x, log_fx, log_density, rng);
    const std::size_t begin = c * count / chains;
    const std::size_t end = (c + 1) * count / chains;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t s = 0; s < steps; ++s) sampler.step(x, log_fx, log_density, rng);
      draws[i] = x;
    }
  });
  return draws;
}

struct MoveCounts {
  std::size_t lambda_accepted = 0;
  std::size_t lambda_proposed = 0;
  std::size_t phi_accepted = 0;
  std::size_t phi_proposed = 0;
  std::size_t x_accepted = 0;
  std::size_t x_proposed = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Truncated normal

double log_normal_cdf(double z) {
  if (std::isnan(z)) return z;
  if (z > 5.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -20.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(-z) - kHalfLog2Pi + std::log(series);
}

double truncnorm_logpdf(double x, double mean, double var) {
  if (x < 0.0) return kNegInf;
  const double sd = std::sqrt(std::max(var, kMinVariance));
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi - log_normal_cdf(mean / sd);
}

double truncnorm_draw(double mean, double var, Rng& rng) {
  if (!(var > 0.0)) return std::max(mean, 0.0);
  const double sd = std::sqrt(var);
  const double a = -mean / sd;
  double z;
  if (a < 0.4) {
    std::normal_distribution<double> normal(0.0, 1.0);
    do {
      z = normal(rng);
    } while (z <= a);
  } else {
    // Exponential proposal with the optimal rate for the standardised bound a.
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    std::exponential_distribution<double> expo(rate);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (true) {
      z = a + expo(rng);
      const double r = z - rate;
      if (unif(rng) <= std::exp(-0.5 * r * r)) break;
    }
  }
  return std::max(mean + sd * z, 0.0);
}

// ---------------------------------------------------------------------------
// Simulation

MultilevelSimulation simulate(const PriorSchedule& priors, std::optional<double> phi_fixed, const Vector& lambda0,
                              std::size_t epochs, const Matrix& a, Rng& rng) {
  priors.validate();
  const Index n = priors.routes();
  if (lambda0.size() != n) throw ShapeMismatch("simulate: lambda0 length differs from the prior routes");
  if (a.cols() != n) throw ShapeMismatch("simulate: routing columns differ from the prior routes");
  if (static_cast<Index>(epochs) > priors.epochs()) {
    throw ValidationError("simulate: more epochs requested than the prior schedule covers");
  }
  if ((lambda0.array() <= 0.0).any()) throw ValidationError("simulate: lambda0 must be positive");
  if (phi_fixed && !(*phi_fixed >= 0.0)) throw ValidationError("simulate: phi must be non-negative");

  const auto T = static_cast<Index>(epochs);
  MultilevelSimulation sim{Matrix(T, n), Matrix(T, n), Matrix(T, a.rows()), Vector(T)};
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector log_lambda = lambda0.array().log();
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < n; ++j) {
      const double innovation = priors.theta1(t, j) + std::sqrt(priors.theta2(t, j)) * normal(rng);
      log_lambda[j] = priors.rho * log_lambda[j] + innovation;
    }
    double phi;
    if (phi_fixed) {
      phi = *phi_fixed;
    } else {
      phi = std::gamma_distribution<double>(priors.alpha, priors.beta[t] / priors.alpha)(rng);
    }
    sim.phi[t] = phi;
    for (Index j = 0; j < n; ++j) {
      const double lambda = std::exp(log_lambda[j]);
      sim.lambda(t, j) = lambda;
      sim.x(t, j) = truncnorm_draw(lambda, std::pow(lambda, priors.tau) * std::expm1(phi), rng);
    }
  }
  sim.y = sim.x * a.transpose();
  return sim;
}

// ---------------------------------------------------------------------------
// Weights and resampling

double ess(const Vector& weights) {
  const double sum = weights.sum();
  const double sq = weights.squaredNorm();
  if (!(sq > 0.0)) return 0.0;
  return sum * sum / sq;
}

double ess_from_log_weights(const Vector& log_weights) {
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) return 0.0;
  return ess((log_weights.array() - top).exp().matrix());
}

std::vector<std::size_t> resample(const Vector& weights, Resampling scheme, Rng& rng) {
  const auto count = static_cast<std::size_t>(weights.size());
  std::vector<std::size_t> ancestors(count);
  if (count == 0) return ancestors;
  const double total = weights.sum();
  if (!(total > 0.0)) throw ValidationError("resample: weights must have a positive sum");
  std::vector<double> cumulative(count);
  double running = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    running += weights[static_cast<Index>(i)] / total;
    cumulative[i] = running;
  }
  cumulative.back() = 1.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (scheme == Resampling::systematic) {
    const double offset = unif(rng);
    std::size_t k = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const double u = (static_cast<double>(i) + offset) / static_cast<double>(count);
      while (k + 1 < count && cumulative[k] < u) ++k;
      ancestors[i] = k;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const double u = unif(rng);
      ancestors[i] = static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                                              cumulative.begin());
      ancestors[i] = std::min(ancestors[i], count - 1);
    }
  }
  return ancestors;
}

// ---------------------------------------------------------------------------
// Filter

void FilterConfig::validate() const {
  if (n_particles < 2) throw ValidationError("filter: need at least two particles");
  if (rda_steps_per_draw == 0) throw ValidationError("filter: rda_steps_per_draw must be positive");
  if (proposal_chains == 0) throw ValidationError("filter: proposal_chains must be positive");
  if (!(initial_log_sd >= 0.0)) throw ValidationError("filter: initial_log_sd must be non-negative");
  if (!(phi_step_sd > 0.0)) throw ValidationError("filter: phi_step_sd must be positive");
}

PosteriorSummary sirm_filter(const Matrix& y, std::shared_ptr<const RoutingMatrix> routing,
                             const PriorSchedule& priors, const FilterConfig& config, const EpochObserver& observer) {
  config.validate();
  priors.validate();
  if (!routing) throw ValidationError("filter: routing matrix is null");
  const Index n = routing->routes();
  const Index T = y.rows();
  if (y.cols() != routing->counters()) throw ShapeMismatch("filter: y columns differ from the routing counters");
  if (priors.routes() != n) throw ShapeMismatch("filter: prior routes differ from the routing routes");
  if (priors.epochs() < T) throw ShapeMismatch("filter: prior schedule shorter than y");
  if (T == 0) throw ValidationError("filter: y has no epochs");
  if (config.initial_log_lambda && config.initial_log_lambda->size() != n) {
    throw ShapeMismatch("filter: initial_log_lambda length differs from the routes");
  }

  const std::size_t J = config.n_particles;
  const std::size_t threads = config.threads == 0 ? default_threads() : config.threads;
  const double rho = priors.rho;
  const double tau = priors.tau;
  const double alpha = priors.alpha;

  // lambda_0 prior.
  Vector initial_mean;
  if (config.initial_log_lambda) {
    initial_mean = *config.initial_log_lambda;
  } else {
    const Vector y1 = y.row(0).transpose();
    if ((y1.array() < 0.0).any()) throw NegativeEntry("filter: negative counter in the first epoch");
    const IpfpResult fit = ipfp(routing->entries(), y1, Vector::Ones(n));
    const double scale = y1.size() > 0 ? y1.mean() : 0.0;
    const double floor = std::max(1e-6 * scale, 1e-12);
    initial_mean = fit.x.cwiseMax(floor).array().log();
  }
  std::vector<Vector> prev_log_lambda(J);
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < J; ++i) {
      Rng rng = phase_rng(config.seed, 0, kInitial, 0, i);
      prev_log_lambda[i] = initial_mean;
      for (Index j = 0; j < n; ++j) prev_log_lambda[i][j] += config.initial_log_sd * normal(rng);
    }
  }

  PosteriorSummary summary{Matrix(T, n), Matrix(T, n), Matrix(T, n), Matrix(T, n), Vector(T), {}};
  summary.diagnostics.resize(static_cast<std::size_t>(T));

  std::vector<Particle> particles(J);
  std::vector<Particle> proposed(J);
  std::vector<Vector> next_log_lambda(J);
  std::vector<Vector> proposed_log_lambda(J);
  Vector log_weights(static_cast<Index>(J));
  std::vector<MoveCounts> counts(J);

  for (Index t = 0; t < T; ++t) {
    const auto epoch = static_cast<std::size_t>(t);
    const Vector y_t = y.row(t).transpose();
    if ((y_t.array() < 0.0).any()) throw NegativeEntry("filter: negative counter at epoch " + std::to_string(t + 1));
    const Polytope polytope(routing, y_t);
    const double beta = priors.beta[t];

    // Shared proposal for x: mean rho * average previous lambda.
    Vector proposal_mean = Vector::Zero(n);
    for (std::size_t i = 0; i < J; ++i) proposal_mean += prev_log_lambda[i].array().exp().matrix();
    proposal_mean *= rho / static_cast<double>(J);
    const Vector proposal_var = (std::expm1(beta) * proposal_mean.array().square()).cwiseMax(kMinVariance);

    EpochDiagnostics& diag = summary.diagnostics[epoch];
    std::size_t steps = config.rda_steps_per_draw;
    std::size_t attempt = 0;
    while (true) {
      const std::vector<Vector> draws = proposal_draws(polytope, proposal_mean, proposal_var, J, config.proposal_chains,
                                                       steps, config.seed, epoch, attempt, threads);
      parallel_for(J, threads, [&](std::size_t i) {
        Rng rng = phase_rng(config.seed, epoch, kParticle, attempt, i);
        std::normal_distribution<double> normal(0.0, 1.0);
        Particle& p = proposed[i];
        Vector& log_lambda = proposed_log_lambda[i];
        log_lambda.resize(n);
        p.lambda.resize(n);
        for (Index j = 0; j < n; ++j) {
          log_lambda[j] =
              priors.theta1(t, j) + rho * prev_log_lambda[i][j] + std::sqrt(priors.theta2(t, j)) * normal(rng);
          p.lambda[j] = std::exp(log_lambda[j]);
        }
        p.phi = std::gamma_distribution<double>(alpha, beta / alpha)(rng);
        p.x = draws[i];
        const double lw = model_logpdf(p.x, p.lambda, p.phi, tau) - gaussian_kernel(p.x, proposal_mean, proposal_var);
        p.log_weight = std::isnan(lw) ? kNegInf : lw;
        log_weights[static_cast<Index>(i)] = p.log_weight;
      });
      if (std::isfinite(log_weights.maxCoeff())) break;
      if (attempt >= config.max_restarts) {
        throw DegenerateEnsemble("filter: all importance weights vanished at epoch " + std::to_string(t + 1), epoch);
      }
      ++attempt;
      steps *= 2;
    }
    diag.restarts = attempt;

    const double top = log_weights.maxCoeff();
    const Vector weights = (log_weights.array() - top).exp().matrix();
    diag.ess = ess(weights);
    diag.low_ess = diag.ess < config.ess_threshold;
    summary.ess[t] = diag.ess;

    Rng resample_rng = phase_rng(config.seed, epoch, kResample, attempt, 0);
    const std::vector<std::size_t> ancestors = resample(weights, config.resampling, resample_rng);
    const double equal_log_weight = -std::log(static_cast<double>(J));
    for (std::size_t i = 0; i < J; ++i) {
      particles[i] = proposed[ancestors[i]];
      particles[i].log_weight = equal_log_weight;
      next_log_lambda[i] = prev_log_lambda[ancestors[i]];
    }

    // Move: Metropolis-within-Gibbs on lambda, phi and x.
    parallel_for(J, threads, [&](std::size_t i) {
      Rng rng = phase_rng(config.seed, epoch, kMove, attempt, i);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      Particle& p = particles[i];
      const Vector& prev = next_log_lambda[i];
      MoveCounts& c = counts[i];
      c = MoveCounts{};
      RdaSampler sampler(polytope);
      for (std::size_t sweep = 0; sweep < config.n_move; ++sweep) {
        for (Index j = 0; j < n; ++j) {
          const double prior_mean = priors.theta1(t, j) + rho * prev[j];
          const double prior_var = priors.theta2(t, j);
          const double cur = std::log(p.lambda[j]);
          const double prop = cur + 0.5 * std::sqrt(prior_var) * normal(rng);
          const double lam_prop = std::exp(prop);
          const double log_ratio =
              -0.5 * ((prop - prior_mean) * (prop - prior_mean) - (cur - prior_mean) * (cur - prior_mean)) /
                  prior_var +
              truncnorm_logpdf(p.x[j], lam_prop, model_variance(lam_prop, p.phi, tau)) -
              truncnorm_logpdf(p.x[j], p.lambda[j], model_variance(p.lambda[j], p.phi, tau));
          ++c.lambda_proposed;
          if (std::log(unif(rng)) < log_ratio) {
            p.lambda[j] = lam_prop;
            ++c.lambda_accepted;
          }
        }
        {
          const double phi_prop = p.phi * std::exp(config.phi_step_sd * normal(rng));
          const double log_ratio = gamma_logpdf(phi_prop, alpha, beta / alpha) + std::log(phi_prop) -
                                   gamma_logpdf(p.phi, alpha, beta / alpha) - std::log(p.phi) +
                                   model_logpdf(p.x, p.lambda, phi_prop, tau) -
                                   model_logpdf(p.x, p.lambda, p.phi, tau);
          ++c.phi_proposed;
          if (std::log(unif(rng)) < log_ratio) {
            p.phi = phi_prop;
            ++c.phi_accepted;
          }
        }
        if (config.rda_steps_per_move > 0 && polytope.dim() > 0) {
          Vector var(n);
          for (Index j = 0; j < n; ++j) var[j] = model_variance(p.lambda[j], p.phi, tau);
          auto log_density = [&](const Vector& x) { return gaussian_kernel(x, p.lambda, var); };
          double log_fx = log_density(p.x);
          for (std::size_t s = 0; s < config.rda_steps_per_move; ++s) {
            ++c.x_proposed;
            if (sampler.step(p.x, log_fx, log_density, rng)) ++c.x_accepted;
          }
        }
      }
      prev_log_lambda[i] = p.lambda.array().log();
    });

    MoveCounts total;
    for (const auto& c : counts) {
      total.lambda_accepted += c.lambda_accepted;
      total.lambda_proposed += c.lambda_proposed;
      total.phi_accepted += c.phi_accepted;
      total.phi_proposed += c.phi_proposed;
      total.x_accepted += c.x_accepted;
      total.x_proposed += c.x_proposed;
    }
    auto rate = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    diag.lambda_accept = rate(total.lambda_accepted, total.lambda_proposed);
    diag.phi_accept = rate(total.phi_accepted, total.phi_proposed);
    diag.x_accept = rate(total.x_accepted, total.x_proposed);

    std::vector<double> column(J);
    for (Index j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < J; ++i) {
        column[i] = particles[i].x[j];
        sum += column[i];
      }
      std::sort(column.begin(), column.end());
      summary.mean(t, j) = sum / static_cast<double>(J);
      summary.median(t, j) = sorted_quantile(column, 0.5);
      summary.q05(t, j) = sorted_quantile(column, 0.05);
      summary.q95(t, j) = sorted_quantile(column, 0.95);
    }

    if (observer) observer(epoch, polytope, particles);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::vector<std::string> names_or_default(const std::vector<std::string>& names, Index count) {
  if (!names.empty()) {
    if (static_cast<Index>(names.size()) != count) throw ShapeMismatch("route names differ from the route count");
    return names;
  }
  std::vector<std::string> out;
  for (Index j = 0; j < count; ++j) out.push_back("r" + std::to_string(j));
  return out;
}

}  // namespace

void write_estimates_csv(const std::string& path, const PosteriorSummary& summary,
                         const std::vector<std::string>& route_names) {
  const auto names = names_or_default(route_names, summary.mean.cols());
  auto out = open_output(path);
  out << "t,route,mean,median,q05,q95\n";
  for (Index t = 0; t < summary.mean.rows(); ++t) {
    for (Index j = 0; j < summary.mean.cols(); ++j) {
      out << t + 1 << ',' << names[static_cast<std::size_t>(j)] << ',' << summary.mean(t, j) << ','
          << summary.median(t, j) << ',' << summary.q05(t, j) << ',' << summary.q95(t, j) << '\n';
    }
  }
}

void write_point_estimates_csv(const std::string& path, const Matrix& estimates,
                               const std::vector<std::string>& route_names) {
  const auto names = names_or_default(route_names, estimates.cols());
  auto out = open_output(path);
  out << "t,route,mean,median,q05,q95\n";
  for (Index t = 0; t < estimates.rows(); ++t) {
    for (Index j = 0; j < estimates.cols(); ++j) {
      const double v = estimates(t, j);
      out << t + 1 << ',' << names[static_cast<std::size_t>(j)] << ',' << v << ',' << v << ',' << v << ',' << v
          << '\n';
    }
  }
}

void write_diagnostics_csv(const std::string& path, const PosteriorSummary& summary) {
  auto out = open_output(path);
  out << "t,ess,lambda_accept,phi_accept,x_accept,restarts\n";
  for (std::size_t t = 0; t < summary.diagnostics.size(); ++t) {
    const auto& d = summary.diagnostics[t];
    out << t + 1 << ',' << d.ess << ',' << d.lambda_accept << ',' << d.phi_accept << ',' << d.x_accept << ','
        << d.restarts << '\n';
  }
}

namespace {

constexpr char kDumpMagic[8] = {'T', 'O', 'M', 'O', 'P', 'D', '0', '1'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("particle dump: truncated file");
  return value;
}

}  // namespace

ParticleDumpWriter::ParticleDumpWriter(const std::string& path, std::uint64_t epochs, std::uint64_t particles,
                                       std::uint64_t routes)
    : out_(path, std::ios::binary), particles_(particles), routes_(routes) {
  if (!out_) throw ValidationError("cannot open " + path + " for writing");
  out_.write(kDumpMagic, sizeof(kDumpMagic));
  put(out_, epochs);
  put(out_, particles);
  put(out_, routes);
}

void ParticleDumpWriter::write_epoch(std::uint64_t epoch, const std::vector<Particle>& particles) {
  if (particles.size() != particles_) throw ShapeMismatch("particle dump: particle count changed");
  put(out_, epoch);
  for (const auto& p : particles) {
    if (static_cast<std::uint64_t>(p.lambda.size()) != routes_ || static_cast<std::uint64_t>(p.x.size()) != routes_) {
      throw ShapeMismatch("particle dump: route count changed");
    }
    put(out_, p.log_weight);
    put(out_, p.phi);
    out_.write(reinterpret_cast<const char*>(p.lambda.data()), static_cast<std::streamsize>(routes_ * sizeof(double)));
    out_.write(reinterpret_cast<const char*>(p.x.data()), static_cast<std::streamsize>(routes_ * sizeof(double)));
  }
  if (!out_) throw ValidationError("particle dump: write failed");
}

ParticleDump read_particle_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDumpMagic, sizeof(magic)) != 0) {
    throw ValidationError("particle dump: bad magic in " + path);
  }
  ParticleDump dump;
  dump.epochs = get<std::uint64_t>(in);
  dump.particles = get<std::uint64_t>(in);
  dump.routes = get<std::uint64_t>(in);
  const auto n = static_cast<Index>(dump.routes);
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto epoch = get<std::uint64_t>(in);
    if (epoch != dump.frames.size()) throw ValidationError("particle dump: epochs out of order");
    std::vector<Particle> frame(dump.particles);
    for (auto& p : frame) {
      p.log_weight = get<double>(in);
      p.phi = get<double>(in);
      p.lambda.resize(n);
      p.x.resize(n);
      in.read(reinterpret_cast<char*>(p.lambda.data()), static_cast<std::streamsize>(dump.routes * sizeof(double)));
      in.read(reinterpret_cast<char*>(p.x.data()), static_cast<std::streamsize>(dump.routes * sizeof(double)));
      if (!in) throw ValidationError("particle dump: truncated file");
    }
    dump.frames.push_back(std::move(frame));
  }
  return dump;
}

}  // namespace tomo
