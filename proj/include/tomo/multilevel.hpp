#pragma once

#include "tomo/calibrate.hpp"
#include "tomo/common.hpp"
#include "tomo/network.hpp"
#include "tomo/polytope.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tomo {

// ---------------------------------------------------------------------------
// Truncated normal on (0, inf)

/// log Phi(z), accurate far into the lower tail.
double log_normal_cdf(double z);

/// Log density of N(mean, var) truncated to (0, inf); -inf for x < 0.
double truncnorm_logpdf(double x, double mean, double var);

/// One draw from N(mean, var) truncated to (0, inf).
double truncnorm_draw(double mean, double var, Rng& rng);

// ---------------------------------------------------------------------------
// Generative model

struct MultilevelSimulation {
  Matrix lambda;  ///< T x n
  Matrix x;       ///< T x n
  Matrix y;       ///< T x m
  Vector phi;     ///< T
};

/// Forward simulation of
///   log lambda_t = rho log lambda_{t-1} + N(theta1_t, theta2_t)
///   x_t | lambda_t, phi_t ~ TruncN(lambda_t, lambda_t^tau (exp(phi_t) - 1))
///   y_t = A x_t
/// starting from lambda0 at time 0. phi_t ~ Gamma(alpha, beta_t / alpha)
/// unless phi_fixed is given.
MultilevelSimulation simulate(const PriorSchedule& priors, std::optional<double> phi_fixed, const Vector& lambda0,
                              std::size_t epochs, const Matrix& a, Rng& rng);

// ---------------------------------------------------------------------------
// SIRM particle filter

enum class Resampling { systematic, multinomial };

struct FilterConfig {
  std::size_t n_particles = 1000;
  std::size_t n_move = 10;
  /// Random-directions steps between consecutive proposal draws of x.
  std::size_t rda_steps_per_draw = 50;
  /// Random-directions steps on x in each move sweep.
  std::size_t rda_steps_per_move = 5;
  /// Independent proposal chains per epoch; fixed so results do not depend on the thread count.
  std::size_t proposal_chains = 8;
  Resampling resampling = Resampling::systematic;
  /// Epochs with ESS below this value are flagged in the diagnostics.
  double ess_threshold = 0.0;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  /// Mean of the log-normal prior on lambda_0; defaults to log of the IPFP fit of y_1.
  std::optional<Vector> initial_log_lambda;
  double initial_log_sd = 1.0;
  double phi_step_sd = 0.25;
  /// Epoch restarts (each doubling the proposal steps) before DegenerateEnsemble.
  std::size_t max_restarts = 2;

  void validate() const;
};

struct Particle {
  Vector lambda;
  double phi = 0.0;
  Vector x;
  double log_weight = 0.0;
};

struct EpochDiagnostics {
  double ess = 0.0;
  double lambda_accept = 0.0;
  double phi_accept = 0.0;
  double x_accept = 0.0;
  std::size_t restarts = 0;
  bool low_ess = false;
};

struct PosteriorSummary {
  Matrix mean;    ///< T x n
  Matrix median;  ///< T x n
  Matrix q05;     ///< T x n
  Matrix q95;     ///< T x n
  Vector ess;     ///< T, before resampling
  std::vector<EpochDiagnostics> diagnostics;
};

/// Called after the move step of every epoch with the retained particles.
using EpochObserver = std::function<void(std::size_t epoch, const Polytope& polytope,
                                         const std::vector<Particle>& particles)>;

/// Sample-importance-resample-move filter over the epochs of y (T x m).
PosteriorSummary sirm_filter(const Matrix& y, std::shared_ptr<const RoutingMatrix> routing,
                             const PriorSchedule& priors, const FilterConfig& config,
                             const EpochObserver& observer = {});

/// (sum w)^2 / sum w^2.
double ess(const Vector& weights);
/// ESS of exp(log_weights), computed without overflow.
double ess_from_log_weights(const Vector& log_weights);

/// Ancestor indices for normalised weights.
std::vector<std::size_t> resample(const Vector& weights, Resampling scheme, Rng& rng);

// ---------------------------------------------------------------------------
// Output

/// Columns t, route, mean, median, q05, q95.
void write_estimates_csv(const std::string& path, const PosteriorSummary& summary,
                         const std::vector<std::string>& route_names);
/// Point estimates in the same schema (all four columns equal).
void write_point_estimates_csv(const std::string& path, const Matrix& estimates,
                               const std::vector<std::string>& route_names);
/// Columns t, ess, lambda_accept, phi_accept, x_accept, restarts.
void write_diagnostics_csv(const std::string& path, const PosteriorSummary& summary);

/// Binary dump of the retained particles of every epoch; layout in docs/particle_dump.md.
class ParticleDumpWriter {
 public:
  ParticleDumpWriter(const std::string& path, std::uint64_t epochs, std::uint64_t particles, std::uint64_t routes);
  void write_epoch(std::uint64_t epoch, const std::vector<Particle>& particles);

 private:
  std::ofstream out_;
  std::uint64_t particles_;
  std::uint64_t routes_;
};

struct ParticleDump {
  std::uint64_t epochs = 0;
  std::uint64_t particles = 0;
  std::uint64_t routes = 0;
  /// [epoch][particle]
  std::vector<std::vector<Particle>> frames;
};

ParticleDump read_particle_dump(const std::string& path);

}  // namespace tomo
