#pragma once

#include "tomo/common.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tomo {

/// Gaussian autoregressive state-space model
///   x_t = rho x_{t-1} + lambda + e_t,   e_t ~ N(0, phi diag(lambda)^tau)
///   y_t = A x_t + eps_t,                eps_t ~ N(0, sigma2 I)
/// started from its stationary distribution.
struct SsmParams {
  Vector lambda;
  double phi = 1.0;
  double rho = 0.1;
  double sigma2 = 0.01;
  double tau = 2.0;

  /// Throws ValidationError when an invariant fails.
  void validate() const;
  /// Stationary mean lambda / (1 - rho).
  Vector stationary_mean() const;
  /// diag(lambda)^tau as a vector.
  Vector scale_diag() const;
};

struct SsmOptions {
  double rho = 0.1;
  double sigma2 = 0.01;
  double tau = 2.0;
  std::size_t window = 23;
  /// lambda is floored at lambda_floor_factor * mean(y).
  double lambda_floor_factor = 1e-6;
  int max_iterations = 500;
  double function_tolerance = 1e-10;
  double gradient_tolerance = 1e-9;
  /// Fit windows concurrently with cold starts instead of warm-starting.
  bool parallel = false;
  std::size_t threads = 0;
};

/// Exact Gaussian log-likelihood of a window via the Kalman filter
/// prediction-error decomposition on the centred system. Throws
/// NonFiniteLikelihood when an innovation covariance is not positive definite.
double kalman_marginal_loglik(const SsmParams& params, const Matrix& y_window, const Matrix& a);

/// Gradient of the window log-likelihood with respect to (log lambda, log phi).
struct LoglikGradient {
  double loglik = 0.0;
  Vector d_log_lambda;
  double d_log_phi = 0.0;
};

/// Same likelihood as kalman_marginal_loglik, evaluated through the
/// eigendecompositions of the temporal and spatial covariance factors, with
/// analytic gradient.
LoglikGradient spectral_loglik(const SsmParams& params, const Matrix& y_window, const Matrix& a,
                               bool with_gradient = true);

/// Smoothed moments of x over one window.
struct SmoothedWindow {
  Matrix mean;      ///< w x n
  Matrix variance;  ///< w x n, diagonal of the smoothed covariance
};

/// Rauch-Tung-Striebel smoother at fixed parameters.
SmoothedWindow kalman_smooth(const SsmParams& params, const Matrix& y_window, const Matrix& a);

/// Smoothed mean and variance of x at a single position of the window,
/// computed in closed form from the joint Gaussian.
void smooth_at(const SsmParams& params, const Matrix& y_window, const Matrix& a, std::size_t position,
               Vector& mean, Vector& variance);

struct WindowFit {
  Vector lambda;
  double phi = 0.0;
  double loglik = 0.0;
  bool converged = false;
  /// Some lambda ended within a factor 1.01 of the floor (or the window was all zero).
  bool at_lower_bound = false;
  int iterations = 0;
};

/// Initial lambda for a window: (1 - rho) times the IPFP fit of the window
/// mean counters from a uniform seed (the gravity estimate on star networks).
Vector initial_lambda(const Matrix& y_window, const Matrix& a, double rho);

/// Maximum marginal likelihood over (log lambda, log phi) with L-BFGS.
/// Throws OptFailed carrying the best parameters found when the optimizer fails.
WindowFit fit_window(const Matrix& y_window, const Matrix& a, const SsmOptions& options,
                     const std::optional<WindowFit>& warm_start = std::nullopt);

struct SsmFit {
  Matrix x_hat;    ///< T x n smoothed estimates
  Matrix v_hat;    ///< T x n smoothed variances
  Vector phi_hat;  ///< T, window estimate assigned to the window centre
  std::size_t window = 0;
  Vector loglik;       ///< one per window
  Matrix lambda_hat;   ///< windows x n
  Vector window_phi;   ///< one per window
  std::vector<std::size_t> gaps;         ///< windows whose fit failed
  std::vector<std::size_t> lower_bound;  ///< windows flagged at the lambda floor
  std::size_t identifiable = 1;          ///< 0 when check_identifiability(A) failed
};

/// Fits every window of width `options.window` (stride 1). Window k covers
/// epochs [k, k + window) and is assigned to its centre; epochs in the first
/// and last half window take the smoothed state of the nearest complete
/// window at their own position. Failed windows are filled by linear
/// interpolation of log x_hat between neighbouring successful windows.
SsmFit fit_sliding(const Matrix& y, const Matrix& a, const SsmOptions& options = {});

/// Columns t, route, x_hat, v_hat, phi_hat (t is 1-based).
void write_ssm_fit_csv(const std::string& path, const SsmFit& fit, const std::vector<std::string>& route_names);

struct SsmSimulation {
  Matrix x;  ///< T x n
  Matrix y;  ///< T x m
};

/// Draws a stationary path of the model.
SsmSimulation simulate_ssm(const SsmParams& params, const Matrix& a, std::size_t epochs, Rng& rng);

}  // namespace tomo
