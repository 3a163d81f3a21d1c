#pragma once

#include "tomo/common.hpp"
#include "tomo/polytope.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tomo {

/// Prior schedules of the multilevel model.
///   log lambda_t = rho log lambda_{t-1} + eps_t,  eps_t ~ N(theta1_t, theta2_t)
///   phi_t ~ Gamma(alpha, beta_t / alpha)
struct PriorSchedule {
  Matrix theta1;  ///< T x n
  Matrix theta2;  ///< T x n, positive
  Vector beta;    ///< T, positive
  double alpha = 1.0;
  double rho = 0.9;
  double tau = 2.0;

  Index epochs() const noexcept { return theta1.rows(); }
  Index routes() const noexcept { return theta1.cols(); }
  /// Throws ValidationError when shapes disagree or a positivity invariant fails.
  void validate() const;
};

struct CorrectedSeries {
  Matrix corrected;  ///< after per-epoch IPFP, before the running median
  Matrix smoothed;   ///< running median of `corrected`, floored at `floor`
  std::vector<std::size_t> flagged;  ///< epochs where IPFP did not converge
  double floor = 0.0;
};

/// Per-epoch IPFP towards y_t from seed max(x_raw_t, floor), then a
/// componentwise running median over time (windows truncated at the ends).
/// Epochs whose IPFP did not converge are replaced by linear interpolation
/// between the nearest converged epochs before the median.
CorrectedSeries correct_and_smooth(const Matrix& x_raw, const Matrix& a, const Matrix& y,
                                   std::size_t median_window = 5, const IpfpOptions& ipfp_options = {});

/// Centred running median per column; at the ends the window is truncated.
Matrix running_median(const Matrix& x, std::size_t window);

/// theta1_t = log x_t - rho log x_{t-1} (theta1_1 = (1 - rho) log x_1),
/// theta2_t = (1 - rho^2) log(1 + v_t / x_t^2), beta_t = log(1 + phi_t), alpha = n / 2.
PriorSchedule priors_from_ssm(const Matrix& x_hat, const Matrix& v_hat, const Vector& phi_hat, double rho = 0.9,
                              double tau = 2.0);

/// theta1 as in priors_from_ssm; theta2 per route is the sample variance of
/// theta1 over time (floored); beta_t = 1.5; alpha = n / 2.
PriorSchedule priors_from_gravity(const Matrix& x_grav, double rho = 0.9, double tau = 2.0,
                                  double theta2_floor = 1e-4);

/// theta1 = 0, theta2 = log(5) / 2, beta = 1.5, alpha = n / 2.
PriorSchedule naive_priors(std::size_t routes, std::size_t epochs, double rho = 0.9, double tau = 2.0);

/// Long-format CSV (t, route, theta1, theta2).
void write_priors_csv(const std::string& path, const PriorSchedule& priors, const std::vector<std::string>& route_names);
/// JSON sidecar with alpha, rho, tau and the beta schedule.
void write_priors_sidecar(const std::string& path, const PriorSchedule& priors);

}  // namespace tomo
