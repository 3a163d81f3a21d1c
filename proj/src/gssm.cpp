#include "tomo/gssm.hpp"

#include "tomo/errors.hpp"
#include "tomo/io.hpp"
#include "tomo/network.hpp"
#include "tomo/parallel.hpp"
#include "tomo/polytope.hpp"

#include <ceres/ceres.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace tomo {

namespace {

constexpr double log_two_pi = 1.8378770664093454836;

void check_window(const Matrix& y, const Matrix& a) {
  if (y.rows() < 2) throw ValidationError("ssm window needs at least 2 epochs");
  if (y.cols() != a.rows()) throw ShapeMismatch("ssm: y has " + std::to_string(y.cols()) + " columns, A has " +
                                                std::to_string(a.rows()) + " rows");
}

Matrix temporal_kernel(Index w, double rho) {
  Matrix k(w, w);
  const double scale = 1.0 / (1.0 - rho * rho);
  for (Index t = 0; t < w; ++t) {
    for (Index s = 0; s < w; ++s) k(t, s) = std::pow(rho, static_cast<double>(std::abs(t - s))) * scale;
  }
  return k;
}

// Precomputed temporal factors shared by every evaluation on one window.
class SpectralWindow {
 public:
  SpectralWindow(const Matrix& y, const Matrix& a, double rho, double sigma2, double tau)
      : a_(a), rho_(rho), sigma2_(sigma2), tau_(tau) {
    k_ = temporal_kernel(y.rows(), rho);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(k_);
    u_ = eig.eigenvectors();
    kappa_ = eig.eigenvalues();
    uty_ = u_.transpose() * y;
    ut1_ = u_.transpose() * Vector::Ones(y.rows());
  }

  Index epochs() const { return k_.rows(); }

  // Fills the per-parameter state; returns false when the covariance is not usable.
  bool prepare(const Vector& lambda, double phi) {
    d_ = lambda.array().pow(tau_).matrix();
    m_ = phi * a_ * d_.asDiagonal() * a_.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m_);
    if (eig.info() != Eigen::Success) return false;
    v_ = eig.eigenvectors();
    gamma_ = eig.eigenvalues().cwiseMax(0.0);
    const Vector mean = a_ * lambda / (1.0 - rho_);
    r_tilde_ = (uty_ - ut1_ * mean.transpose()) * v_;
    e_ = (kappa_ * gamma_.transpose()).array() + sigma2_;
    return e_.allFinite() && r_tilde_.allFinite() && (e_.array() > 0.0).all();
  }

  double loglik() const {
    const double w = static_cast<double>(e_.rows());
    const double m = static_cast<double>(e_.cols());
    return -0.5 * (e_.array().log().sum() + (r_tilde_.array().square() / e_.array()).sum()) -
           0.5 * w * m * log_two_pi;
  }

  void gradient(const Vector& lambda, double phi, Vector& d_log_lambda, double& d_log_phi) const {
    const Matrix alpha = u_ * (r_tilde_.array() / e_.array()).matrix() * v_.transpose();  // w x m
    const Matrix g = v_.transpose() * a_;                                                  // m x n
    const Vector c = (kappa_.asDiagonal() * e_.cwiseInverse()).colwise().sum().transpose();
    const Matrix h = alpha * a_;  // w x n
    const Matrix kh = k_ * h;
    const Vector mean_term = a_.transpose() * alpha.colwise().sum().transpose();
    const Index n = a_.cols();
    d_log_lambda.resize(n);
    for (Index j = 0; j < n; ++j) {
      const double scale = phi * tau_ * d_[j];
      const double trace = (c.array() * g.col(j).array().square()).sum();
      const double quad = h.col(j).dot(kh.col(j));
      d_log_lambda[j] = -0.5 * scale * trace + 0.5 * scale * quad + lambda[j] / (1.0 - rho_) * mean_term[j];
    }
    const double trace_phi = ((kappa_ * gamma_.transpose()).array() / e_.array()).sum();
    const Matrix q = alpha.transpose() * k_ * alpha;
    d_log_phi = -0.5 * trace_phi + 0.5 * (q.array() * m_.array()).sum();
  }

  void smooth(const Vector& lambda, double phi, Index position, Vector& mean, Vector& variance) const {
    const Matrix alpha = u_ * (r_tilde_.array() / e_.array()).matrix() * v_.transpose();
    const Vector k_col = k_.col(position);
    const Vector weights = kappa_.cwiseProduct(u_.row(position).transpose()).array().square().matrix();  // w
    const Matrix g = v_.transpose() * a_;  // m x n
    const Vector per_i = (weights.asDiagonal() * e_.cwiseInverse()).colwise().sum().transpose();  // m
    const Vector cross = a_.transpose() * (alpha.transpose() * k_col);
    const Index n = a_.cols();
    mean.resize(n);
    variance.resize(n);
    for (Index j = 0; j < n; ++j) {
      const double s = phi * d_[j];
      mean[j] = lambda[j] / (1.0 - rho_) + s * cross[j];
      const double reduction = s * s * (per_i.array() * g.col(j).array().square()).sum();
      variance[j] = std::max(s * k_(position, position) - reduction, 0.0);
    }
  }

 private:
  const Matrix& a_;
  double rho_;
  double sigma2_;
  double tau_;
  Matrix k_;
  Matrix u_;
  Vector kappa_;
  Matrix uty_;
  Vector ut1_;
  Vector d_;
  Matrix m_;
  Matrix v_;
  Vector gamma_;
  Matrix r_tilde_;
  Matrix e_;
};

// Negative mean log-likelihood in the floored log parametrisation
//   lambda = floor + exp(u), phi = phi_floor + exp(v).
class WindowObjective final : public ceres::FirstOrderFunction {
 public:
  WindowObjective(SpectralWindow& window, std::size_t parameters, double floor, double phi_floor, double scale)
      : window_(window), floor_(floor), phi_floor_(phi_floor), scale_(scale), parameters_(parameters) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Index n = NumParameters() - 1;
    Vector lambda(n);
    for (Index j = 0; j < n; ++j) lambda[j] = floor_ + std::exp(parameters[j]);
    const double phi = phi_floor_ + std::exp(parameters[n]);
    if (!lambda.allFinite() || !std::isfinite(phi)) return false;
    if (!window_.prepare(lambda, phi)) return false;
    const double ll = window_.loglik();
    if (!std::isfinite(ll)) return false;
    *cost = -ll / scale_;
    if (gradient != nullptr) {
      Vector d_lambda;
      double d_phi = 0.0;
      window_.gradient(lambda, phi, d_lambda, d_phi);
      for (Index j = 0; j < n; ++j) {
        gradient[j] = -d_lambda[j] / lambda[j] * std::exp(parameters[j]) / scale_;
      }
      gradient[n] = -d_phi / phi * std::exp(parameters[n]) / scale_;
      for (Index j = 0; j <= n; ++j) {
        if (!std::isfinite(gradient[j])) return false;
      }
    }
    return true;
  }

  int NumParameters() const override { return static_cast<int>(parameters_); }

 private:
  SpectralWindow& window_;
  double floor_;
  double phi_floor_;
  double scale_;
  std::size_t parameters_;
};

double lambda_floor(const Matrix& y, const SsmOptions& options) {
  const double mean = y.mean();
  return std::max(options.lambda_floor_factor * std::max(mean, 0.0), 1e-12);
}

constexpr double phi_floor = 1e-10;

}  // namespace

void SsmParams::validate() const {
  if (lambda.size() == 0 || !(lambda.array() > 0.0).all()) throw ValidationError("ssm: lambda must be positive");
  if (!(phi > 0.0)) throw ValidationError("ssm: phi must be positive");
  if (!(std::abs(rho) < 1.0)) throw ValidationError("ssm: |rho| must be below 1");
  if (!(sigma2 > 0.0)) throw ValidationError("ssm: sigma2 must be positive");
  if (!(tau > 0.0)) throw ValidationError("ssm: tau must be positive");
}

Vector SsmParams::stationary_mean() const { return lambda / (1.0 - rho); }

Vector SsmParams::scale_diag() const { return lambda.array().pow(tau).matrix(); }

double kalman_marginal_loglik(const SsmParams& params, const Matrix& y_window, const Matrix& a) {
  params.validate();
  check_window(y_window, a);
  if (params.lambda.size() != a.cols()) throw ShapeMismatch("ssm: lambda length does not match A");
  const Index n = a.cols();
  const Index m = a.rows();
  const Vector mean = params.stationary_mean();
  const Vector ay = a * mean;
  const Vector noise = params.phi * params.scale_diag();

  Vector z = Vector::Zero(n);
  Matrix p = (noise / (1.0 - params.rho * params.rho)).asDiagonal();
  double ll = 0.0;
  for (Index t = 0; t < y_window.rows(); ++t) {
    const Vector r = y_window.row(t).transpose() - ay - a * z;
    const Matrix pa = p * a.transpose();
    Matrix s = a * pa;
    s.diagonal().array() += params.sigma2;
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
      throw NonFiniteLikelihood("innovation covariance is not positive definite at epoch " + std::to_string(t));
    }
    const Vector sr = llt.solve(r);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    ll += -0.5 * (log_det + r.dot(sr) + static_cast<double>(m) * log_two_pi);
    const Matrix gain = llt.solve(pa.transpose()).transpose();  // n x m
    z += gain * r;
    p -= gain * pa.transpose();
    p = 0.5 * (p + p.transpose());
    z *= params.rho;
    p *= params.rho * params.rho;
    p.diagonal() += noise;
  }
  if (!std::isfinite(ll)) throw NonFiniteLikelihood("log-likelihood is not finite");
  return ll;
}

LoglikGradient spectral_loglik(const SsmParams& params, const Matrix& y_window, const Matrix& a,
                               bool with_gradient) {
  params.validate();
  check_window(y_window, a);
  if (params.lambda.size() != a.cols()) throw ShapeMismatch("ssm: lambda length does not match A");
  SpectralWindow window(y_window, a, params.rho, params.sigma2, params.tau);
  if (!window.prepare(params.lambda, params.phi)) throw NonFiniteLikelihood("covariance is not usable");
  LoglikGradient out;
  out.loglik = window.loglik();
  if (!std::isfinite(out.loglik)) throw NonFiniteLikelihood("log-likelihood is not finite");
  if (with_gradient) window.gradient(params.lambda, params.phi, out.d_log_lambda, out.d_log_phi);
  return out;
}

SmoothedWindow kalman_smooth(const SsmParams& params, const Matrix& y_window, const Matrix& a) {
  params.validate();
  check_window(y_window, a);
  const Index n = a.cols();
  const Index w = y_window.rows();
  const Vector mean = params.stationary_mean();
  const Vector ay = a * mean;
  const Vector noise = params.phi * params.scale_diag();
  const double rho = params.rho;

  std::vector<Vector> z_pred(static_cast<std::size_t>(w));
  std::vector<Matrix> p_pred(static_cast<std::size_t>(w));
  std::vector<Vector> z_filt(static_cast<std::size_t>(w));
  std::vector<Matrix> p_filt(static_cast<std::size_t>(w));
  Vector z = Vector::Zero(n);
  Matrix p = (noise / (1.0 - rho * rho)).asDiagonal();
  for (Index t = 0; t < w; ++t) {
    z_pred[t] = z;
    p_pred[t] = p;
    const Vector r = y_window.row(t).transpose() - ay - a * z;
    const Matrix pa = p * a.transpose();
    Matrix s = a * pa;
    s.diagonal().array() += params.sigma2;
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw NonFiniteLikelihood("innovation covariance is not positive definite");
    const Matrix gain = llt.solve(pa.transpose()).transpose();
    z += gain * r;
    p -= gain * pa.transpose();
    p = 0.5 * (p + p.transpose());
    z_filt[t] = z;
    p_filt[t] = p;
    z *= rho;
    p *= rho * rho;
    p.diagonal() += noise;
  }

  SmoothedWindow out;
  out.mean.resize(w, n);
  out.variance.resize(w, n);
  Vector zs = z_filt[w - 1];
  Matrix ps = p_filt[w - 1];
  out.mean.row(w - 1) = (zs + mean).transpose();
  out.variance.row(w - 1) = ps.diagonal().transpose();
  for (Index t = w - 2; t >= 0; --t) {
    Eigen::LLT<Matrix> llt(p_pred[t + 1]);
    const Matrix j = llt.solve(rho * p_filt[t]).transpose();
    zs = z_filt[t] + j * (zs - z_pred[t + 1]);
    ps = p_filt[t] + j * (ps - p_pred[t + 1]) * j.transpose();
    out.mean.row(t) = (zs + mean).transpose();
    out.variance.row(t) = ps.diagonal().cwiseMax(0.0).transpose();
  }
  return out;
}

void smooth_at(const SsmParams& params, const Matrix& y_window, const Matrix& a, std::size_t position,
               Vector& mean, Vector& variance) {
  params.validate();
  check_window(y_window, a);
  if (static_cast<Index>(position) >= y_window.rows()) throw ValidationError("smooth_at: position outside window");
  SpectralWindow window(y_window, a, params.rho, params.sigma2, params.tau);
  if (!window.prepare(params.lambda, params.phi)) throw NonFiniteLikelihood("covariance is not usable");
  window.smooth(params.lambda, params.phi, static_cast<Index>(position), mean, variance);
}

Vector initial_lambda(const Matrix& y_window, const Matrix& a, double rho) {
  const Vector ybar = y_window.colwise().mean().transpose().cwiseMax(0.0);
  IpfpOptions options;
  options.max_iter = 500;
  options.tol = 1e-8;
  const auto fit = ipfp(a, ybar, Vector::Ones(a.cols()), options);
  return (1.0 - rho) * fit.x;
}

WindowFit fit_window(const Matrix& y_window, const Matrix& a, const SsmOptions& options,
                     const std::optional<WindowFit>& warm_start) {
  check_window(y_window, a);
  const Index n = a.cols();
  const double floor = lambda_floor(y_window, options);
  WindowFit out;

  if (!(y_window.array() != 0.0).any()) {
    out.lambda = Vector::Constant(n, floor);
    out.phi = warm_start ? warm_start->phi : 1.0;
    out.at_lower_bound = true;
    out.loglik = -std::numeric_limits<double>::infinity();
    return out;
  }

  Vector lambda0;
  double phi0 = 0.0;
  if (warm_start && warm_start->lambda.size() == n) {
    lambda0 = warm_start->lambda;
    phi0 = warm_start->phi;
  } else {
    lambda0 = initial_lambda(y_window, a, options.rho);
    const Matrix centred = y_window.rowwise() - y_window.colwise().mean();
    const double sample_trace = centred.squaredNorm() / static_cast<double>(y_window.rows() - 1);
    const Vector d = lambda0.cwiseMax(floor).array().pow(options.tau).matrix();
    const double model_trace = (a * d.asDiagonal() * a.transpose()).trace() / (1.0 - options.rho * options.rho);
    const double excess = sample_trace - static_cast<double>(a.rows()) * options.sigma2;
    phi0 = (excess > 0.0 && model_trace > 0.0) ? excess / model_trace : 0.1;
  }

  std::vector<double> parameters(static_cast<std::size_t>(n) + 1);
  for (Index j = 0; j < n; ++j) parameters[j] = std::log(std::max(lambda0[j] - floor, floor));
  parameters[n] = std::log(std::max(phi0 - phi_floor, phi_floor));

  SpectralWindow window(y_window, a, options.rho, options.sigma2, options.tau);
  const double scale = static_cast<double>(y_window.rows() * a.rows());
  ceres::GradientProblem problem(new WindowObjective(window, parameters.size(), floor, phi_floor, scale));
  ceres::GradientProblemSolver::Options solver_options;
  solver_options.line_search_direction_type = ceres::LBFGS;
  solver_options.max_num_iterations = options.max_iterations;
  solver_options.function_tolerance = options.function_tolerance;
  solver_options.gradient_tolerance = options.gradient_tolerance;
  solver_options.parameter_tolerance = 1e-12;
  solver_options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  double initial_cost = 0.0;
  if (!problem.Evaluate(parameters.data(), &initial_cost, nullptr)) {
    throw OptFailed("ssm: likelihood is not finite at the starting point",
                    std::vector<double>(parameters.begin(), parameters.end()));
  }
  ceres::Solve(solver_options, problem, parameters.data(), &summary);

  out.lambda.resize(n);
  for (Index j = 0; j < n; ++j) out.lambda[j] = floor + std::exp(parameters[j]);
  out.phi = phi_floor + std::exp(parameters[n]);
  out.loglik = -summary.final_cost * scale;
  out.iterations = static_cast<int>(summary.iterations.size());
  out.converged = summary.termination_type == ceres::CONVERGENCE;
  out.at_lower_bound = (out.lambda.array() < 1.01 * floor).any();
  if (!std::isfinite(out.loglik) || !out.lambda.allFinite() || !std::isfinite(out.phi)) {
    throw OptFailed("ssm: optimizer ended at a non-finite point",
                    std::vector<double>(parameters.begin(), parameters.end()));
  }
  return out;
}

SsmFit fit_sliding(const Matrix& y, const Matrix& a, const SsmOptions& options) {
  const auto w = static_cast<Index>(options.window);
  if (w < 2 || w % 2 == 0) throw ValidationError("ssm window must be odd and at least 3");
  if (y.cols() != a.rows()) throw ShapeMismatch("fit_sliding: y columns do not match A rows");
  const Index t_count = y.rows();
  if (t_count < w) throw ValidationError("fit_sliding: series shorter than the window");
  const Index n = a.cols();
  const Index windows = t_count - w + 1;
  const Index half = w / 2;

  SsmFit fit;
  fit.window = options.window;
  fit.identifiable = check_identifiability(a) ? 1 : 0;
  fit.x_hat = Matrix::Zero(t_count, n);
  fit.v_hat = Matrix::Zero(t_count, n);
  fit.phi_hat = Vector::Zero(t_count);
  fit.loglik = Vector::Constant(windows, std::numeric_limits<double>::quiet_NaN());
  fit.lambda_hat = Matrix::Zero(windows, n);
  fit.window_phi = Vector::Zero(windows);

  std::vector<std::optional<WindowFit>> fits(static_cast<std::size_t>(windows));
  auto fit_one = [&](Index k, const std::optional<WindowFit>& warm) {
    try {
      fits[k] = fit_window(y.middleRows(k, w), a, options, warm);
    } catch (const OptFailed&) {
      fits[k].reset();
    }
  };
  if (options.parallel) {
    const std::size_t threads = options.threads == 0 ? default_threads() : options.threads;
    parallel_for(static_cast<std::size_t>(windows), threads,
                 [&](std::size_t k) { fit_one(static_cast<Index>(k), std::nullopt); });
  } else {
    // A warm start can stay pinned at the lambda floor after a sparse
    // window; each window is also fitted cold and the better optimum kept.
    std::optional<WindowFit> warm;
    for (Index k = 0; k < windows; ++k) {
      if (warm) {
        fit_one(k, warm);
        const double warm_loglik = fits[k] ? fits[k]->loglik : -std::numeric_limits<double>::infinity();
        try {
          WindowFit cold = fit_window(y.middleRows(k, w), a, options);
          if (cold.loglik > warm_loglik) fits[k] = std::move(cold);
        } catch (const OptFailed&) {
        }
      } else {
        fit_one(k, std::nullopt);
      }
      if (fits[k] && fits[k]->loglik > -std::numeric_limits<double>::infinity()) warm = fits[k];
    }
  }

  // Assign smoothed states: window k owns its centre, the first and last
  // windows also own the leading and trailing half windows.
  std::vector<char> filled(static_cast<std::size_t>(t_count), 0);
  for (Index k = 0; k < windows; ++k) {
    if (!fits[k]) {
      fit.gaps.push_back(static_cast<std::size_t>(k));
      continue;
    }
    const WindowFit& wf = *fits[k];
    fit.loglik[k] = wf.loglik;
    fit.lambda_hat.row(k) = wf.lambda.transpose();
    fit.window_phi[k] = wf.phi;
    if (wf.at_lower_bound) fit.lower_bound.push_back(static_cast<std::size_t>(k));

    std::vector<Index> positions{half};
    if (k == 0) {
      for (Index p = 0; p < half; ++p) positions.push_back(p);
    }
    if (k == windows - 1) {
      for (Index p = half + 1; p < w; ++p) positions.push_back(p);
    }
    const Matrix y_window = y.middleRows(k, w);
    SpectralWindow window(y_window, a, options.rho, options.sigma2, options.tau);
    if (!window.prepare(wf.lambda, wf.phi)) {
      fit.gaps.push_back(static_cast<std::size_t>(k));
      continue;
    }
    for (Index p : positions) {
      Vector mean;
      Vector variance;
      window.smooth(wf.lambda, wf.phi, p, mean, variance);
      const Index t = k + p;
      fit.x_hat.row(t) = mean.transpose();
      fit.v_hat.row(t) = variance.transpose();
      fit.phi_hat[t] = wf.phi;
      filled[t] = 1;
    }
  }
  std::sort(fit.gaps.begin(), fit.gaps.end());

  if (std::none_of(filled.begin(), filled.end(), [](char f) { return f != 0; })) {
    throw OptFailed("ssm: every window fit failed", {});
  }
  // Gap filling: linear interpolation of log x_hat (and log v_hat, phi).
  const double floor = lambda_floor(y, options);
  for (Index t = 0; t < t_count; ++t) {
    if (filled[t]) continue;
    Index lo = t - 1;
    while (lo >= 0 && !filled[lo]) --lo;
    Index hi = t + 1;
    while (hi < t_count && !filled[hi]) ++hi;
    if (lo < 0) lo = hi;
    if (hi >= t_count) hi = lo;
    const double frac = hi == lo ? 0.0 : static_cast<double>(t - lo) / static_cast<double>(hi - lo);
    auto blend_log = [&](const Matrix& m, Index j) {
      const double a0 = std::log(std::max(m(lo, j), floor));
      const double a1 = std::log(std::max(m(hi, j), floor));
      return std::exp((1.0 - frac) * a0 + frac * a1);
    };
    for (Index j = 0; j < n; ++j) {
      fit.x_hat(t, j) = blend_log(fit.x_hat, j);
      fit.v_hat(t, j) = blend_log(fit.v_hat, j);
    }
    fit.phi_hat[t] = (1.0 - frac) * fit.phi_hat[lo] + frac * fit.phi_hat[hi];
  }
  return fit;
}

void write_ssm_fit_csv(const std::string& path, const SsmFit& fit, const std::vector<std::string>& route_names) {
  auto out = open_output(path);
  out << "t,route,x_hat,v_hat,phi_hat\n";
  for (Index t = 0; t < fit.x_hat.rows(); ++t) {
    for (Index j = 0; j < fit.x_hat.cols(); ++j) {
      const std::string name =
          static_cast<std::size_t>(j) < route_names.size() ? route_names[static_cast<std::size_t>(j)]
                                                            : std::to_string(j);
      out << t + 1 << ',' << name << ',' << fit.x_hat(t, j) << ',' << fit.v_hat(t, j) << ',' << fit.phi_hat[t]
          << '\n';
    }
  }
}

SsmSimulation simulate_ssm(const SsmParams& params, const Matrix& a, std::size_t epochs, Rng& rng) {
  params.validate();
  if (params.lambda.size() != a.cols()) throw ShapeMismatch("simulate_ssm: lambda length does not match A");
  const Index n = a.cols();
  const auto t_count = static_cast<Index>(epochs);
  std::normal_distribution<double> normal;
  const Vector sd = (params.phi * params.scale_diag()).cwiseSqrt();
  const double noise_sd = std::sqrt(params.sigma2);
  const double rho = params.rho;

  SsmSimulation out;
  out.x.resize(t_count, n);
  out.y.resize(t_count, a.rows());
  Vector x(n);
  const Vector mean = params.stationary_mean();
  const double stationary_sd = 1.0 / std::sqrt(1.0 - rho * rho);
  for (Index j = 0; j < n; ++j) x[j] = mean[j] + stationary_sd * sd[j] * normal(rng);
  for (Index t = 0; t < t_count; ++t) {
    for (Index j = 0; j < n; ++j) x[j] = rho * x[j] + params.lambda[j] + sd[j] * normal(rng);
    out.x.row(t) = x.transpose();
    Vector y = a * x;
    for (Index i = 0; i < y.size(); ++i) y[i] += noise_sd * normal(rng);
    out.y.row(t) = y.transpose();
  }
  return out;
}

}  // namespace tomo
