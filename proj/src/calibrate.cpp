#include "tomo/calibrate.hpp"

#include "tomo/errors.hpp"
#include "tomo/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace tomo {

namespace {

constexpr double gravity_beta = 1.5;

Matrix increment_means(const Matrix& x, double rho) {
  const Matrix logs = x.array().log().matrix();
  Matrix theta1(x.rows(), x.cols());
  theta1.row(0) = (1.0 - rho) * logs.row(0);
  for (Index t = 1; t < x.rows(); ++t) theta1.row(t) = logs.row(t) - rho * logs.row(t - 1);
  return theta1;
}

}  // namespace

void PriorSchedule::validate() const {
  if (theta1.rows() != theta2.rows() || theta1.cols() != theta2.cols() || beta.size() != theta1.rows()) {
    throw ShapeMismatch("prior schedule: inconsistent shapes");
  }
  if (!theta1.allFinite()) throw ValidationError("prior schedule: theta1 is not finite");
  if (!(theta2.array() > 0.0).all() || !theta2.allFinite()) throw ValidationError("prior schedule: theta2 must be positive");
  if (!(beta.array() > 0.0).all() || !beta.allFinite()) throw ValidationError("prior schedule: beta must be positive");
  if (!(alpha > 0.0)) throw ValidationError("prior schedule: alpha must be positive");
  if (!(tau > 0.0)) throw ValidationError("prior schedule: tau must be positive");
}

Matrix running_median(const Matrix& x, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ValidationError("running median window must be odd");
  const auto half = static_cast<Index>(window / 2);
  const Index t_count = x.rows();
  Matrix out(t_count, x.cols());
  std::vector<double> buffer;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index t = 0; t < t_count; ++t) {
      const Index lo = std::max<Index>(0, t - half);
      const Index hi = std::min<Index>(t_count - 1, t + half);
      buffer.assign(x.col(j).data() + lo, x.col(j).data() + hi + 1);
      const std::size_t mid = buffer.size() / 2;
      std::nth_element(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(mid), buffer.end());
      double median = buffer[mid];
      if (buffer.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(mid)));
      }
      out(t, j) = median;
    }
  }
  return out;
}

CorrectedSeries correct_and_smooth(const Matrix& x_raw, const Matrix& a, const Matrix& y, std::size_t median_window,
                                   const IpfpOptions& ipfp_options) {
  if (median_window == 0 || median_window % 2 == 0) throw ValidationError("median window must be odd");
  if (x_raw.rows() != y.rows() || x_raw.cols() != a.cols() || y.cols() != a.rows()) {
    throw ShapeMismatch("correct_and_smooth: shapes of x_raw, A and y disagree");
  }
  const Index t_count = x_raw.rows();
  CorrectedSeries out;
  out.floor = std::max(1e-6 * std::max(y.mean(), 0.0), 1e-12);
  out.corrected.resize(t_count, a.cols());
  std::vector<char> ok(static_cast<std::size_t>(t_count), 1);
  for (Index t = 0; t < t_count; ++t) {
    const Vector seed = x_raw.row(t).transpose().cwiseMax(out.floor);
    const auto fit = ipfp(a, y.row(t).transpose(), seed, ipfp_options);
    out.corrected.row(t) = fit.x.transpose();
    if (!fit.converged) {
      ok[t] = 0;
      out.flagged.push_back(static_cast<std::size_t>(t));
    }
  }

  Matrix filled = out.corrected;
  if (!out.flagged.empty() && out.flagged.size() < static_cast<std::size_t>(t_count)) {
    for (auto ft : out.flagged) {
      const auto t = static_cast<Index>(ft);
      Index lo = t - 1;
      while (lo >= 0 && !ok[lo]) --lo;
      Index hi = t + 1;
      while (hi < t_count && !ok[hi]) ++hi;
      if (lo < 0) lo = hi;
      if (hi >= t_count) hi = lo;
      const double frac = hi == lo ? 0.0 : static_cast<double>(t - lo) / static_cast<double>(hi - lo);
      filled.row(t) = (1.0 - frac) * out.corrected.row(lo) + frac * out.corrected.row(hi);
    }
  }
  out.smoothed = running_median(filled, median_window).cwiseMax(out.floor);
  return out;
}

PriorSchedule priors_from_ssm(const Matrix& x_hat, const Matrix& v_hat, const Vector& phi_hat, double rho, double tau) {
  if (x_hat.rows() != v_hat.rows() || x_hat.cols() != v_hat.cols() || phi_hat.size() != x_hat.rows()) {
    throw ShapeMismatch("priors_from_ssm: shapes disagree");
  }
  if (x_hat.rows() == 0) throw ValidationError("priors_from_ssm: empty series");
  if (!(x_hat.array() > 0.0).all()) throw ValidationError("priors_from_ssm: x_hat must be positive");
  if (!(v_hat.array() > 0.0).all()) throw ValidationError("priors_from_ssm: v_hat must be positive");
  if (!(phi_hat.array() > 0.0).all()) throw ValidationError("priors_from_ssm: phi_hat must be positive");
  PriorSchedule p;
  p.rho = rho;
  p.tau = tau;
  p.alpha = static_cast<double>(x_hat.cols()) / 2.0;
  p.theta1 = increment_means(x_hat, rho);
  p.theta2 = (1.0 - rho * rho) * (v_hat.array() / x_hat.array().square()).log1p();
  p.beta = phi_hat.array().log1p().matrix();
  p.validate();
  return p;
}

PriorSchedule priors_from_gravity(const Matrix& x_grav, double rho, double tau, double theta2_floor) {
  if (x_grav.rows() == 0) throw ValidationError("priors_from_gravity: empty series");
  if (!(x_grav.array() > 0.0).all()) throw ValidationError("priors_from_gravity: estimates must be positive");
  PriorSchedule p;
  p.rho = rho;
  p.tau = tau;
  p.alpha = static_cast<double>(x_grav.cols()) / 2.0;
  p.theta1 = increment_means(x_grav, rho);
  p.theta2.resize(x_grav.rows(), x_grav.cols());
  const Index t_count = x_grav.rows();
  for (Index j = 0; j < x_grav.cols(); ++j) {
    double var = 0.0;
    if (t_count > 1) {
      const double mean = p.theta1.col(j).mean();
      var = (p.theta1.col(j).array() - mean).square().sum() / static_cast<double>(t_count - 1);
    }
    p.theta2.col(j).setConstant(std::max(var, theta2_floor));
  }
  p.beta = Vector::Constant(t_count, gravity_beta);
  p.validate();
  return p;
}

PriorSchedule naive_priors(std::size_t routes, std::size_t epochs, double rho, double tau) {
  PriorSchedule p;
  const auto n = static_cast<Index>(routes);
  const auto t_count = static_cast<Index>(epochs);
  p.theta1 = Matrix::Zero(t_count, n);
  p.theta2 = Matrix::Constant(t_count, n, std::log(5.0) / 2.0);
  p.beta = Vector::Constant(t_count, 1.5);
  p.alpha = static_cast<double>(routes) / 2.0;
  p.rho = rho;
  p.tau = tau;
  return p;
}

void write_priors_csv(const std::string& path, const PriorSchedule& priors, const std::vector<std::string>& route_names) {
  auto out = open_output(path);
  out << "t,route,theta1,theta2\n";
  for (Index t = 0; t < priors.epochs(); ++t) {
    for (Index j = 0; j < priors.routes(); ++j) {
      const auto k = static_cast<std::size_t>(j);
      out << t + 1 << ',' << (k < route_names.size() ? route_names[k] : std::to_string(j)) << ','
          << priors.theta1(t, j) << ',' << priors.theta2(t, j) << '\n';
    }
  }
}

void write_priors_sidecar(const std::string& path, const PriorSchedule& priors) {
  nlohmann::json doc;
  doc["alpha"] = priors.alpha;
  doc["rho"] = priors.rho;
  doc["tau"] = priors.tau;
  doc["beta"] = std::vector<double>(priors.beta.data(), priors.beta.data() + priors.beta.size());
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

}  // namespace tomo
