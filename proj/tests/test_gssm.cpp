#include "tomo/errors.hpp"
#include "tomo/gssm.hpp"
#include "tomo/network.hpp"

#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>

using namespace tomo;

namespace {

constexpr double log_two_pi = 1.8378770664093454836;

double gaussian_logpdf(const Vector& r, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  const Matrix l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (log_det + r.dot(llt.solve(r)) + static_cast<double>(r.size()) * log_two_pi);
}

// Kalman filter on the unreduced augmented state [x; 1].
double augmented_loglik(const SsmParams& p, const Matrix& y, const Matrix& a) {
  const Index n = a.cols();
  const Index m = a.rows();
  Matrix f = Matrix::Zero(2 * n, 2 * n);
  f.topLeftCorner(n, n) = p.rho * Matrix::Identity(n, n);
  f.topRightCorner(n, n) = p.lambda.asDiagonal();
  f.bottomRightCorner(n, n).setIdentity();
  Matrix h = Matrix::Zero(m, 2 * n);
  h.leftCols(n) = a;
  Matrix q = Matrix::Zero(2 * n, 2 * n);
  const Vector d = p.lambda.array().pow(p.tau).matrix();
  q.topLeftCorner(n, n) = (p.phi * d).asDiagonal();

  Vector s(2 * n);
  s << p.lambda / (1.0 - p.rho), Vector::Ones(n);
  Matrix cov = Matrix::Zero(2 * n, 2 * n);
  cov.topLeftCorner(n, n) = (p.phi * d / (1.0 - p.rho * p.rho)).asDiagonal();
  // x_0 is stationary, so x_1 | nothing has the same law.
  double ll = 0.0;
  for (Index t = 0; t < y.rows(); ++t) {
    if (t > 0) {
      s = f * s;
      cov = f * cov * f.transpose() + q;
    }
    const Vector r = y.row(t).transpose() - h * s;
    Matrix sc = h * cov * h.transpose();
    sc.diagonal().array() += p.sigma2;
    ll += gaussian_logpdf(r, sc);
    const Matrix gain = cov * h.transpose() * sc.inverse();
    s += gain * r;
    cov = cov - gain * h * cov;
  }
  return ll;
}

SsmParams random_params(std::mt19937_64& rng, Index n, double rho) {
  std::uniform_real_distribution<double> unif(0.5, 5.0);
  SsmParams p;
  p.lambda.resize(n);
  for (Index j = 0; j < n; ++j) p.lambda[j] = unif(rng);
  p.phi = 0.3;
  p.rho = rho;
  p.sigma2 = 0.05;
  p.tau = 2.0;
  return p;
}

}  // namespace

TEST(GssmTest, IdentityRhoZeroIsIndependentGaussian) {
  SsmParams p;
  p.lambda = Vector::LinSpaced(3, 1.0, 3.0);
  p.phi = 0.5;
  p.rho = 0.0;
  p.sigma2 = 1e-10;
  Rng rng(1);
  const Matrix a = Matrix::Identity(3, 3);
  const auto sim = simulate_ssm(p, a, 6, rng);
  double oracle = 0.0;
  for (Index t = 0; t < 6; ++t) {
    for (Index j = 0; j < 3; ++j) {
      const double var = p.phi * p.lambda[j] * p.lambda[j] + p.sigma2;
      const double r = sim.y(t, j) - p.lambda[j];
      oracle += -0.5 * (std::log(var) + r * r / var + log_two_pi);
    }
  }
  EXPECT_NEAR(kalman_marginal_loglik(p, sim.y, a), oracle, 1e-8);
  EXPECT_NEAR(spectral_loglik(p, sim.y, a).loglik, oracle, 1e-8);
}

TEST(GssmTest, TwoStepScalarSystem) {
  SsmParams p;
  p.lambda = Vector::Constant(1, 2.0);
  p.phi = 0.4;
  p.rho = 0.3;
  p.sigma2 = 0.05;
  Matrix y(2, 1);
  y << 2.7, 3.4;
  const Matrix a = Matrix::Identity(1, 1);
  // Joint bivariate normal of (y1, y2).
  const double s = p.phi * 4.0 / (1.0 - p.rho * p.rho);
  Matrix cov(2, 2);
  cov << s + p.sigma2, p.rho * s, p.rho * s, s + p.sigma2;
  Vector r(2);
  r << y(0, 0) - 2.0 / 0.7, y(1, 0) - 2.0 / 0.7;
  const double oracle = gaussian_logpdf(r, cov);
  EXPECT_NEAR(kalman_marginal_loglik(p, y, a), oracle, 1e-10);
  EXPECT_NEAR(spectral_loglik(p, y, a).loglik, oracle, 1e-10);
}

TEST(GssmTest, ReducedMatchesAugmentedState) {
  std::mt19937_64 gen(5);
  for (const auto& routing : {build_star(2), build_star(3), build_chain(3)}) {
    for (double rho : {0.0, 0.1, 0.6}) {
      const SsmParams p = random_params(gen, routing.routes(), rho);
      Rng rng(gen());
      const auto sim = simulate_ssm(p, routing.entries(), 8, rng);
      const double reference = augmented_loglik(p, sim.y, routing.entries());
      EXPECT_NEAR(kalman_marginal_loglik(p, sim.y, routing.entries()), reference, 1e-8);
      EXPECT_NEAR(spectral_loglik(p, sim.y, routing.entries(), false).loglik, reference, 1e-8);
    }
  }
}

TEST(GssmTest, RhoZeroIsLocallyIid) {
  std::mt19937_64 gen(6);
  const auto routing = build_star(3);
  const Matrix& a = routing.entries();
  const SsmParams p = random_params(gen, 9, 0.0);
  Rng rng(7);
  const auto sim = simulate_ssm(p, a, 10, rng);
  Matrix cov = p.phi * a * p.scale_diag().asDiagonal() * a.transpose();
  cov.diagonal().array() += p.sigma2;
  double oracle = 0.0;
  for (Index t = 0; t < 10; ++t) oracle += gaussian_logpdf(sim.y.row(t).transpose() - a * p.lambda, cov);
  EXPECT_NEAR(kalman_marginal_loglik(p, sim.y, a), oracle, 1e-8);
  EXPECT_NEAR(spectral_loglik(p, sim.y, a).loglik, oracle, 1e-8);
}

TEST(GssmTest, AnalyticGradientMatchesFiniteDifference) {
  std::mt19937_64 gen(8);
  for (const auto& routing : {build_star(3), build_chain(3)}) {
    const Matrix& a = routing.entries();
    SsmParams p = random_params(gen, routing.routes(), 0.3);
    Rng rng(9);
    const auto sim = simulate_ssm(p, a, 12, rng);
    // Evaluate away from the truth so the gradient is not near zero.
    p.lambda *= 1.3;
    p.phi *= 0.7;
    const auto g = spectral_loglik(p, sim.y, a);
    const double h = 1e-6;
    for (Index j = 0; j < p.lambda.size(); ++j) {
      SsmParams up = p;
      SsmParams down = p;
      up.lambda[j] *= std::exp(h);
      down.lambda[j] *= std::exp(-h);
      const double fd =
          (spectral_loglik(up, sim.y, a, false).loglik - spectral_loglik(down, sim.y, a, false).loglik) / (2 * h);
      EXPECT_NEAR(g.d_log_lambda[j], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
    SsmParams up = p;
    SsmParams down = p;
    up.phi *= std::exp(h);
    down.phi *= std::exp(-h);
    const double fd =
        (spectral_loglik(up, sim.y, a, false).loglik - spectral_loglik(down, sim.y, a, false).loglik) / (2 * h);
    EXPECT_NEAR(g.d_log_phi, fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(GssmTest, ClosedFormSmootherMatchesRts) {
  std::mt19937_64 gen(10);
  const auto routing = build_star(3);
  const Matrix& a = routing.entries();
  const SsmParams p = random_params(gen, 9, 0.4);
  Rng rng(11);
  const auto sim = simulate_ssm(p, a, 9, rng);
  const auto rts = kalman_smooth(p, sim.y, a);
  for (std::size_t pos = 0; pos < 9; ++pos) {
    Vector mean;
    Vector var;
    smooth_at(p, sim.y, a, pos, mean, var);
    const auto t = static_cast<Index>(pos);
    EXPECT_LE((mean - rts.mean.row(t).transpose()).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + mean.cwiseAbs().maxCoeff()));
    EXPECT_LE((var - rts.variance.row(t).transpose()).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + var.maxCoeff()));
    EXPECT_TRUE((var.array() > 0.0).all());
  }
}

TEST(GssmTest, TruthBeatsDoubledLambda) {
  const auto routing = build_star(3);
  const Matrix& a = routing.entries();
  SsmParams p;
  p.lambda = Vector::LinSpaced(9, 5.0, 25.0);
  p.phi = 0.2;
  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(stream_rng(12, static_cast<std::uint64_t>(rep)));
    const auto sim = simulate_ssm(p, a, 23, rng);
    SsmParams doubled = p;
    doubled.lambda *= 2.0;
    if (kalman_marginal_loglik(p, sim.y, a) >= kalman_marginal_loglik(doubled, sim.y, a)) ++wins;
  }
  EXPECT_GE(wins, 95);
}

TEST(GssmTest, StationaryMomentIdentity) {
  const auto routing = build_star(2);
  const Matrix& a = routing.entries();
  SsmParams p;
  p.lambda = Vector::Constant(4, 100.0);
  p.phi = 0.25;
  p.rho = 0.6;
  Rng rng(13);
  const Index t_count = 10000;
  const auto sim = simulate_ssm(p, a, static_cast<std::size_t>(t_count), rng);
  const Vector mean = sim.y.colwise().mean().transpose();
  const Vector expected_mean = a * p.lambda / (1.0 - p.rho);
  EXPECT_LE((mean - expected_mean).cwiseAbs().maxCoeff(), 0.02 * expected_mean.maxCoeff());

  const Matrix centred = sim.y.rowwise() - mean.transpose();
  const Matrix lag1 = centred.topRows(t_count - 1).transpose() * centred.bottomRows(t_count - 1) /
                      static_cast<double>(t_count - 1);
  const Matrix sym = 0.5 * (lag1 + lag1.transpose());
  const Matrix theory = p.phi * p.rho / (1.0 - p.rho * p.rho) * a * p.scale_diag().asDiagonal() * a.transpose();
  const double scale = theory.cwiseAbs().maxCoeff();
  for (Index i = 0; i < theory.rows(); ++i) {
    for (Index k = 0; k < theory.cols(); ++k) {
      const double tol = theory(i, k) != 0.0 ? 0.1 * std::abs(theory(i, k)) : 0.1 * scale;
      EXPECT_NEAR(sym(i, k), theory(i, k), tol) << i << "," << k;
    }
  }
}

TEST(GssmFitTest, ScalarMatchesMethodOfMoments) {
  SsmParams p;
  p.lambda = Vector::Constant(1, 40.0);
  p.phi = 0.1;
  p.rho = 0.1;
  Rng rng(14);
  const Matrix a = Matrix::Identity(1, 1);
  const auto sim = simulate_ssm(p, a, 300, rng);
  SsmOptions options;
  const auto fit = fit_window(sim.y, a, options);
  const double moments = (1.0 - p.rho) * sim.y.mean();
  EXPECT_NEAR(fit.lambda[0], moments, 0.05 * moments);
}

TEST(GssmFitTest, RecoversStarParameters) {
  const auto routing = build_star(4);
  const Matrix& a = routing.entries();
  SsmParams p;
  std::mt19937_64 gen(15);
  std::lognormal_distribution<double> lognormal(std::log(100.0), 1.0);
  p.lambda.resize(16);
  for (Index j = 0; j < 16; ++j) p.lambda[j] = lognormal(gen);
  p.phi = 0.3;
  Rng rng(16);
  const auto sim = simulate_ssm(p, a, 200, rng);
  const auto fit = fit_window(sim.y, a, SsmOptions{});
  std::vector<double> rel(16);
  for (Index j = 0; j < 16; ++j) rel[j] = std::abs(fit.lambda[j] - p.lambda[j]) / p.lambda[j];
  std::nth_element(rel.begin(), rel.begin() + 8, rel.end());
  EXPECT_LE(rel[8], 0.2);
  EXPECT_GT(fit.loglik, spectral_loglik(p, sim.y, a, false).loglik - 1e-6);
}

TEST(GssmFitTest, AllZeroWindowIsFlagged) {
  const auto routing = build_star(2);
  const auto fit = fit_window(Matrix::Zero(5, 4), routing.entries(), SsmOptions{});
  EXPECT_TRUE(fit.at_lower_bound);
  EXPECT_TRUE((fit.lambda.array() > 0.0).all());
}

TEST(GssmFitTest, SingleWindowCoversSeries) {
  const auto routing = build_star(3);
  SsmParams p;
  p.lambda = Vector::LinSpaced(9, 10.0, 50.0);
  p.phi = 0.2;
  Rng rng(17);
  const auto sim = simulate_ssm(p, routing.entries(), 23, rng);
  const auto fit = fit_sliding(sim.y, routing.entries());
  EXPECT_EQ(fit.lambda_hat.rows(), 1);
  EXPECT_EQ(fit.x_hat.rows(), 23);
  EXPECT_TRUE(fit.gaps.empty());
  EXPECT_TRUE((fit.phi_hat.array() == fit.window_phi[0]).all());
  EXPECT_TRUE((fit.v_hat.array() > 0.0).all());
}

TEST(GssmFitTest, ConstantSeriesGivesConstantEstimates) {
  const auto routing = build_star(3);
  const Vector x = Vector::LinSpaced(9, 10.0, 50.0);
  const Vector y = routing.entries() * x;
  Matrix series(40, 6);
  for (Index t = 0; t < 40; ++t) series.row(t) = y.transpose();
  SsmOptions options;
  options.window = 11;
  const auto fit = fit_sliding(series, routing.entries(), options);
  for (Index t = 1; t < 40; ++t) {
    EXPECT_LE((fit.x_hat.row(t) - fit.x_hat.row(0)).cwiseAbs().maxCoeff(), 1e-4 * x.maxCoeff());
  }
}

TEST(GssmFitTest, ParallelColdStartsAgreeWithSequential) {
  const auto routing = build_star(3);
  SsmParams p;
  p.lambda = Vector::LinSpaced(9, 10.0, 50.0);
  p.phi = 0.2;
  Rng rng(18);
  const auto sim = simulate_ssm(p, routing.entries(), 30, rng);
  SsmOptions options;
  options.window = 11;
  const auto sequential = fit_sliding(sim.y, routing.entries(), options);
  options.parallel = true;
  options.threads = 2;
  const auto parallel = fit_sliding(sim.y, routing.entries(), options);
  EXPECT_LE((sequential.loglik - parallel.loglik).cwiseAbs().maxCoeff(), 1e-3 * sequential.loglik.cwiseAbs().maxCoeff());
}

TEST(GssmFitTest, EveryWindowBeatsTrueParameters) {
  // Heavy-spread intensities: warm starts alone used to stall at the floor here.
  const auto routing = build_star(4);
  const Matrix& a = routing.entries();
  SsmParams p;
  std::mt19937_64 gen(2);
  std::lognormal_distribution<double> lognormal(std::log(100.0), 1.0);
  p.lambda.resize(16);
  for (Index j = 0; j < 16; ++j) p.lambda[j] = lognormal(gen);
  p.phi = 0.3;
  Rng rng = stream_rng(2, 5);
  const auto sim = simulate_ssm(p, a, 287, rng);
  SsmOptions options;
  options.window = 23;
  const auto fit = fit_sliding(sim.y, a, options);
  ASSERT_TRUE(fit.gaps.empty());
  for (Index k = 0; k < fit.loglik.size(); ++k) {
    EXPECT_GE(fit.loglik[k], kalman_marginal_loglik(p, sim.y.middleRows(k, 23), a) - 1e-6) << "window " << k;
  }
}

TEST(GssmFitTest, RejectsBadWindows) {
  const auto routing = build_star(2);
  EXPECT_THROW(fit_sliding(Matrix::Ones(10, 4), routing.entries(), SsmOptions{}), ValidationError);
  SsmOptions even;
  even.window = 4;
  EXPECT_THROW(fit_sliding(Matrix::Ones(10, 4), routing.entries(), even), ValidationError);
  EXPECT_THROW(fit_sliding(Matrix::Ones(30, 3), routing.entries(), SsmOptions{}), ShapeMismatch);
}
