#include "tomo/calibrate.hpp"
#include "tomo/errors.hpp"
#include "tomo/multilevel.hpp"
#include "tomo/network.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <random>

using namespace tomo;

namespace {

// Independent oracle: mean of N(m, s^2) truncated to (0, inf).
double truncated_mean_oracle(double m, double s) {
  const double a = -m / s;
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
  const double tail = 0.5 * std::erfc(a / std::sqrt(2.0));
  return m + s * pdf / tail;
}

// Trapezoid integral of exp(logpdf) on a fine grid.
double integrate_density(double m, double v) {
  const double s = std::sqrt(v);
  const double upper = std::max(m, 0.0) + 40.0 * s;
  const int steps = 400000;
  const double h = upper / steps;
  double total = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
    total += w * std::exp(truncnorm_logpdf(k * h, m, v));
  }
  return total * h;
}

std::shared_ptr<const RoutingMatrix> shared(RoutingMatrix r) {
  return std::make_shared<const RoutingMatrix>(std::move(r));
}

FilterConfig small_config(std::size_t particles = 200) {
  FilterConfig config;
  config.n_particles = particles;
  config.n_move = 3;
  config.rda_steps_per_draw = 10;
  config.seed = 11;
  config.threads = 1;
  return config;
}

}  // namespace

TEST(TruncNormTest, LogCdfMatchesErfcAcrossBranches) {
  EXPECT_NEAR(log_normal_cdf(0.0), std::log(0.5), 1e-15);
  for (double z : {-19.9, -20.1, -25.0, -30.0, -35.0}) {
    const double direct = std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
    EXPECT_NEAR(log_normal_cdf(z), direct, 1e-8 * std::abs(direct)) << z;
  }
  EXPECT_NEAR(log_normal_cdf(6.0), std::log1p(-0.5 * std::erfc(6.0 / std::sqrt(2.0))), 1e-18);
  EXPECT_TRUE(std::isfinite(log_normal_cdf(-200.0)));
}

TEST(TruncNormTest, LogPdfKnownValues) {
  // Half-normal density 2 phi(x).
  EXPECT_NEAR(truncnorm_logpdf(0.0, 0.0, 1.0), std::log(2.0 / std::sqrt(2.0 * M_PI)), 1e-12);
  EXPECT_NEAR(truncnorm_logpdf(0.0, 0.0, 1.0), -0.2258, 5e-5);
  EXPECT_NEAR(truncnorm_logpdf(1.0, 0.0, 1.0), -0.7258, 5e-5);
  EXPECT_EQ(truncnorm_logpdf(-0.1, 1.0, 1.0), -std::numeric_limits<double>::infinity());
}

TEST(TruncNormTest, DensityIntegratesToOne) {
  for (auto [m, v] : {std::pair{0.0, 1.0}, {3.0, 0.5}, {-5.0, 1.0}, {-40.0, 4.0}, {100.0, 2500.0}}) {
    EXPECT_NEAR(integrate_density(m, v), 1.0, 1e-5) << m << " " << v;
  }
}

TEST(TruncNormTest, DrawMeansMatchOracle) {
  Rng rng(5);
  for (auto [m, v] : {std::pair{10.0, 1.0}, {-5.0, 1.0}, {0.0, 1.0}, {1.0, 4.0}, {-60.0, 9.0}}) {
    const int draws = 1'000'000;
    double sum = 0.0;
    for (int k = 0; k < draws; ++k) {
      const double x = truncnorm_draw(m, v, rng);
      ASSERT_GE(x, 0.0);
      sum += x;
    }
    const double oracle = truncated_mean_oracle(m, std::sqrt(v));
    EXPECT_NEAR(sum / draws, oracle, 0.01 * oracle) << m << " " << v;
  }
}

TEST(TruncNormTest, ZeroVarianceReturnsClampedMean) {
  Rng rng(1);
  EXPECT_EQ(truncnorm_draw(3.0, 0.0, rng), 3.0);
  EXPECT_EQ(truncnorm_draw(-3.0, 0.0, rng), 0.0);
}

TEST(EssTest, Examples) {
  EXPECT_NEAR(ess(Vector::Constant(100, 0.3)), 100.0, 1e-9);
  Vector one = Vector::Zero(50);
  one[7] = 2.0;
  EXPECT_DOUBLE_EQ(ess(one), 1.0);
  Vector w(4);
  w << 1, 1, 2, 0;
  EXPECT_NEAR(ess(w), 16.0 / 6.0, 1e-15);
  const Vector lw = (w.array() + 1e-300).log();
  EXPECT_NEAR(ess_from_log_weights((lw.array() + 800.0).matrix()), 16.0 / 6.0, 1e-12);
  EXPECT_NEAR(ess_from_log_weights((lw.array() - 800.0).matrix()), 16.0 / 6.0, 1e-12);
}

TEST(ResampleTest, SystematicCountsWithinOne) {
  Rng rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    Vector w(7);
    for (Index k = 0; k < 7; ++k) w[k] = unif(rng);
    const std::size_t count = 50;
    Vector big = Vector::Zero(static_cast<Index>(count));
    big.head(7) = w;
    const auto ancestors = resample(big, Resampling::systematic, rng);
    std::vector<int> hits(count, 0);
    for (auto a : ancestors) ++hits[a];
    for (std::size_t k = 0; k < count; ++k) {
      const double expected = count * big[static_cast<Index>(k)] / big.sum();
      EXPECT_LE(std::abs(hits[k] - expected), 1.0 + 1e-9);
    }
  }
}

TEST(ResampleTest, MultinomialUnbiased) {
  Rng rng(4);
  Vector w(3);
  w << 0.2, 0.5, 0.3;
  std::vector<double> hits(3, 0.0);
  const int reps = 20000;
  for (int rep = 0; rep < reps; ++rep) {
    for (auto a : resample(w, Resampling::multinomial, rng)) hits[a] += 1.0;
  }
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(hits[static_cast<std::size_t>(k)] / (3.0 * reps), w[k], 0.005);
}

TEST(SimulateTest, DegenerateLimitReproducesLambda) {
  const auto routing = build_star(2);
  const std::size_t T = 20;
  PriorSchedule priors;
  priors.theta1 = Matrix::Zero(T, 4);
  priors.theta2 = Matrix::Constant(T, 4, 1e-30);
  priors.beta = Vector::Constant(T, 1.0);
  priors.alpha = 2.0;
  priors.rho = 1.0;
  Vector lambda0(4);
  lambda0 << 5, 10, 20, 40;
  Rng rng(2);
  const auto sim = simulate(priors, 1e-14, lambda0, T, routing.entries(), rng);
  for (Index t = 0; t < static_cast<Index>(T); ++t) {
    EXPECT_LE((sim.lambda.row(t).transpose() - lambda0).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((sim.x.row(t).transpose() - lambda0).cwiseAbs().maxCoeff(), 1e-4);
  }
  EXPECT_LE((sim.y - sim.x * routing.entries().transpose()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SimulateTest, HeavyTailedMarginalMatchesTruncatedMean) {
  const std::size_t T = 4000;
  PriorSchedule priors;
  priors.theta1 = Matrix::Zero(T, 1);
  priors.theta2 = Matrix::Constant(T, 1, 1e-30);
  priors.beta = Vector::Constant(T, 1.5);
  priors.alpha = 1.0;
  priors.rho = 1.0;
  Rng rng(8);
  const double phi = 1.5;
  const auto sim = simulate(priors, phi, Vector::Constant(1, 10.0), T, Matrix::Identity(1, 1), rng);
  const double oracle = truncated_mean_oracle(10.0, 10.0 * std::sqrt(std::expm1(phi)));
  EXPECT_NEAR(sim.x.mean(), oracle, 0.05 * oracle);
  EXPECT_TRUE((sim.x.array() >= 0.0).all());
  EXPECT_NEAR(sim.phi.mean(), phi, 1e-15);
}

TEST(SimulateTest, RejectsShortSchedule) {
  const auto priors = naive_priors(4, 5);
  Rng rng(1);
  EXPECT_THROW(simulate(priors, std::nullopt, Vector::Ones(4), 6, build_star(2).entries(), rng), ValidationError);
}

TEST(FilterTest, IdentityRoutingReturnsCounters) {
  const auto routing = shared(RoutingMatrix(Matrix::Identity(3, 3)));
  Matrix y(4, 3);
  y << 1, 2, 3, 4, 5, 6, 0.5, 0, 9, 7, 7, 7;
  const auto priors = naive_priors(3, 4);
  const auto summary = sirm_filter(y, routing, priors, small_config());
  EXPECT_LE((summary.mean - y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((summary.q05 - y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((summary.q95 - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FilterTest, ZeroCounterGivesExactZeros) {
  const auto routing = shared(build_star(3));
  const Vector x = (Vector(9) << 2, 0, 3, 0, 0, 0, 4, 0, 5).finished();
  Matrix y(3, 6);
  for (Index t = 0; t < 3; ++t) y.row(t) = (routing->entries() * x).transpose();
  const auto summary = sirm_filter(y, routing, naive_priors(9, 3), small_config());
  for (Index t = 0; t < 3; ++t) {
    for (Index j : {3, 4, 5, 1, 7}) {
      EXPECT_EQ(summary.mean(t, j), 0.0);
      EXPECT_EQ(summary.q95(t, j), 0.0);
    }
  }
}

TEST(FilterTest, EveryParticleFeasible) {
  const auto routing = shared(build_chain(3));
  PriorSchedule truth = naive_priors(9, 8, 0.5);
  Rng rng(21);
  const auto sim = simulate(truth, std::nullopt, Vector::Constant(9, 50.0), 8, routing->entries(), rng);
  std::size_t checked = 0;
  double worst = 0.0;
  auto observer = [&](std::size_t, const Polytope& p, const std::vector<Particle>& particles) {
    for (const auto& particle : particles) {
      worst = std::max(worst, p.violation(particle.x));
      EXPECT_TRUE(p.contains(particle.x));
      EXPECT_GT(particle.phi, 0.0);
      EXPECT_TRUE((particle.lambda.array() > 0.0).all());
      ++checked;
    }
  };
  const auto summary = sirm_filter(sim.y, routing, naive_priors(9, 8, 0.5), small_config(), observer);
  EXPECT_EQ(checked, 8u * 200u);
  EXPECT_LE(worst, 1e-8);
  for (Index t = 0; t < 8; ++t) {
    EXPECT_GE(summary.ess[t], 1.0);
    EXPECT_LE(summary.ess[t], 200.0 + 1e-9);
    const Vector fitted = routing->entries() * summary.mean.row(t).transpose();
    EXPECT_LE((fitted - sim.y.row(t).transpose()).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + sim.y.row(t).maxCoeff()));
    EXPECT_TRUE((summary.q05.row(t).array() <= summary.median.row(t).array()).all());
    EXPECT_TRUE((summary.median.row(t).array() <= summary.q95.row(t).array()).all());
  }
}

TEST(FilterTest, DeterministicAcrossThreadCounts) {
  const auto routing = shared(build_star(3));
  Rng rng(6);
  const auto sim = simulate(naive_priors(9, 5, 0.5), std::nullopt, Vector::Constant(9, 30.0), 5,
                            routing->entries(), rng);
  auto config = small_config(120);
  const auto one = sirm_filter(sim.y, routing, naive_priors(9, 5, 0.5), config);
  config.threads = 3;
  const auto three = sirm_filter(sim.y, routing, naive_priors(9, 5, 0.5), config);
  EXPECT_EQ(one.mean, three.mean);
  EXPECT_EQ(one.ess, three.ess);
  config.seed = 12;
  const auto other = sirm_filter(sim.y, routing, naive_priors(9, 5, 0.5), config);
  EXPECT_NE(one.mean, other.mean);
}

TEST(FilterTest, InformativePriorsBeatVaguePriors) {
  // Priors centred on the true intensity path should track x more closely
  // than the vague default schedule.
  const auto routing = shared(build_star(3));
  const std::size_t T = 30;
  const double rho = 0.5;
  PriorSchedule truth = naive_priors(9, T, rho);
  Rng rng(31);
  const Vector lambda0 = Vector::Constant(9, 200.0);
  const auto sim = simulate(truth, 0.05, lambda0, T, routing->entries(), rng);

  PriorSchedule informed = truth;
  for (Index t = 0; t < static_cast<Index>(T); ++t) {
    for (Index j = 0; j < 9; ++j) {
      const double prev = t == 0 ? std::log(lambda0[j]) : std::log(sim.lambda(t - 1, j));
      informed.theta1(t, j) = std::log(sim.lambda(t, j)) - rho * prev;
      informed.theta2(t, j) = 1e-3;
    }
    informed.beta[t] = 0.05;
  }
  auto config = small_config(300);
  config.initial_log_lambda = lambda0.array().log();
  config.initial_log_sd = 0.01;
  const auto good = sirm_filter(sim.y, routing, informed, config);
  const auto vague = sirm_filter(sim.y, routing, truth, config);
  const double err_good = (good.mean - sim.x).cwiseAbs().sum();
  const double err_vague = (vague.mean - sim.x).cwiseAbs().sum();
  EXPECT_LT(err_good, err_vague);
}

TEST(FilterTest, ValidatesInputs) {
  const auto routing = shared(build_star(2));
  auto config = small_config();
  EXPECT_THROW(sirm_filter(Matrix::Ones(3, 3), routing, naive_priors(4, 3), config), ShapeMismatch);
  EXPECT_THROW(sirm_filter(Matrix::Ones(3, 4), routing, naive_priors(4, 2), config), ShapeMismatch);
  EXPECT_THROW(sirm_filter(-Matrix::Ones(3, 4), routing, naive_priors(4, 3), config), NegativeEntry);
  config.n_particles = 1;
  EXPECT_THROW(sirm_filter(Matrix::Ones(3, 4), routing, naive_priors(4, 3), config), ValidationError);
}

TEST(ParticleDumpTest, RoundTrip) {
  const auto routing = shared(build_star(2));
  Matrix y(3, 4);
  y << 3, 5, 4, 4, 2, 2, 1, 3, 6, 1, 2, 5;
  const auto path = (std::filesystem::temp_directory_path() / "tomo_dump_test.bin").string();
  std::vector<std::vector<Particle>> seen;
  {
    ParticleDumpWriter writer(path, 3, 50, 4);
    auto observer = [&](std::size_t t, const Polytope&, const std::vector<Particle>& particles) {
      writer.write_epoch(t, particles);
      seen.push_back(particles);
    };
    sirm_filter(y, routing, naive_priors(4, 3), small_config(50), observer);
  }
  const auto dump = read_particle_dump(path);
  std::filesystem::remove(path);
  ASSERT_EQ(dump.frames.size(), 3u);
  EXPECT_EQ(dump.particles, 50u);
  EXPECT_EQ(dump.routes, 4u);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 50; ++i) {
      EXPECT_EQ(dump.frames[t][i].x, seen[t][i].x);
      EXPECT_EQ(dump.frames[t][i].lambda, seen[t][i].lambda);
      EXPECT_EQ(dump.frames[t][i].phi, seen[t][i].phi);
    }
  }
}

TEST(FilterTest, WeightsEqualWhenProposalMatchesModel) {
  // lambda* = rho * lambda_0 = mu* for every particle and phi ~ beta, so the
  // model conditional and the shared proposal coincide.
  const auto routing = shared(build_star(3));
  const double rho = 0.8;
  const double beta = 0.7;
  Vector lambda0(9);
  lambda0 << 40, 10, 25, 5, 60, 15, 30, 20, 8;
  PriorSchedule priors;
  priors.theta1 = ((std::log(rho) + (1.0 - rho) * lambda0.array().log()).matrix().transpose()).replicate(1, 1);
  priors.theta2 = Matrix::Constant(1, 9, 1e-30);
  priors.beta = Vector::Constant(1, beta);
  priors.alpha = 1e14;
  priors.rho = rho;
  priors.tau = 2.0;
  const Vector x = rho * lambda0;
  const Matrix y = (routing->entries() * x).transpose();
  auto config = small_config(400);
  config.initial_log_lambda = lambda0.array().log();
  config.initial_log_sd = 0.0;
  const auto summary = sirm_filter(y, routing, priors, config);
  EXPECT_NEAR(summary.ess[0], 400.0, 400.0 * 1e-6);
}

TEST(ResampleTest, PreservesWeightedMeanInExpectation) {
  Rng rng(17);
  const Index count = 200;
  Vector values(count);
  Vector weights(count);
  std::gamma_distribution<double> gamma(0.5, 1.0);
  std::normal_distribution<double> normal(3.0, 2.0);
  for (Index i = 0; i < count; ++i) {
    values[i] = normal(rng);
    weights[i] = gamma(rng);
  }
  const double target = values.dot(weights) / weights.sum();
  for (auto scheme : {Resampling::systematic, Resampling::multinomial}) {
    const int trials = 1000;
    std::vector<double> means;
    for (int k = 0; k < trials; ++k) {
      double sum = 0.0;
      for (auto a : resample(weights, scheme, rng)) sum += values[static_cast<Index>(a)];
      means.push_back(sum / static_cast<double>(count));
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= trials;
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    const double se = std::sqrt(var / (trials - 1) / trials);
    EXPECT_LE(std::abs(mean - target), 3.0 * se + 1e-12);
  }
}

TEST(FilterTest, ModelDensitySuperlevelSetsConnected) {
  // Restricted to a two-dimensional polytope, the truncated-normal model
  // density is log-concave, so each superlevel set is a single grid component.
  const auto routing = std::make_shared<const RoutingMatrix>(build_chain(3));
  Vector x_true(9);
  x_true << 5, 20, 3, 8, 2, 30, 12, 6, 9;
  const Polytope p(routing, routing->entries() * x_true);
  ASSERT_EQ(p.dim(), 2u);
  Vector lambda(9);
  lambda << 10, 10, 5, 3, 4, 20, 8, 12, 6;
  const double phi = 0.8;
  const auto& nb = p.nonbasic();
  const auto& basic = p.basic();
  const int grid = 121;
  const double lo = 0.0;
  const double hi = 40.0;
  std::vector<double> values(grid * grid, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < grid; ++a) {
    for (int b = 0; b < grid; ++b) {
      Vector x = x_true;
      x[static_cast<Index>(nb[0])] = lo + (hi - lo) * a / (grid - 1);
      x[static_cast<Index>(nb[1])] = lo + (hi - lo) * b / (grid - 1);
      Vector shift(2);
      shift << x[static_cast<Index>(nb[0])] - x_true[static_cast<Index>(nb[0])],
          x[static_cast<Index>(nb[1])] - x_true[static_cast<Index>(nb[1])];
      const Vector w = p.c() * shift;
      for (std::size_t k = 0; k < basic.size(); ++k) {
        x[static_cast<Index>(basic[k])] = x_true[static_cast<Index>(basic[k])] - w[static_cast<Index>(k)];
      }
      if ((x.array() < 0.0).any()) continue;
      ASSERT_LE(p.violation(x), 1e-9);
      double lp = 0.0;
      for (Index j = 0; j < 9; ++j) lp += truncnorm_logpdf(x[j], lambda[j], lambda[j] * lambda[j] * std::expm1(phi));
      values[static_cast<std::size_t>(a * grid + b)] = lp;
      top = std::max(top, lp);
    }
  }
  for (double fraction : {0.99, 0.5, 0.1, 1e-3}) {
    const double level = top + std::log(fraction);
    std::vector<int> label(values.size(), -1);
    int components = 0;
    for (std::size_t start = 0; start < values.size(); ++start) {
      if (values[start] < level || label[start] >= 0) continue;
      ++components;
      std::vector<std::size_t> stack{start};
      label[start] = components;
      while (!stack.empty()) {
        const std::size_t cell = stack.back();
        stack.pop_back();
        const int a = static_cast<int>(cell) / grid;
        const int b = static_cast<int>(cell) % grid;
        for (auto [da, db] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int na = a + da;
          const int nb2 = b + db;
          if (na < 0 || nb2 < 0 || na >= grid || nb2 >= grid) continue;
          const auto next = static_cast<std::size_t>(na * grid + nb2);
          if (values[next] >= level && label[next] < 0) {
            label[next] = components;
            stack.push_back(next);
          }
        }
      }
    }
    EXPECT_EQ(components, 1) << fraction;
  }
}

TEST(FilterPropertyTest, MatchedPriorsBeatIpfpOnChain) {
  // Priors equal to the simulator (including the lambda_0 prior), J = 4000,
  // 20 replicates of T = 50 on the three-node chain.
  const auto routing = shared(build_chain(3));
  const Matrix& a = routing->entries();
  const std::size_t T = 50;
  const PriorSchedule truth = naive_priors(9, T, 0.5);
  int wins = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    Rng rng = stream_rng(77, 0, rep);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector lambda0(9);
    for (auto& v : lambda0) v = 500.0 * std::exp(std::log(6.0) * normal(rng));
    const auto sim = simulate(truth, std::nullopt, lambda0, T, a, rng);
    FilterConfig config;
    config.n_particles = 4000;
    config.seed = 100 + rep;
    config.initial_log_lambda = Vector::Constant(9, std::log(500.0));
    config.initial_log_sd = std::log(6.0);
    const auto summary = sirm_filter(sim.y, routing, truth, config);
    const double filter_err = (summary.mean - sim.x).rowwise().norm().mean();
    Matrix ipfp_est(T, 9);
    for (Index t = 0; t < static_cast<Index>(T); ++t) {
      ipfp_est.row(t) = ipfp(a, sim.y.row(t).transpose(), Vector::Ones(9)).x.transpose();
    }
    const double ipfp_err = (ipfp_est - sim.x).rowwise().norm().mean();
    if (filter_err < ipfp_err) ++wins;
  }
  EXPECT_GE(wins, 18);
}
