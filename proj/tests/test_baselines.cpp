#include "tomo/baselines.hpp"
#include "tomo/errors.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tomo;

namespace {

NodeTotals totals(std::initializer_list<double> out, std::initializer_list<double> in) {
  NodeTotals t;
  t.outbound = Eigen::Map<const Vector>(out.begin(), static_cast<Index>(out.size()));
  t.inbound = Eigen::Map<const Vector>(in.begin(), static_cast<Index>(in.size()));
  t.total = 0.5 * (t.outbound.sum() + t.inbound.sum());
  return t;
}

Vector random_traffic(std::mt19937_64& gen, Index n) {
  std::lognormal_distribution<double> lognormal(3.0, 1.0);
  Vector x(n);
  for (Index j = 0; j < n; ++j) x[j] = lognormal(gen);
  return x;
}

}  // namespace

TEST(GravityTest, Symmetric) {
  const Vector x = gravity(totals({2, 2}, {2, 2}));
  EXPECT_TRUE((x.array() == 1.0).all());
}

TEST(GravityTest, ZeroMarginAnnihilates) {
  const Vector x = gravity(totals({4, 0}, {3, 1}));
  EXPECT_DOUBLE_EQ(x[0], 3.0);
  EXPECT_DOUBLE_EQ(x[1], 1.0);
  EXPECT_DOUBLE_EQ(x[2], 0.0);
  EXPECT_DOUBLE_EQ(x[3], 0.0);
  EXPECT_TRUE(gravity(totals({0, 0}, {0, 0})).isZero());
}

TEST(GravityTest, MarginsReproduceInputs) {
  std::mt19937_64 gen(1);
  for (std::size_t d : {2, 3, 5, 9}) {
    const auto topo = star_topology(d);
    const auto a = build_routing(topo);
    const Vector y = a.entries() * random_traffic(gen, a.routes());
    const auto t = node_totals_from_counters(y, topo);
    const Vector g = gravity(t);
    const auto di = static_cast<Index>(d);
    const Eigen::Map<const Matrix> table(g.data(), di, di);  // column-major: table(dest, o)
    EXPECT_LE((table.colwise().sum().transpose() - t.outbound).cwiseAbs().maxCoeff(), 1e-9 * t.total);
    EXPECT_LE((table.rowwise().sum() - t.inbound).cwiseAbs().maxCoeff(), 1e-9 * t.total);
    // Feasible on a star.
    EXPECT_LE((a.entries() * g - y).cwiseAbs().maxCoeff(), 1e-9 * y.maxCoeff());
  }
}

TEST(NodeTotalsTest, StarTwo) {
  const auto topo = star_topology(2);
  const auto a = build_routing(topo);
  Vector x(4);
  x << 1, 2, 3, 4;
  const auto t = node_totals_from_counters(a.entries() * x, topo);
  EXPECT_DOUBLE_EQ(t.outbound[0], 3.0);
  EXPECT_DOUBLE_EQ(t.outbound[1], 7.0);
  EXPECT_DOUBLE_EQ(t.inbound[0], 4.0);
  EXPECT_DOUBLE_EQ(t.inbound[1], 6.0);
  EXPECT_DOUBLE_EQ(t.total, 10.0);
  EXPECT_DOUBLE_EQ(t.imbalance, 0.0);

  const auto zero = node_totals_from_counters(Vector::Zero(4), topo);
  EXPECT_DOUBLE_EQ(zero.total, 0.0);
  EXPECT_TRUE(zero.inbound.isZero());
}

TEST(NodeTotalsTest, GapInMapThrows) {
  CounterMap map = star_topology(2).counter_map();
  map[3].reset();
  EXPECT_THROW(node_totals_from_counters(Vector::Ones(4), map, 2), MissingTotals);
}

TEST(TomogravityTest, ConsistentGravityIsFixedPoint) {
  std::mt19937_64 gen(2);
  for (std::size_t d : {2, 3, 4, 9}) {
    const auto topo = star_topology(d);
    const auto a = build_routing(topo);
    const Vector y = a.entries() * random_traffic(gen, a.routes());
    const auto t = node_totals_from_counters(y, topo);
    const Vector g = gravity(t);
    const auto tg = tomogravity(y, a.entries(), t);
    EXPECT_FALSE(tg.fallback);
    EXPECT_LE((tg.x - g).norm(), 1e-6 * g.norm());
  }
}

TEST(TomogravityTest, ReducesResidualWhenGravityInconsistent) {
  // Two counters over three routes; the totals map says nothing about route 2.
  Matrix a(2, 4);
  a << 1, 1, 0, 0, 0, 1, 1, 1;
  Vector y(2);
  y << 10, 4;
  const NodeTotals t = totals({5, 5}, {5, 5});
  const Vector g = gravity(t);
  const auto tg = tomogravity(y, a, t);
  EXPECT_LT((a * tg.x - y).norm(), (a * g - y).norm());
}

TEST(TomogravityTest, ObjectiveNotWorseThanGravity) {
  std::mt19937_64 gen(3);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto topo = two_router_topology(2, 3);
    const auto a = build_routing(topo);
    const Vector y = a.entries() * random_traffic(gen, a.routes());
    const auto t = node_totals_from_counters(y, topo);
    const Vector g = gravity(t);
    const auto tg = tomogravity(y, a.entries(), t);
    if (tg.clipped) continue;
    ++checked;
    EXPECT_LE(tomogravity_objective(tg.x, y, a.entries(), g, 0.01),
              tomogravity_objective(g, y, a.entries(), g, 0.01) * (1.0 + 1e-12));
    EXPECT_GE(tg.x.minCoeff(), 0.0);
  }
  EXPECT_GE(checked, 10);
}

TEST(TomogravityTest, InsensitiveToLambda) {
  std::mt19937_64 gen(4);
  const auto topo = chain_topology(4);
  const auto a = build_routing(topo);
  const Vector y = a.entries() * random_traffic(gen, a.routes());
  const auto t = node_totals_from_counters(y, topo);
  const Vector mid = tomogravity(y, a.entries(), t, 0.01).x;
  for (double lam : {0.001, 0.1}) {
    const Vector other = tomogravity(y, a.entries(), t, lam).x;
    EXPECT_LT((other - mid).norm(), 0.05 * mid.norm());
  }
}

TEST(BaselineSeriesTest, Shapes) {
  const auto topo = star_topology(3);
  const auto a = build_routing(topo);
  std::mt19937_64 gen(5);
  Matrix y(4, 6);
  for (Index t = 0; t < 4; ++t) y.row(t) = (a.entries() * random_traffic(gen, 9)).transpose();
  const Matrix g = gravity_series(y, topo.counter_map(), 3);
  const Matrix tg = tomogravity_series(y, a.entries(), topo.counter_map(), 3);
  const Matrix ip = ipfp_series(y, a.entries());
  EXPECT_EQ(g.rows(), 4);
  EXPECT_EQ(g.cols(), 9);
  EXPECT_LE((g - tg).cwiseAbs().maxCoeff(), 1e-6 * g.maxCoeff());
  EXPECT_LE((ip * a.entries().transpose() - y).cwiseAbs().maxCoeff(), 1e-8 * y.maxCoeff());
}
