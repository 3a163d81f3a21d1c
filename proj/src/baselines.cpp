#include "tomo/baselines.hpp"

#include "tomo/errors.hpp"
#include "tomo/polytope.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace tomo {

NodeTotals node_totals_from_counters(const Vector& y, const CounterMap& map, std::size_t node_count) {
  if (static_cast<Index>(map.size()) != y.size()) throw ShapeMismatch("counter map length does not match y");
  const auto d = static_cast<Index>(node_count);
  NodeTotals out;
  out.inbound = Vector::Zero(d);
  out.outbound = Vector::Zero(d);
  std::vector<char> seen_in(node_count, 0);
  std::vector<char> seen_out(node_count, 0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map[i]) continue;
    const auto& role = *map[i];
    if (role.node >= node_count) throw ValidationError("counter map refers to node " + std::to_string(role.node));
    const double v = y[static_cast<Index>(i)];
    if (v < 0.0) throw NegativeEntry("negative counter value");
    if (role.direction == Direction::inbound) {
      out.inbound[static_cast<Index>(role.node)] += v;
      seen_in[role.node] = 1;
    } else {
      out.outbound[static_cast<Index>(role.node)] += v;
      seen_out[role.node] = 1;
    }
  }
  for (std::size_t v = 0; v < node_count; ++v) {
    if (!seen_in[v] || !seen_out[v]) {
      throw MissingTotals("counter map has no " + std::string(seen_in[v] ? "outbound" : "inbound") +
                          " counter for node " + std::to_string(v));
    }
  }
  const double in = out.inbound.sum();
  const double outb = out.outbound.sum();
  out.total = 0.5 * (in + outb);
  out.imbalance = out.total > 0.0 ? std::abs(in - outb) / out.total : 0.0;
  return out;
}

NodeTotals node_totals_from_counters(const Vector& y, const Topology& topology) {
  return node_totals_from_counters(y, topology.counter_map(), topology.node_count);
}

Vector gravity(const NodeTotals& totals) {
  const Index d = totals.outbound.size();
  if (totals.inbound.size() != d) throw ShapeMismatch("gravity: inbound and outbound lengths differ");
  Vector x = Vector::Zero(d * d);
  if (!(totals.total > 0.0)) return x;
  for (Index o = 0; o < d; ++o) {
    for (Index dest = 0; dest < d; ++dest) x[o * d + dest] = totals.outbound[o] * totals.inbound[dest] / totals.total;
  }
  return x;
}

double tomogravity_objective(const Vector& x, const Vector& y, const Matrix& a, const Vector& g, double lam) {
  double penalty = 0.0;
  for (Index j = 0; j < g.size(); ++j) {
    if (g[j] > 0.0) penalty += (x[j] - g[j]) * (x[j] - g[j]) / g[j];
  }
  return (y - a * x).squaredNorm() + lam * lam * penalty;
}

TomogravityResult tomogravity(const Vector& y, const Matrix& a, const NodeTotals& totals, double lam) {
  if (y.size() != a.rows()) throw ShapeMismatch("tomogravity: y length does not match A");
  TomogravityResult out;
  const Vector g = gravity(totals);
  if (g.size() != a.cols()) throw ShapeMismatch("tomogravity: node count does not match A");
  out.x = g;

  std::vector<Index> free;
  for (Index j = 0; j < g.size(); ++j) {
    if (g[j] > 0.0) free.push_back(j);
  }
  if (free.empty()) return out;

  // Solve for u with x_F = g_F + sqrt(g_F) * u:
  //   (S A_F' A_F S + lam^2 I) u = S A_F' (y - A g)
  const auto k = static_cast<Index>(free.size());
  Matrix as(a.rows(), k);
  for (Index c = 0; c < k; ++c) as.col(c) = a.col(free[c]) * std::sqrt(g[free[c]]);
  Matrix normal = as.transpose() * as;
  normal.diagonal().array() += lam * lam;
  const Vector rhs = as.transpose() * (y - a * g);
  Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) {
    out.fallback = true;
    return out;
  }
  const Vector u = llt.solve(rhs);
  if (!u.allFinite()) {
    out.fallback = true;
    return out;
  }
  for (Index c = 0; c < k; ++c) out.x[free[c]] = g[free[c]] + std::sqrt(g[free[c]]) * u[c];

  if ((out.x.array() < 0.0).any()) {
    out.clipped = true;
    out.x = out.x.cwiseMax(0.0);
    // Give clipped-to-zero routes a small positive value so IPFP can rescale them.
    for (Index j : free) {
      if (out.x[j] == 0.0) out.x[j] = 1e-9 * g[j];
    }
    IpfpOptions one_sweep;
    one_sweep.max_iter = 1;
    one_sweep.tol = 0.0;
    out.x = ipfp(a, y.cwiseMax(0.0), out.x, one_sweep).x;
  }
  return out;
}

Matrix gravity_series(const Matrix& y, const CounterMap& map, std::size_t node_count) {
  const auto d = static_cast<Index>(node_count);
  Matrix out(y.rows(), d * d);
  for (Index t = 0; t < y.rows(); ++t) {
    out.row(t) = gravity(node_totals_from_counters(y.row(t).transpose(), map, node_count)).transpose();
  }
  return out;
}

Matrix tomogravity_series(const Matrix& y, const Matrix& a, const CounterMap& map, std::size_t node_count, double lam) {
  Matrix out(y.rows(), a.cols());
  for (Index t = 0; t < y.rows(); ++t) {
    const Vector yt = y.row(t).transpose();
    out.row(t) = tomogravity(yt, a, node_totals_from_counters(yt, map, node_count), lam).x.transpose();
  }
  return out;
}

Matrix ipfp_series(const Matrix& y, const Matrix& a) {
  Matrix out(y.rows(), a.cols());
  for (Index t = 0; t < y.rows(); ++t) {
    out.row(t) = ipfp(a, y.row(t).transpose(), Vector::Ones(a.cols())).x.transpose();
  }
  return out;
}

}  // namespace tomo
