#pragma once

#include "tomo/common.hpp"
#include "tomo/network.hpp"

#include <cstddef>

namespace tomo {

/// Per-node aggregate traffic at one epoch.
struct NodeTotals {
  Vector inbound;
  Vector outbound;
  /// Mean of sum(inbound) and sum(outbound).
  double total = 0.0;
  /// |sum(inbound) - sum(outbound)| / max(total, tiny); 0 for a conservative network.
  double imbalance = 0.0;
};

/// Extracts node totals from one epoch of counters using `map`. Throws
/// MissingTotals when some node lacks an inbound or outbound counter.
NodeTotals node_totals_from_counters(const Vector& y, const CounterMap& map, std::size_t node_count);
NodeTotals node_totals_from_counters(const Vector& y, const Topology& topology);

/// Simple gravity: x(o, d) = outbound_o * inbound_d / total, routes indexed
/// o * node_count + d. All zero when total is 0.
Vector gravity(const NodeTotals& totals);

struct TomogravityResult {
  Vector x;
  /// The regularised system could not be solved; x is the gravity estimate.
  bool fallback = false;
  /// Negative entries were clipped and one IPFP sweep applied.
  bool clipped = false;
};

/// Minimises ||y - A x||^2 + lam^2 * sum_j (x_j - g_j)^2 / g_j around the
/// gravity estimate g (routes with g_j = 0 stay 0).
TomogravityResult tomogravity(const Vector& y, const Matrix& a, const NodeTotals& totals, double lam = 0.01);

/// Value of the tomogravity objective at x.
double tomogravity_objective(const Vector& x, const Vector& y, const Matrix& a, const Vector& g, double lam);

/// Per-epoch baselines over a T x m counter series.
Matrix gravity_series(const Matrix& y, const CounterMap& map, std::size_t node_count);
Matrix tomogravity_series(const Matrix& y, const Matrix& a, const CounterMap& map, std::size_t node_count,
                          double lam = 0.01);
/// IPFP from a uniform seed at every epoch.
Matrix ipfp_series(const Matrix& y, const Matrix& a);

}  // namespace tomo
