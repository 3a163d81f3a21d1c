#pragma once

#include "tomo/common.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tomo {

/// Column-pivoted split A[rows, :] = [A1 | A2] with A1 square and invertible.
struct Decomposition {
  std::size_t rank = 0;
  /// Rows of A that form A1, in pivot order. Redundant rows are left out.
  std::vector<std::size_t> rows;
  /// Column permutation; the first `rank` entries are the columns of A1.
  std::vector<std::size_t> col_perm;
  Matrix a1_inv;  ///< rank x rank
  Matrix c;       ///< rank x (n - rank), A1^-1 A2
};

/// Greedy complete-pivoting elimination. Pivots below tol * max|A| count as zero.
Decomposition decompose(const Matrix& entries, double tol = 1e-10);

/// The m x n map from OD route volumes to counter readings.
///
/// Entries lie in [0, 1] (deterministic routing uses {0, 1}) and every route
/// is seen by at least one counter. The decomposition is computed once at
/// construction; instances are immutable afterwards.
class RoutingMatrix {
 public:
  explicit RoutingMatrix(Matrix entries, std::vector<std::string> counter_names = {},
                         std::vector<std::string> route_names = {});

  const Matrix& entries() const noexcept { return entries_; }
  Index counters() const noexcept { return entries_.rows(); }
  Index routes() const noexcept { return entries_.cols(); }
  std::size_t rank() const noexcept { return decomposition_.rank; }
  /// Dimension of the solution polytope for a generic y: n - rank.
  std::size_t polytope_dim() const noexcept {
    return static_cast<std::size_t>(routes()) - rank();
  }
  const Decomposition& decomposition() const noexcept { return decomposition_; }
  bool is_binary() const;

  /// Counters not used by the decomposition (linearly dependent on the others).
  std::vector<std::size_t> redundant_rows() const;
  /// The rank x n submatrix of independent rows, in ascending row order.
  Matrix independent_rows() const;

  const std::vector<std::string>& counter_names() const noexcept { return counter_names_; }
  const std::vector<std::string>& route_names() const noexcept { return route_names_; }

 private:
  Matrix entries_;
  std::vector<std::string> counter_names_;
  std::vector<std::string> route_names_;
  Decomposition decomposition_;
};

// ---------------------------------------------------------------------------
// Topologies

enum class TopologyKind { star, chain, two_router, custom };

/// Which per-node total a counter measures.
enum class Direction { outbound, inbound };

struct CounterRole {
  std::size_t node;
  Direction direction;
};

/// For each counter, the node total it carries (nullopt for router links).
using CounterMap = std::vector<std::optional<CounterRole>>;

/// Hosts (OD endpoints) attached to routers joined by bidirectional links.
///
/// Routes are all ordered host pairs (o, d), self pairs included, indexed
/// o * node_count + d. Counters are ordered: one outbound access counter per
/// host, one inbound access counter per host, then two counters per router
/// link (u->v, v->u) in link order. Traffic between routers follows the
/// BFS shortest path with lowest-index tie breaking.
struct Topology {
  TopologyKind kind = TopologyKind::custom;
  std::size_t node_count = 0;
  std::size_t router_count = 0;
  std::vector<std::size_t> host_router;
  std::vector<std::pair<std::size_t, std::size_t>> router_links;

  std::size_t route_count() const noexcept { return node_count * node_count; }
  std::size_t counter_count() const noexcept {
    return 2 * node_count + 2 * router_links.size();
  }
  CounterMap counter_map() const;
  std::vector<std::string> counter_names() const;
  std::vector<std::string> route_names() const;
};

Topology star_topology(std::size_t node_count);
Topology chain_topology(std::size_t node_count);
Topology two_router_topology(std::size_t nodes_router1, std::size_t nodes_router2);
/// Validates that the router graph is connected and every host has a router.
Topology custom_topology(std::vector<std::size_t> host_router, std::size_t router_count,
                         std::vector<std::pair<std::size_t, std::size_t>> router_links);

RoutingMatrix build_routing(const Topology& topology);
RoutingMatrix build_star(std::size_t node_count);
RoutingMatrix build_chain(std::size_t node_count);
RoutingMatrix build_two_router(std::size_t nodes_router1, std::size_t nodes_router2);

// ---------------------------------------------------------------------------
// Operations

/// y = A x. Throws ShapeMismatch when x has the wrong length.
Vector aggregate(const RoutingMatrix& a, const Vector& x);

struct UnimodularReport {
  bool unimodular = false;
  std::size_t minors_checked = 0;
  /// Columns of the first maximal minor whose determinant is outside {-1, 0, 1}.
  std::vector<std::size_t> violating_columns;
  long long violating_determinant = 0;
};

/// Exhaustive check that every maximal square minor has determinant in
/// {-1, 0, 1}. Requires an integer matrix of full row rank; throws
/// EnumerationTooLarge when C(n, m) exceeds max_minors.
UnimodularReport check_unimodular(const Matrix& a, std::size_t max_minors = 1'000'000);

/// True iff the rows of A together with all pairwise componentwise products
/// of distinct rows have full column rank.
bool check_identifiability(const Matrix& a);

/// Numerical row rank (complete-pivoting elimination, same tolerance as decompose).
std::size_t matrix_rank(const Matrix& a, double tol = 1e-10);

}  // namespace tomo
