#include "tomo/network.hpp"

#include "tomo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace tomo {

Decomposition decompose(const Matrix& entries, double tol) {
  const Index m = entries.rows();
  const Index n = entries.cols();
  Decomposition out;
  if (m == 0 || n == 0) return out;

  const double scale = entries.cwiseAbs().maxCoeff();
  if (scale == 0.0) throw ValidationError("decompose: matrix has no nonzero entry");
  const double threshold = tol * scale;

  Matrix work = entries;
  std::vector<char> row_used(static_cast<std::size_t>(m), 0);
  std::vector<char> col_used(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> pivot_cols;

  for (Index step = 0; step < std::min(m, n); ++step) {
    Index best_r = -1;
    Index best_c = -1;
    double best = threshold;
    for (Index c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      for (Index r = 0; r < m; ++r) {
        if (row_used[r]) continue;
        const double v = std::abs(work(r, c));
        if (v > best) {
          best = v;
          best_r = r;
          best_c = c;
        }
      }
    }
    if (best_r < 0) break;
    row_used[best_r] = 1;
    col_used[best_c] = 1;
    out.rows.push_back(static_cast<std::size_t>(best_r));
    pivot_cols.push_back(static_cast<std::size_t>(best_c));
    const double pivot = work(best_r, best_c);
    for (Index r = 0; r < m; ++r) {
      if (row_used[r]) continue;
      const double factor = work(r, best_c) / pivot;
      if (factor != 0.0) work.row(r) -= factor * work.row(best_r);
    }
  }

  out.rank = pivot_cols.size();
  out.col_perm = pivot_cols;
  for (Index c = 0; c < n; ++c) {
    if (!col_used[c]) out.col_perm.push_back(static_cast<std::size_t>(c));
  }

  const auto r = static_cast<Index>(out.rank);
  Matrix a1(r, r);
  Matrix a2(r, n - r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double v = entries(static_cast<Index>(out.rows[i]), static_cast<Index>(out.col_perm[j]));
      if (j < r) {
        a1(i, j) = v;
      } else {
        a2(i, j - r) = v;
      }
    }
  }
  out.a1_inv = a1.fullPivLu().inverse();
  out.c = out.a1_inv * a2;
  return out;
}

std::size_t matrix_rank(const Matrix& a, double tol) {
  if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return 0;
  return decompose(a, tol).rank;
}

// ---------------------------------------------------------------------------

RoutingMatrix::RoutingMatrix(Matrix entries, std::vector<std::string> counter_names,
                             std::vector<std::string> route_names)
    : entries_(std::move(entries)),
      counter_names_(std::move(counter_names)),
      route_names_(std::move(route_names)) {
  if (entries_.rows() == 0 || entries_.cols() == 0) {
    throw ValidationError("routing matrix is empty");
  }
  for (Index j = 0; j < entries_.cols(); ++j) {
    bool seen = false;
    for (Index i = 0; i < entries_.rows(); ++i) {
      const double v = entries_(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        std::ostringstream msg;
        msg << "routing entry (" << i << ", " << j << ") = " << v << " outside [0, 1]";
        throw ValidationError(msg.str());
      }
      seen = seen || v > 0.0;
    }
    if (!seen) {
      throw ValidationError("route " + std::to_string(j) + " is not observed by any counter");
    }
  }
  if (counter_names_.empty()) {
    for (Index i = 0; i < counters(); ++i) counter_names_.push_back("c" + std::to_string(i));
  }
  if (route_names_.empty()) {
    for (Index j = 0; j < routes(); ++j) route_names_.push_back("r" + std::to_string(j));
  }
  if (static_cast<Index>(counter_names_.size()) != counters() ||
      static_cast<Index>(route_names_.size()) != routes()) {
    throw ShapeMismatch("routing matrix names do not match its shape");
  }
  decomposition_ = decompose(entries_);
}

bool RoutingMatrix::is_binary() const {
  return (entries_.array() == 0.0 || entries_.array() == 1.0).all();
}

std::vector<std::size_t> RoutingMatrix::redundant_rows() const {
  std::vector<char> used(static_cast<std::size_t>(counters()), 0);
  for (auto r : decomposition_.rows) used[r] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) out.push_back(i);
  }
  return out;
}

Matrix RoutingMatrix::independent_rows() const {
  auto rows = decomposition_.rows;
  std::sort(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(rows.size()), routes());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = entries_.row(static_cast<Index>(rows[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Router sequence from `from` to `to` along a BFS shortest path.
std::vector<std::size_t> router_path(const Topology& t, std::size_t from, std::size_t to) {
  std::vector<std::vector<std::size_t>> adj(t.router_count);
  for (const auto& [u, v] : t.router_links) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> parent(t.router_count, none);
  std::deque<std::size_t> queue{from};
  parent[from] = from;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    if (u == to) break;
    for (auto v : adj[u]) {
      if (parent[v] == none) {
        parent[v] = u;
        queue.push_back(v);
      }
    }
  }
  if (parent[to] == none) throw ValidationError("router graph is disconnected");
  std::vector<std::size_t> path{to};
  while (path.back() != from) path.push_back(parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

CounterMap Topology::counter_map() const {
  CounterMap map;
  for (std::size_t v = 0; v < node_count; ++v) map.push_back(CounterRole{v, Direction::outbound});
  for (std::size_t v = 0; v < node_count; ++v) map.push_back(CounterRole{v, Direction::inbound});
  for (std::size_t l = 0; l < 2 * router_links.size(); ++l) map.push_back(std::nullopt);
  return map;
}

std::vector<std::string> Topology::counter_names() const {
  std::vector<std::string> names;
  for (std::size_t v = 0; v < node_count; ++v) names.push_back("out" + std::to_string(v));
  for (std::size_t v = 0; v < node_count; ++v) names.push_back("in" + std::to_string(v));
  for (const auto& [u, v] : router_links) {
    names.push_back("link" + std::to_string(u) + "-" + std::to_string(v));
    names.push_back("link" + std::to_string(v) + "-" + std::to_string(u));
  }
  return names;
}

std::vector<std::string> Topology::route_names() const {
  std::vector<std::string> names;
  for (std::size_t o = 0; o < node_count; ++o) {
    for (std::size_t d = 0; d < node_count; ++d) {
      names.push_back(std::to_string(o) + "->" + std::to_string(d));
    }
  }
  return names;
}

Topology custom_topology(std::vector<std::size_t> host_router, std::size_t router_count,
                         std::vector<std::pair<std::size_t, std::size_t>> router_links) {
  if (host_router.empty()) throw ValidationError("topology needs at least one host");
  if (router_count == 0) throw ValidationError("topology needs at least one router");
  for (auto r : host_router) {
    if (r >= router_count) throw ValidationError("host attached to unknown router");
  }
  for (const auto& [u, v] : router_links) {
    if (u >= router_count || v >= router_count || u == v) {
      throw ValidationError("invalid router link");
    }
  }
  Topology t;
  t.kind = TopologyKind::custom;
  t.node_count = host_router.size();
  t.router_count = router_count;
  t.host_router = std::move(host_router);
  t.router_links = std::move(router_links);
  for (std::size_t r = 1; r < router_count; ++r) router_path(t, 0, r);
  return t;
}

Topology star_topology(std::size_t node_count) {
  if (node_count < 2) throw ValidationError("star topology needs at least 2 nodes");
  Topology t = custom_topology(std::vector<std::size_t>(node_count, 0), 1, {});
  t.kind = TopologyKind::star;
  return t;
}

Topology chain_topology(std::size_t node_count) {
  if (node_count < 2) throw ValidationError("chain topology needs at least 2 nodes");
  std::vector<std::size_t> hosts(node_count);
  std::iota(hosts.begin(), hosts.end(), std::size_t{0});
  std::vector<std::pair<std::size_t, std::size_t>> links;
  for (std::size_t i = 0; i + 1 < node_count; ++i) links.emplace_back(i, i + 1);
  Topology t = custom_topology(std::move(hosts), node_count, std::move(links));
  t.kind = TopologyKind::chain;
  return t;
}

Topology two_router_topology(std::size_t nodes_router1, std::size_t nodes_router2) {
  if (nodes_router1 < 1 || nodes_router2 < 1) {
    throw ValidationError("two-router topology needs at least one node per router");
  }
  std::vector<std::size_t> hosts(nodes_router1, 0);
  hosts.insert(hosts.end(), nodes_router2, 1);
  Topology t = custom_topology(std::move(hosts), 2, {{0, 1}});
  t.kind = TopologyKind::two_router;
  return t;
}

RoutingMatrix build_routing(const Topology& t) {
  const std::size_t d = t.node_count;
  Matrix a = Matrix::Zero(static_cast<Index>(t.counter_count()), static_cast<Index>(t.route_count()));
  const auto link_base = static_cast<Index>(2 * d);
  for (std::size_t o = 0; o < d; ++o) {
    for (std::size_t dest = 0; dest < d; ++dest) {
      const auto j = static_cast<Index>(o * d + dest);
      a(static_cast<Index>(o), j) = 1.0;
      a(static_cast<Index>(d + dest), j) = 1.0;
      const auto path = router_path(t, t.host_router[o], t.host_router[dest]);
      for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        const auto u = path[k];
        const auto v = path[k + 1];
        for (std::size_t l = 0; l < t.router_links.size(); ++l) {
          const auto& link = t.router_links[l];
          if (link.first == u && link.second == v) a(link_base + static_cast<Index>(2 * l), j) = 1.0;
          if (link.first == v && link.second == u) a(link_base + static_cast<Index>(2 * l + 1), j) = 1.0;
        }
      }
    }
  }
  return RoutingMatrix(std::move(a), t.counter_names(), t.route_names());
}

RoutingMatrix build_star(std::size_t node_count) { return build_routing(star_topology(node_count)); }

RoutingMatrix build_chain(std::size_t node_count) { return build_routing(chain_topology(node_count)); }

RoutingMatrix build_two_router(std::size_t nodes_router1, std::size_t nodes_router2) {
  return build_routing(two_router_topology(nodes_router1, nodes_router2));
}

// ---------------------------------------------------------------------------

Vector aggregate(const RoutingMatrix& a, const Vector& x) {
  if (x.size() != a.routes()) {
    throw ShapeMismatch("aggregate: x has length " + std::to_string(x.size()) + ", expected " +
                        std::to_string(a.routes()));
  }
  return a.entries() * x;
}

namespace {

// Fraction-free Gaussian elimination; exact for integer input.
long long bareiss_determinant(std::vector<long long> m, std::size_t k) {
  if (k == 0) return 1;
  int sign = 1;
  __int128 prev = 1;
  for (std::size_t p = 0; p + 1 < k; ++p) {
    if (m[p * k + p] == 0) {
      std::size_t swap_row = p + 1;
      while (swap_row < k && m[swap_row * k + p] == 0) ++swap_row;
      if (swap_row == k) return 0;
      for (std::size_t c = 0; c < k; ++c) std::swap(m[p * k + c], m[swap_row * k + c]);
      sign = -sign;
    }
    for (std::size_t r = p + 1; r < k; ++r) {
      for (std::size_t c = p + 1; c < k; ++c) {
        const __int128 v = static_cast<__int128>(m[r * k + c]) * m[p * k + p] -
                           static_cast<__int128>(m[r * k + p]) * m[p * k + c];
        m[r * k + c] = static_cast<long long>(v / prev);
      }
      m[r * k + p] = 0;
    }
    prev = m[p * k + p];
  }
  return sign * m[(k - 1) * k + (k - 1)];
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double out = 1.0;
  for (std::size_t i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return out;
}

}  // namespace

UnimodularReport check_unimodular(const Matrix& a, std::size_t max_minors) {
  const auto m = static_cast<std::size_t>(a.rows());
  const auto n = static_cast<std::size_t>(a.cols());
  if (m == 0 || n < m) throw ValidationError("check_unimodular: need a nonempty m x n matrix with m <= n");
  std::vector<long long> ints(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a(static_cast<Index>(i), static_cast<Index>(j));
      if (v != std::round(v)) {
        throw ValidationError("check_unimodular: entries must be integers");
      }
      ints[i * n + j] = static_cast<long long>(std::llround(v));
    }
  }
  if (matrix_rank(a) != m) throw ValidationError("check_unimodular: matrix must have full row rank");
  if (binomial(n, m) > static_cast<double>(max_minors)) {
    throw EnumerationTooLarge("check_unimodular: " + std::to_string(binomial(n, m)) +
                              " maximal minors exceed the cap of " + std::to_string(max_minors));
  }

  UnimodularReport report;
  std::vector<std::size_t> cols(m);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  std::vector<long long> minor(m * m);
  while (true) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) minor[i * m + j] = ints[i * n + cols[j]];
    }
    const long long det = bareiss_determinant(minor, m);
    ++report.minors_checked;
    if (det < -1 || det > 1) {
      report.unimodular = false;
      report.violating_columns = cols;
      report.violating_determinant = det;
      return report;
    }
    // Next combination in lexicographic order.
    std::size_t i = m;
    while (i > 0 && cols[i - 1] == n - m + (i - 1)) --i;
    if (i == 0) break;
    ++cols[i - 1];
    for (std::size_t k = i; k < m; ++k) cols[k] = cols[k - 1] + 1;
  }
  report.unimodular = true;
  return report;
}

bool check_identifiability(const Matrix& a) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (n == 0) return true;
  Matrix b(m + m * (m - 1) / 2, n);
  Index row = 0;
  for (Index i = 0; i < m; ++i) b.row(row++) = a.row(i);
  for (Index i = 0; i < m; ++i) {
    for (Index k = i + 1; k < m; ++k) b.row(row++) = a.row(i).cwiseProduct(a.row(k));
  }
  return matrix_rank(b) == static_cast<std::size_t>(n);
}

}  // namespace tomo
