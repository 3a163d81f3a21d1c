#include "tomo/polytope.hpp"

#include "tomo/errors.hpp"

#include <algorithm>
#include <numeric>

namespace tomo {

// ---------------------------------------------------------------------------
// IPFP

IpfpResult ipfp(const Matrix& a, const Vector& y, const Vector& seed, const IpfpOptions& options) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (y.size() != m || seed.size() != n) throw ShapeMismatch("ipfp: y or seed has the wrong length");

  std::vector<std::vector<std::pair<Index, double>>> support(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (a(i, j) > 0.0) support[i].emplace_back(j, a(i, j));
    }
  }

  IpfpResult out;
  out.x = seed;
  for (Index i = 0; i < m; ++i) {
    if (y[i] < 0.0) throw NegativeEntry("ipfp: negative counter value");
    if (y[i] == 0.0) {
      for (const auto& [j, v] : support[i]) out.x[j] = 0.0;
    }
  }
  for (Index j = 0; j < n; ++j) {
    if (out.x[j] < 0.0) throw ValidationError("ipfp: seed must be nonnegative");
  }

  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::optional<Rng> shuffle;
  if (options.shuffle_seed) shuffle.emplace(*options.shuffle_seed);

  auto counter_sum = [&](Index i) {
    double s = 0.0;
    for (const auto& [j, v] : support[i]) s += v * out.x[j];
    return s;
  };
  auto measure = [&] {
    double worst = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (y[i] <= 0.0) continue;
      worst = std::max(worst, std::abs(counter_sum(i) - y[i]) / y[i]);
    }
    return worst;
  };

  out.violation = measure();
  if (out.violation < options.tol) {
    out.converged = true;
    return out;
  }
  for (std::size_t sweep = 1; sweep <= options.max_iter; ++sweep) {
    if (shuffle) std::shuffle(order.begin(), order.end(), *shuffle);
    for (Index i : order) {
      if (y[i] <= 0.0) continue;
      const double s = counter_sum(i);
      if (s <= 0.0) continue;
      const double factor = y[i] / s;
      for (const auto& [j, v] : support[i]) out.x[j] *= factor;
    }
    out.sweeps = sweep;
    out.violation = measure();
    if (out.violation < options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense two-phase simplex (Bland's rule) for the small feasibility programs
// used by feasible_point. Minimises cost'x subject to A x = b, x >= 0, b >= 0.

namespace {

class Simplex {
 public:
  Simplex(const Matrix& a, const Vector& b) : rows_(a.rows()), cols_(a.cols()) {
    table_ = Matrix::Zero(rows_ + 1, cols_ + rows_ + 1);
    table_.topLeftCorner(rows_, cols_) = a;
    table_.block(0, cols_, rows_, rows_).setIdentity();
    table_.col(rhs()).head(rows_) = b;
    basis_.resize(static_cast<std::size_t>(rows_));
    for (Index i = 0; i < rows_; ++i) basis_[i] = cols_ + i;
  }

  /// Phase one; false when the system is infeasible.
  bool phase_one() {
    table_.row(rows_).setZero();
    for (Index i = 0; i < rows_; ++i) table_.row(rows_) -= table_.row(i);
    table_.block(rows_, cols_, 1, rows_).setZero();
    iterate(cols_ + rows_);
    const double scale = 1.0 + table_.col(rhs()).head(rows_).cwiseAbs().maxCoeff();
    if (-table_(rows_, rhs()) > 1e-9 * scale) return false;
    // Drive remaining artificial variables out of the basis where possible.
    for (Index i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) continue;
      for (Index c = 0; c < cols_; ++c) {
        if (std::abs(table_(i, c)) > eps) {
          pivot(i, c);
          break;
        }
      }
    }
    return true;
  }

  /// Phase two over the original columns; false when unbounded.
  bool phase_two(const Vector& cost) {
    table_.row(rows_).setZero();
    table_.block(rows_, 0, 1, cols_) = cost.transpose();
    for (Index i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) table_.row(rows_) -= cost[basis_[i]] * table_.row(i);
    }
    return iterate(cols_);
  }

  Vector solution() const {
    Vector x = Vector::Zero(cols_);
    for (Index i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) x[basis_[i]] = table_(i, rhs());
    }
    return x;
  }

 private:
  static constexpr double eps = 1e-11;

  Index rhs() const { return cols_ + rows_; }

  bool iterate(Index allowed) {
    for (int guard = 0; guard < 100000; ++guard) {
      Index enter = -1;
      for (Index c = 0; c < allowed; ++c) {
        if (table_(rows_, c) < -eps) {
          enter = c;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best = 0.0;
      for (Index i = 0; i < rows_; ++i) {
        const double v = table_(i, enter);
        if (v <= eps) continue;
        const double ratio = table_(i, rhs()) / v;
        if (leave < 0 || ratio < best - eps || (ratio <= best + eps && basis_[i] < basis_[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    return true;
  }

  void pivot(Index r, Index c) {
    table_.row(r) /= table_(r, c);
    for (Index i = 0; i <= rows_; ++i) {
      if (i != r && table_(i, c) != 0.0) table_.row(i) -= table_(i, c) * table_.row(r);
    }
    basis_[r] = c;
  }

  Index rows_;
  Index cols_;
  Matrix table_;
  std::vector<Index> basis_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Polytope

Polytope::Polytope(std::shared_ptr<const RoutingMatrix> routing, Vector y)
    : routing_(std::move(routing)), y_(std::move(y)) {
  const Matrix& a = routing_->entries();
  if (y_.size() != a.rows()) throw ShapeMismatch("polytope: y has the wrong length");
  if ((y_.array() < 0.0).any()) throw NegativeEntry("polytope: negative counter value");

  std::vector<char> is_pinned(static_cast<std::size_t>(a.cols()), 0);
  for (Index i = 0; i < a.rows(); ++i) {
    if (y_[i] > 0.0) continue;
    for (Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) > 0.0) is_pinned[j] = 1;
    }
  }
  for (Index j = 0; j < a.cols(); ++j) {
    (is_pinned[j] ? pinned_ : free_).push_back(static_cast<std::size_t>(j));
  }

  std::vector<std::size_t> rows;
  if (pinned_.empty()) {
    const auto& dec = routing_->decomposition();
    rows = dec.rows;
    basic_.assign(dec.col_perm.begin(), dec.col_perm.begin() + static_cast<std::ptrdiff_t>(dec.rank));
    nonbasic_.assign(dec.col_perm.begin() + static_cast<std::ptrdiff_t>(dec.rank), dec.col_perm.end());
    a1_inv_ = dec.a1_inv;
    c_ = dec.c;
  } else if (!free_.empty()) {
    std::vector<std::size_t> live_rows;
    for (Index i = 0; i < a.rows(); ++i) {
      if (y_[i] > 0.0) live_rows.push_back(static_cast<std::size_t>(i));
    }
    Matrix sub(static_cast<Index>(live_rows.size()), static_cast<Index>(free_.size()));
    for (std::size_t i = 0; i < live_rows.size(); ++i) {
      for (std::size_t j = 0; j < free_.size(); ++j) {
        sub(static_cast<Index>(i), static_cast<Index>(j)) =
            a(static_cast<Index>(live_rows[i]), static_cast<Index>(free_[j]));
      }
    }
    const Decomposition dec = decompose(sub);
    for (auto r : dec.rows) rows.push_back(live_rows[r]);
    for (std::size_t k = 0; k < dec.col_perm.size(); ++k) {
      (k < dec.rank ? basic_ : nonbasic_).push_back(free_[dec.col_perm[k]]);
    }
    a1_inv_ = dec.a1_inv;
    c_ = dec.c;
  }

  const auto r = static_cast<Index>(rows.size());
  y_basic_.resize(r);
  a2_.resize(r, static_cast<Index>(nonbasic_.size()));
  for (Index i = 0; i < r; ++i) {
    y_basic_[i] = y_[static_cast<Index>(rows[i])];
    for (std::size_t k = 0; k < nonbasic_.size(); ++k) {
      a2_(i, static_cast<Index>(k)) = a(static_cast<Index>(rows[i]), static_cast<Index>(nonbasic_[k]));
    }
  }
}

double Polytope::violation(const Vector& x) const {
  const double residual = (routing_->entries() * x - y_).cwiseAbs().maxCoeff();
  return residual / (1.0 + y_.cwiseAbs().maxCoeff());
}

bool Polytope::contains(const Vector& x, double tol) const {
  if (x.size() != routes()) return false;
  return x.minCoeff() >= -1e-12 && violation(x) <= tol;
}

void Polytope::project(Vector& x) const {
  for (auto j : pinned_) x[static_cast<Index>(j)] = 0.0;
  if (basic_.empty()) return;
  Vector x2(static_cast<Index>(nonbasic_.size()));
  for (std::size_t k = 0; k < nonbasic_.size(); ++k) {
    x2[static_cast<Index>(k)] = std::max(0.0, x[static_cast<Index>(nonbasic_[k])]);
    x[static_cast<Index>(nonbasic_[k])] = x2[static_cast<Index>(k)];
  }
  const Vector x1 = a1_inv_ * (y_basic_ - a2_ * x2);
  for (std::size_t k = 0; k < basic_.size(); ++k) {
    x[static_cast<Index>(basic_[k])] = std::max(0.0, x1[static_cast<Index>(k)]);
  }
}

ChordBounds Polytope::chord(const Vector& x, const Vector& d, const Vector& w) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double h = inf;
  double l = -inf;
  for (std::size_t k = 0; k < basic_.size(); ++k) {
    const double wk = w[static_cast<Index>(k)];
    const double xk = x[static_cast<Index>(basic_[k])];
    if (wk > 0.0) {
      h = std::min(h, xk / wk);
    } else if (wk < 0.0) {
      l = std::max(l, xk / wk);
    }
  }
  for (std::size_t k = 0; k < nonbasic_.size(); ++k) {
    const double dk = d[static_cast<Index>(k)];
    const double xk = x[static_cast<Index>(nonbasic_[k])];
    if (dk < 0.0) {
      h = std::min(h, -xk / dk);
    } else if (dk > 0.0) {
      l = std::max(l, -xk / dk);
    }
  }
  return ChordBounds{std::min(l, 0.0), std::max(h, 0.0)};
}

Vector Polytope::vertex() const {
  Vector x = Vector::Zero(routes());
  if (basic_.empty()) return x;
  const Vector x1 = a1_inv_ * y_basic_;
  for (std::size_t k = 0; k < basic_.size(); ++k) x[static_cast<Index>(basic_[k])] = x1[static_cast<Index>(k)];
  return x;
}

namespace {

bool strictly_positive_on(const Vector& x, const std::vector<std::size_t>& idx) {
  return std::all_of(idx.begin(), idx.end(), [&](std::size_t j) { return x[static_cast<Index>(j)] > 0.0; });
}

// max t  s.t.  A_live (z + t 1) = y_live, z >= 0, t >= 0 over the free routes.
Vector max_min_coordinate_point(const Polytope& p) {
  const Matrix& a = p.routing().entries();
  const auto& free = p.free_routes();
  std::vector<Index> live;
  for (Index i = 0; i < a.rows(); ++i) {
    if (p.y()[i] > 0.0) live.push_back(i);
  }
  const auto q = static_cast<Index>(free.size());
  Matrix lp(static_cast<Index>(live.size()), q + 1);
  Vector b(static_cast<Index>(live.size()));
  const double scale = std::max(1e-300, p.y().maxCoeff());
  for (std::size_t i = 0; i < live.size(); ++i) {
    double row_sum = 0.0;
    for (Index j = 0; j < q; ++j) {
      const double v = a(live[i], static_cast<Index>(free[static_cast<std::size_t>(j)]));
      lp(static_cast<Index>(i), j) = v;
      row_sum += v;
    }
    lp(static_cast<Index>(i), q) = row_sum;
    b[static_cast<Index>(i)] = p.y()[live[i]] / scale;
  }
  Simplex simplex(lp, b);
  if (!simplex.phase_one()) throw Infeasible("counter values are inconsistent with the routing matrix");
  Vector cost = Vector::Zero(q + 1);
  cost[q] = -1.0;
  simplex.phase_two(cost);
  const Vector sol = simplex.solution();
  Vector x = Vector::Zero(p.routes());
  for (Index j = 0; j < q; ++j) {
    x[static_cast<Index>(free[static_cast<std::size_t>(j)])] = (sol[j] + sol[q]) * scale;
  }
  return x;
}

}  // namespace

Vector feasible_point(const Polytope& p, const Vector& seed) {
  const Index n = p.routes();
  if (p.free_routes().empty()) {
    Vector x = Vector::Zero(n);
    if (!p.contains(x)) throw Infeasible("counter values are inconsistent with the routing matrix");
    return x;
  }
  if (p.dim() == 0) {
    Vector x = p.vertex();
    if (x.minCoeff() < -1e-9 * (1.0 + p.y().maxCoeff()) || !p.contains(x.cwiseMax(0.0))) {
      throw Infeasible("counter values are inconsistent with the routing matrix");
    }
    return x.cwiseMax(0.0);
  }

  Vector start = seed.size() == n ? seed : Vector::Ones(n);
  const double floor = 1e-9 * std::max(1.0, p.y().maxCoeff());
  start = start.cwiseMax(floor);
  IpfpOptions options;
  options.max_iter = 2000;
  options.tol = 1e-12;
  const IpfpResult fit = ipfp(p.routing().entries(), p.y(), start, options);
  if (fit.converged && strictly_positive_on(fit.x, p.free_routes())) {
    Vector x = fit.x;
    p.project(x);
    if (strictly_positive_on(x, p.free_routes()) && p.contains(x)) return x;
  }

  Vector x = max_min_coordinate_point(p);
  p.project(x);
  if (!p.contains(x)) throw Infeasible("no feasible point found within tolerance");
  return x;
}

bool RdaSampler::draw_chord(const Vector& x, ChordBounds& bounds, Rng& rng) {
  const auto k = static_cast<Index>(p_->dim());
  for (int attempt = 0; attempt < max_direction_draws; ++attempt) {
    double norm2 = 0.0;
    for (Index i = 0; i < k; ++i) {
      d_[i] = normal_(rng);
      norm2 += d_[i] * d_[i];
    }
    if (norm2 == 0.0) continue;
    d_ /= std::sqrt(norm2);
    w_.noalias() = p_->c() * d_;
    bounds = p_->chord(x, d_, w_);
    if (std::isfinite(bounds.l) && std::isfinite(bounds.h) && bounds.h - bounds.l >= min_chord) return true;
  }
  return false;
}

Vector sample_truncated_normal_polytope(const Polytope& p, const Vector& mean, const Vector& cov_diag,
                                        std::size_t steps, const Vector& init, Rng& rng) {
  if (mean.size() != p.routes() || cov_diag.size() != p.routes() || init.size() != p.routes()) {
    throw ShapeMismatch("sample_truncated_normal_polytope: vector length mismatch");
  }
  if ((cov_diag.array() <= 0.0).any()) throw ValidationError("covariance diagonal must be positive");
  const Vector inv_cov = cov_diag.cwiseInverse();
  auto log_density = [&](const Vector& x) {
    return -0.5 * ((x - mean).array().square() * inv_cov.array()).sum();
  };
  Vector x = init;
  if (steps == 0) return x;
  double log_fx = log_density(x);
  RdaSampler sampler(p);
  for (std::size_t s = 0; s < steps; ++s) sampler.step(x, log_fx, log_density, rng);
  return x;
}

}  // namespace tomo
