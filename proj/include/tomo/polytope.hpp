#pragma once

#include "tomo/common.hpp"
#include "tomo/network.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace tomo {

// ---------------------------------------------------------------------------
// IPFP

struct IpfpOptions {
  std::size_t max_iter = 1000;
  double tol = 1e-10;
  /// When set, each sweep visits constraints in a shuffled order drawn from
  /// this seed instead of ascending counter index.
  std::optional<std::uint64_t> shuffle_seed;
};

struct IpfpResult {
  Vector x;
  /// max_i |(Ax)_i - y_i| / y_i over counters with y_i > 0.
  double violation = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Iterative proportional fitting: cyclic multiplicative scaling of the routes
/// covered by each counter until every counter matches. Routes covered by a
/// zero counter are zeroed before the first sweep.
IpfpResult ipfp(const Matrix& a, const Vector& y, const Vector& seed, const IpfpOptions& options = {});

// ---------------------------------------------------------------------------
// Polytope

/// Feasible step interval along a chord direction; l <= 0 <= h.
struct ChordBounds {
  double l = 0.0;
  double h = 0.0;
};

/// The feasible set {x >= 0 : A x = y} in chord-walk form.
///
/// Routes covered by a zero counter are pinned at 0 and excluded from the
/// walk. The remaining routes split into `basic` (columns of A1) and
/// `nonbasic` (free coordinates); x_basic = A1^-1 (y_r - A2 x_nonbasic).
class Polytope {
 public:
  Polytope(std::shared_ptr<const RoutingMatrix> routing, Vector y);

  const RoutingMatrix& routing() const noexcept { return *routing_; }
  const Vector& y() const noexcept { return y_; }
  std::size_t dim() const noexcept { return nonbasic_.size(); }
  Index routes() const noexcept { return routing_->routes(); }

  const std::vector<std::size_t>& basic() const noexcept { return basic_; }
  const std::vector<std::size_t>& nonbasic() const noexcept { return nonbasic_; }
  const std::vector<std::size_t>& pinned() const noexcept { return pinned_; }
  /// Free coordinates: all routes not pinned to zero.
  const std::vector<std::size_t>& free_routes() const noexcept { return free_; }
  const Matrix& c() const noexcept { return c_; }

  /// ||A x - y||_inf / (1 + ||y||_inf) over all counters.
  double violation(const Vector& x) const;
  /// Feasibility invariant: x >= -1e-12 and violation <= tol.
  bool contains(const Vector& x, double tol = 1e-8) const;

  /// Recomputes x_basic from x_nonbasic and clamps round-off negatives.
  void project(Vector& x) const;

  /// Step interval along nonbasic direction d with basic response w = C d.
  ChordBounds chord(const Vector& x, const Vector& d, const Vector& w) const;

  /// The unique point when dim() == 0 (basic solution with pinned zeros).
  Vector vertex() const;

 private:
  std::shared_ptr<const RoutingMatrix> routing_;
  Vector y_;
  std::vector<std::size_t> pinned_;
  std::vector<std::size_t> free_;
  std::vector<std::size_t> basic_;
  std::vector<std::size_t> nonbasic_;
  Vector y_basic_;
  Matrix a1_inv_;
  Matrix a2_;
  Matrix c_;
};

/// A strictly positive feasible point when one exists (interior when dim > 0).
/// Tries IPFP from `seed` (uniform when empty) and falls back to a
/// max-min-coordinate linear program. Throws Infeasible when y is
/// inconsistent with A.
Vector feasible_point(const Polytope& p, const Vector& seed = Vector());

// ---------------------------------------------------------------------------
// Random directions sampler

/// Metropolis random-directions kernel on a polytope.
///
/// Holds work buffers so repeated steps do not allocate. One instance per
/// chain; not thread safe.
class RdaSampler {
 public:
  static constexpr double min_chord = 1e-14;
  static constexpr int max_direction_draws = 100;

  explicit RdaSampler(const Polytope& p) : p_(&p), d_(p.dim()), w_(p.basic().size()), proposal_() {}

  /// One step targeting exp(log_density). `log_fx` caches log_density(x) and
  /// is updated on acceptance. Returns whether the proposal was accepted.
  template <typename LogDensity>
  bool step(Vector& x, double& log_fx, LogDensity&& log_density, Rng& rng);

  std::size_t steps() const noexcept { return steps_; }
  std::size_t accepted() const noexcept { return accepted_; }

 private:
  bool draw_chord(const Vector& x, ChordBounds& bounds, Rng& rng);

  const Polytope* p_;
  Vector d_;
  Vector w_;
  Vector proposal_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::size_t steps_ = 0;
  std::size_t accepted_ = 0;
  std::size_t since_projection_ = 0;
};

template <typename LogDensity>
bool RdaSampler::step(Vector& x, double& log_fx, LogDensity&& log_density, Rng& rng) {
  ++steps_;
  if (p_->dim() == 0) {
    ++accepted_;
    return true;
  }
  ChordBounds bounds;
  if (!draw_chord(x, bounds, rng)) return false;
  const double u = std::uniform_real_distribution<double>(bounds.l, bounds.h)(rng);

  proposal_ = x;
  const auto& basic = p_->basic();
  const auto& nonbasic = p_->nonbasic();
  for (std::size_t k = 0; k < nonbasic.size(); ++k) {
    proposal_[static_cast<Index>(nonbasic[k])] += u * d_[static_cast<Index>(k)];
  }
  for (std::size_t k = 0; k < basic.size(); ++k) {
    proposal_[static_cast<Index>(basic[k])] -= u * w_[static_cast<Index>(k)];
  }
  for (auto j : nonbasic) proposal_[static_cast<Index>(j)] = std::max(0.0, proposal_[static_cast<Index>(j)]);
  for (auto j : basic) proposal_[static_cast<Index>(j)] = std::max(0.0, proposal_[static_cast<Index>(j)]);
  if (++since_projection_ >= 64) {
    p_->project(proposal_);
    since_projection_ = 0;
  }

  const double log_fp = log_density(static_cast<const Vector&>(proposal_));
  const double log_ratio = log_fp - log_fx;
  bool accept = log_ratio >= 0.0;
  if (!accept && std::isfinite(log_fp)) {
    accept = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio;
  }
  if (accept) {
    x.swap(proposal_);
    log_fx = log_fp;
    ++accepted_;
  }
  return accept;
}

struct RdaStep {
  Vector x;
  bool accepted = false;
};

/// Single random-directions step from a feasible x (convenience wrapper).
template <typename LogDensity>
RdaStep rda_step(const Polytope& p, const Vector& x, LogDensity&& log_density, Rng& rng) {
  RdaSampler sampler(p);
  RdaStep out{x, false};
  double log_fx = log_density(static_cast<const Vector&>(out.x));
  out.accepted = sampler.step(out.x, log_fx, log_density, rng);
  return out;
}

/// Runs `steps` random-directions steps targeting the diagonal Gaussian
/// N(mean, diag(cov_diag)) restricted to the polytope, starting from `init`.
Vector sample_truncated_normal_polytope(const Polytope& p, const Vector& mean, const Vector& cov_diag,
                                        std::size_t steps, const Vector& init, Rng& rng);

}  // namespace tomo
