#pragma once

#include "tomo/common.hpp"
#include "tomo/gssm.hpp"
#include "tomo/multilevel.hpp"
#include "tomo/network.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tomo {

/// Mean per-epoch L1 and L2 errors with standard errors (sd over epochs / sqrt(T)).
struct ErrorSummary {
  double mean_l1 = 0.0;
  double se_l1 = 0.0;
  double mean_l2 = 0.0;
  double se_l2 = 0.0;
};

ErrorSummary l_errors(const Matrix& x_hat, const Matrix& x_true);

/// Parses "star:4", "star4", "chain:3", "chain3" or "two_router:2,3".
Topology parse_topology(const std::string& spec);

/// Two-stage calibration: sliding-window SSM fit, per-epoch IPFP correction
/// with a running median, then prior schedules for the multilevel filter.
struct TwoStagePriors {
  SsmFit fit;
  Matrix corrected;  ///< smoothed, feasible-corrected SSM estimates
  PriorSchedule priors;
};

TwoStagePriors two_stage_priors(const Matrix& y, const Matrix& a, const SsmOptions& ssm, double rho, double tau,
                                std::size_t median_window = 5);

// ---------------------------------------------------------------------------
// Relative error of two-stage versus naive priors on simulated data

struct RelerrConfig {
  std::vector<std::string> topologies{"chain3", "star3", "star4"};
  std::size_t reps = 30;
  std::size_t epochs = 300;
  /// Autoregressive coefficient of the simulator and of both filters.
  double rho = 0.5;
  double tau = 2.0;
  double lambda0_median = 500.0;
  double lambda0_gsd = 6.0;
  FilterConfig filter;
  SsmOptions ssm;
  std::uint64_t seed = 1;
};

struct RelerrRow {
  std::string topology;
  std::size_t dim = 0;
  std::size_t rep = 0;
  std::string method;  ///< "naive" or "two_stage"
  ErrorSummary errors;
  double median_ess = 0.0;
};

struct RelerrResult {
  std::vector<RelerrRow> rows;
  /// Reps dropped after a filter or fit failure.
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
};

using ProgressCallback = std::function<void(const std::string&)>;

RelerrResult run_relerr_experiment(const RelerrConfig& config, const ProgressCallback& progress = {});

/// Per-rep naive / two-stage ratio of mean L2 error for one topology.
std::vector<double> relative_l2_errors(const RelerrResult& result, const std::string& topology);

void write_relerr_csv(const std::string& path, const RelerrResult& result);

// ---------------------------------------------------------------------------
// Star benchmark on a pool of OD series

struct StarBenchmarkConfig {
  std::vector<std::size_t> node_counts{3, 4, 5, 9};
  std::size_t reps = 10;
  double rho = 0.9;
  double tau = 2.0;
  FilterConfig filter;
  SsmOptions ssm;
  std::uint64_t seed = 1;
  /// How the pool was selected from the raw data, echoed into the output.
  std::string selection_rule = "user supplied";
};

struct StarBenchmarkRow {
  std::size_t run = 0;
  std::size_t nodes = 0;
  std::size_t rep = 0;
  std::string method;  ///< ipfp, gravity, gssm, naive, two_stage
  std::size_t dim = 0;
  double sparsity = 0.0;  ///< log10 of the mean fraction of routes not forced to zero
  ErrorSummary errors;
};

std::vector<StarBenchmarkRow> run_star_benchmark(const StarBenchmarkConfig& config, const Matrix& od_pool,
                                                 const ProgressCallback& progress = {});

/// log10 of the average (over epochs) fraction of routes not pinned to zero by a zero counter.
double sparsity_covariate(const Matrix& y, const RoutingMatrix& a);

void write_star_benchmark_csv(const std::string& path, const std::vector<StarBenchmarkRow>& rows,
                              const std::string& selection_rule);

/// Reads a JSON experiment config. Keys absent from the file keep their defaults.
RelerrConfig relerr_config_from_json(const std::string& path);
StarBenchmarkConfig star_config_from_json(const std::string& path);

}  // namespace tomo
