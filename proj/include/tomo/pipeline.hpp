#pragma once

#include "tomo/calibrate.hpp"
#include "tomo/common.hpp"
#include "tomo/gssm.hpp"
#include "tomo/multilevel.hpp"
#include "tomo/network.hpp"
#include "tomo/simstudy.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tomo {

inline constexpr const char* kVersion = "0.1.0";

/// Counter readings, routing matrix and optional OD truth, aligned by name.
struct Dataset {
  std::shared_ptr<const RoutingMatrix> routing;
  Matrix y;                     ///< T x m
  std::optional<Matrix> truth;  ///< T x n
  std::string routing_path;
  std::string links_path;
  std::string truth_path;
};

struct IngestReport {
  std::size_t epochs = 0;
  std::size_t counters = 0;
  std::size_t routes = 0;
  std::size_t rank = 0;
  std::size_t polytope_dim = 0;
  bool identifiable = false;  ///< rows plus pairwise row products have full column rank
  /// Worst per-epoch ||A x_true - y||_inf / (1 + ||y||_inf), when truth is given.
  double truth_violation = 0.0;
  std::vector<std::size_t> violating_epochs;  ///< 0-based, relative violation > 1e-6
  std::vector<std::string> warnings;
};

/// Reads and validates the inputs. Link columns are matched to counter names
/// and truth columns to route names when both sides carry names; otherwise
/// only the counts must agree. Throws ShapeMismatch or NegativeEntry.
Dataset ingest(const std::string& routing_path, const std::string& links_path, const std::string& truth_path,
               IngestReport& report);

/// Counter map CSV with columns counter,node,direction (outbound|inbound).
/// `counter` is a counter name or a 0-based index; unlisted counters are router links.
struct CounterMapFile {
  CounterMap map;
  std::size_t node_count = 0;
};
CounterMapFile read_counter_map_csv(const std::string& path, const RoutingMatrix& routing);

enum class Stage1 { ssm, gravity, naive };
Stage1 parse_stage1(const std::string& text);
std::string to_string(Stage1 stage);

struct RunConfig {
  Stage1 stage1 = Stage1::ssm;
  double rho = 0.9;
  double tau = 2.0;
  /// Gamma shape of the phi prior; n / 2 when unset.
  std::optional<double> alpha;
  std::size_t median_window = 5;
  FilterConfig filter;
  SsmOptions ssm;
  /// Source of node totals for the gravity stage: a topology spec or a counter map CSV.
  std::string topology;
  std::string counter_map;
  bool dump_particles = false;
};

struct RunOutputs {
  PosteriorSummary posterior;
  PriorSchedule priors;
  std::optional<ErrorSummary> errors;
  std::vector<std::string> files;
};

/// Stage 1, calibration and the filter; writes estimates.csv, diagnostics.csv,
/// priors.csv, priors.json, metrics.csv (with truth), ssm_fit.csv (ssm stage)
/// and particles.bin (when requested) into out_dir.
RunOutputs run_pipeline(const Dataset& data, const RunConfig& config, const std::string& out_dir);

/// Node totals source for gravity-type methods.
CounterMapFile resolve_counter_map(const Dataset& data, const std::string& topology, const std::string& counter_map);

enum class BaselineMethod { ipfp, gravity, tomogravity };
BaselineMethod parse_baseline(const std::string& text);

/// Writes estimates.csv (point schema) and metrics.csv (with truth).
Matrix run_baseline(const Dataset& data, BaselineMethod method, const CounterMapFile& totals, double lam,
                    const std::string& out_dir, std::optional<ErrorSummary>& errors);

void write_metrics_csv(const std::string& path, const std::string& method, const ErrorSummary& errors);

// ---------------------------------------------------------------------------
// Manifest

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t value);
/// FNV-1a of a file's contents; empty string when the path is empty.
std::string file_digest(const std::string& path);

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

struct Manifest {
  std::string command;
  std::string routing_path;
  std::string links_path;
  std::string truth_path;
  std::string out_dir;
  RunConfig config;
};

void write_manifest(const std::string& path, const Manifest& manifest, const std::vector<std::string>& outputs);
Manifest read_manifest(const std::string& path);

}  // namespace tomo
