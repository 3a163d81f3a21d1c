#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>

namespace tomo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Independent generator for a (seed, stream, substream) triple. Results do
/// not depend on which thread consumes the stream.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

}  // namespace tomo
