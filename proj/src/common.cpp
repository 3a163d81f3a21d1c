#include "tomo/common.hpp"

namespace tomo {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::uint64_t state = seed;
  const std::uint64_t a = splitmix64(state) ^ stream;
  state ^= a;
  const std::uint64_t b = splitmix64(state) ^ (substream * 0xD1B54A32D192ED03ULL);
  state ^= b;
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(splitmix64(state))};
  return Rng(seq);
}

}  // namespace tomo
