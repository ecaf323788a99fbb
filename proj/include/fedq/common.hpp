#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedq {

enum class ErrorCode {
  FileUnreadable,
  SchemaMismatch,
  EmptyDataset,
  TooFewSamples,
  EmptyCluster,
  InvalidSpec,
  DimensionMismatch,
  ZeroTotalWeight,
  AllZeroRow,
  EmptyPosteriors,
  ShapeMismatch,
  EmptyBuffer,
  ConfigInvalid,
  NumericalFailure,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-seeds from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t root, Tags... tags) {
  std::uint64_t s = mix64(root);
  ((s = mix64(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

// Stream tags for the per-subsystem seed split.
enum class SeedStream : std::uint64_t {
  Partition = 0x5041,
  Learner = 0x4c45,
  Dqn = 0x4451,
  Selection = 0x5345,
  Minibatch = 0x4d42,
  Replay = 0x5250,
};

inline std::uint64_t stream_seed(std::uint64_t root, SeedStream s) {
  return derive_seed(root, static_cast<std::uint64_t>(s));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace fedq
