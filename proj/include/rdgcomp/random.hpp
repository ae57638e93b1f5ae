// Copyright 2026 The rdgcomp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RDGCOMP_RANDOM_HPP
#define RDGCOMP_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace rdg {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed splitting rule used everywhere randomness is consumed:
///
///   child = mix64(mix64(parent ^ mix64(tag)) + index)
///
/// `tag` names the stage (see SeedTag) and `index` the unit within it
/// (replicate, resample, path block, patient). Every parallel unit owns its
/// child seed, so results do not depend on the schedule.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(parent ^ mix64(tag)) + index);
}

enum SeedTag : std::uint64_t {
  kTagPaths = 1,        // Monte Carlo path blocks inside gcomp_survival
  kTagBootstrap = 2,    // one substream per bootstrap resample
  kTagPartition = 3,    // random patient partitions
  kTagAnalysis = 4,     // point-estimate analysis under a resample
  kTagSimPatient = 5,   // simulate_dataset: one substream per patient
  kTagTruth = 6,        // counterfactual_truth path blocks
  kTagReplicate = 7,    // simulation-study replications
  kTagBrand = 8,
  kTagGeneric = 9,
  kTagGoodnessOfFit = 10,
  kTagBandwidth = 11,
};

inline Rng make_rng(std::uint64_t parent, std::uint64_t tag,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(parent, tag, index));
}

/// Uniform draw on [0, 1).
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Runs fn(0..n-1) on up to `jobs` threads. Each index is executed exactly
/// once; callers write results into per-index slots. The first exception
/// thrown by any task is rethrown after all threads join.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace rdg

#endif  // RDGCOMP_RANDOM_HPP
