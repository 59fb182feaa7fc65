// Copyright 2026 The pmcmc Authors.
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

#pragma once

#include <cstdint>
#include <random>

namespace pmcmc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the independent stream `(master, stream, index)`. Every worker
/// (machine, tree, trial) owns the stream derived from its id, so results do
/// not depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(master) ^ stream) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// Stream tags used by the experiment pipeline and the CLI. Keeping them in
/// one place lets the CLI subcommands reproduce pipeline results.
namespace streams {
inline constexpr std::uint64_t kData = 0x1001;
inline constexpr std::uint64_t kPartition = 0x1002;
inline constexpr std::uint64_t kMachine = 0x1003;
inline constexpr std::uint64_t kTuning = 0x1004;
inline constexpr std::uint64_t kCombine = 0x1005;
inline constexpr std::uint64_t kReference = 0x1006;
inline constexpr std::uint64_t kTree = 0x1007;
inline constexpr std::uint64_t kTreeRows = 0x1008;
}  // namespace streams

}  // namespace pmcmc
