// Copyright 2026 The CPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CPA_CORE_RNG_HPP_
#define CPA_CORE_RNG_HPP_

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

namespace cpa {

// splitmix64 finalizer; mixes a stream tag into a seed so that independent
// random streams (data order, augmentation, init) never share state.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) {
  for (auto tag : tags) seed = mix_seed(seed, tag);
  return seed;
}

// Stream tags. Values are part of the determinism contract; do not renumber.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kAdversary = 4;
inline constexpr std::uint64_t kHead = 5;
inline constexpr std::uint64_t kSplit = 6;
inline constexpr std::uint64_t kSynthetic = 7;
inline constexpr std::uint64_t kAttack = 8;
inline constexpr std::uint64_t kDefense = 9;
inline constexpr std::uint64_t kShadow = 10;
inline constexpr std::uint64_t kSubsample = 11;
}  // namespace stream

// Seeded random source. One instance per thread; never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    // Fisher-Yates with our own index draws; std::shuffle's algorithm is
    // implementation-defined.
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order);
    return order;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Independent randomness sources so that ablations can vary one at a time.
struct SeedTriple {
  std::uint64_t data = 0;
  std::uint64_t model = 0;
  std::uint64_t attack = 0;
};

}  // namespace cpa

#endif  // CPA_CORE_RNG_HPP_
