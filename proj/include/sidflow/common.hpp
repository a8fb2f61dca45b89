/* Copyright 2026 The sidflow Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sidflow {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// Item and user ids start at 1. Row 0 of every embedding table is padding.
inline constexpr ItemId kPaddingItem = 0;

enum class ErrorKind {
  kInvalidArgument,  // caller passed something inconsistent
  kData,             // malformed or inconsistent input data
  kIo,               // file could not be opened / read / written
  kNumeric,          // non-finite values during computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

#define SIDFLOW_CHECK(cond, kind, msg)   \
  do {                                   \
    if (!(cond)) ::sidflow::fail(kind, msg); \
  } while (0)

/// Named sub-stream of a root seed ("tokenizer", "hasher", "init", "data").
/// FNV-1a over the name, folded into the root with a splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

/// Random source with portable transforms. The engine is std::mt19937_64,
/// whose output sequence is fixed by the standard; the uniform/normal
/// transforms below are written out so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates; std::shuffle's sequence is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sidflow
