// Copyright 2026 The partkd Authors
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

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace partkd {

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unknown skeleton schema id.
struct UnknownSchema : Error {
  using Error::Error;
};

// Invalid configuration value or option.
struct ConfigError : Error {
  using Error::Error;
};

// Tensor / feature dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Sequence with zero frames where data is required.
struct EmptySequence : Error {
  using Error::Error;
};

// Batch sampler cannot satisfy its constraints.
struct SamplerError : Error {
  using Error::Error;
};

// An action class has no instances where all classes are required.
struct MissingClass : Error {
  using Error::Error;
};

// File system / serialization failure.
struct IOError : Error {
  using Error::Error;
};

// Manifest references a payload file that does not exist.
struct MissingPayload : IOError {
  using IOError::IOError;
};

// Manifest or payload record cannot be parsed or is inconsistent.
struct MalformedRecord : IOError {
  using IOError::IOError;
};

// Payload header disagrees with the manifest record.
struct SchemaMismatch : IOError {
  using IOError::IOError;
};

// Loaded dataset violates a dataset invariant.
struct ValidationError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------- rng

// splitmix64; used to derive independent seeds from (seed, tag...) tuples.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

// Deterministic child stream: rng_stream(seed, "occlusion", i, j, ...)
template <typename... Ints>
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view tag, Ints... salt) {
  std::uint64_t s = mix_seed(seed, hash_tag(tag));
  ((s = mix_seed(s, static_cast<std::uint64_t>(salt))), ...);
  return std::mt19937_64(s);
}

// Uniform double in [0, 1). 53-bit mantissa; identical across platforms.
inline double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Multiply-shift; avoids distribution objects so
// draws are reproducible independent of the standard library.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(rng()) * n) >> 64);
}

// Standard normal via Box-Muller.
inline double gaussian(std::mt19937_64& rng) {
  double u1 = u01(rng);
  double u2 = u01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle_indices(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------- threading

// Fixed default so chunk boundaries (and thus floating-point reduction
// order) do not depend on the host core count.
inline int default_thread_count() { return 4; }

// Splits [0, n) into `threads` contiguous chunks and runs
// fn(begin, end, chunk_index) on each. Chunk boundaries depend only on
// (n, threads), so per-chunk accumulators can be reduced deterministically.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  int t = threads < 1 ? 1 : threads;
  if (static_cast<std::size_t>(t) > n) t = static_cast<int>(n);
  if (t == 1) {
    fn(std::size_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  const std::size_t base = n / static_cast<std::size_t>(t);
  const std::size_t rem = n % static_cast<std::size_t>(t);
  std::size_t begin = 0;
  for (int i = 0; i < t; ++i) {
    std::size_t len = base + (static_cast<std::size_t>(i) < rem ? 1 : 0);
    std::size_t end = begin + len;
    pool.emplace_back([&fn, begin, end, i] { fn(begin, end, i); });
    begin = end;
  }
  for (auto& th : pool) th.join();
}

}  // namespace partkd
