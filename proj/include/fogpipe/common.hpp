/**
 * Copyright 2026 The fogpipe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FOGPIPE_COMMON_HPP_
#define FOGPIPE_COMMON_HPP_

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fogpipe {

/// Generic fault: a violated precondition or invariant reported to the caller.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

/// File missing, unreadable, or unparsable.
class IoError : public Error {
 public:
  explicit IoError(const std::string &what) : Error(what) {}
};

/// No feasible schedule exists (e.g. memory pruning removed every partition).
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string &what) : Error(what) {}
};

/// Wire-protocol violation in the manager/worker harness.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string &what) : Error(what) {}
};

/// splitmix64 step; used to derive independent sub-seeds from a master seed
/// so partial reruns of an experiment reproduce exactly.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Runs fn(i) for i in [0, n). With jobs <= 1 the loop is sequential; results
/// must be written to per-index slots so the parallel and serial paths are
/// indistinguishable.
inline void parallel_for(std::size_t n, unsigned jobs,
                         const std::function<void(std::size_t)> &fn) {
  if (jobs == 0) jobs = std::thread::hardware_concurrency();
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto &th : pool) th.join();
}

}  // namespace fogpipe

#endif  // FOGPIPE_COMMON_HPP_
