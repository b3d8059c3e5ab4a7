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
#ifndef FOGPIPE_PARTITION_DP_HPP_
#define FOGPIPE_PARTITION_DP_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"
#include "json.hpp"

namespace fogpipe {

struct DpOptions {
  /// Stages whose summed mem_bytes exceed the device's capacity get infinite
  /// cost. Toggleable; on by default.
  bool memory_pruning = true;
};

struct DpResult {
  Schedule schedule;
  double t_max = 0.0;
};

namespace detail {

/// Recomputes the min-max stage time of a backtracked schedule through the
/// same timing helpers evaluate_schedule uses, so the two agree exactly.
inline double schedule_t_max(const WorkloadInstance &instance,
                             const ExecutionOrder &order,
                             const Schedule &schedule,
                             const ClusterSpec &cluster) {
  double worst = 0.0;
  for (std::size_t k = 0; k < schedule.stages.size(); ++k) {
    const auto &st = schedule.stages[k];
    std::span<const LayerId> stage_layers(
        order.ids.data() + st.start_idx,
        static_cast<std::size_t>(st.end_idx - st.start_idx + 1));
    double t_comp =
        stage_compute_time(stage_layers, st.device_id, instance.profiles);
    double t_comm = 0.0;
    if (k > 0) {
      const auto &prev = schedule.stages[k - 1];
      t_comm = stage_comm_time(instance.graph.layer(order.ids[prev.end_idx]),
                               schedule.micro_batch,
                               cluster.device(prev.device_id),
                               cluster.device(st.device_id));
    }
    worst = std::max(worst, std::max(t_comp, t_comm));
  }
  return worst;
}

}  // namespace detail

/// Min-max contiguous partition of the ordered layers over a prefix of the
/// device sequence.
///
/// t[i][j] = min over cut k of max(t[k][j-1], stage cost of layers k+1..i on
/// the j-th sequence device), where the stage cost is max(sum of processing
/// times, transfer time of the cut layer's output into this device). Every
/// device in a j-prefix holds at least one layer; the answer minimizes over
/// the number of used devices, so trailing devices may go unused. Ties break
/// toward the smallest cut and the smallest device count.
inline DpResult dp_partition(const WorkloadInstance &instance,
                             const ClusterSpec &cluster,
                             const ExecutionOrder &order,
                             const std::vector<DeviceId> &device_sequence,
                             int b_mu, const DpOptions &options = {}) {
  const int n_layers = static_cast<int>(order.ids.size());
  const int n_devices = static_cast<int>(device_sequence.size());
  if (n_layers == 0) throw Error("dp_partition: empty order");
  if (n_devices == 0) throw Error("dp_partition: empty device sequence");
  if (b_mu < 1) throw Error("dp_partition: micro_batch < 1");

  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Per-sequence-device prefix compute times and layer memory prefix.
  std::vector<std::vector<double>> prefix_comp(
      n_devices, std::vector<double>(n_layers + 1, 0.0));
  std::vector<double> prefix_mem(n_layers + 1, 0.0);
  std::vector<const LayerNode *> nodes(n_layers);
  for (int i = 0; i < n_layers; ++i) {
    nodes[i] = &instance.graph.layer(order.ids[i]);
    prefix_mem[i + 1] = prefix_mem[i] + static_cast<double>(nodes[i]->mem_bytes);
  }
  for (int j = 0; j < n_devices; ++j) {
    for (int i = 0; i < n_layers; ++i) {
      prefix_comp[j][i + 1] =
          prefix_comp[j][i] + instance.profiles.at(order.ids[i], device_sequence[j]);
    }
  }

  // Transfer cost of cutting after order position k-1 into sequence device j
  // (1-based j >= 2): cut layer output * B_mu / link bandwidth.
  std::vector<double> inv_link(n_devices, 0.0);
  for (int j = 1; j < n_devices; ++j) {
    inv_link[j] = 1.0 / link_bandwidth(cluster.device(device_sequence[j - 1]),
                                       cluster.device(device_sequence[j]));
  }

  const int max_used = std::min(n_devices, n_layers);
  std::vector<std::vector<double>> t(
      n_layers + 1, std::vector<double>(n_devices + 1, kInf));
  std::vector<std::vector<int>> split(
      n_layers + 1, std::vector<int>(n_devices + 1, -1));
  t[0][0] = 0.0;

  for (int j = 1; j <= max_used; ++j) {
    const auto &pc = prefix_comp[j - 1];
    const DeviceSpec &dev = cluster.device(device_sequence[j - 1]);
    const double cap = static_cast<double>(dev.mem_capacity_bytes);
    for (int i = j; i <= n_layers; ++i) {
      double best = kInf;
      int best_k = -1;
      for (int k = j - 1; k < i; ++k) {
        double below = t[k][j - 1];
        if (below == kInf) continue;
        if (options.memory_pruning && prefix_mem[i] - prefix_mem[k] > cap) continue;
        double t_comp = pc[i] - pc[k];
        double t_comm = 0.0;
        if (j > 1) {
          t_comm = static_cast<double>(nodes[k - 1]->output_bytes) *
                   static_cast<double>(b_mu) * inv_link[j - 1];
        }
        double stage = std::max(t_comp, t_comm);
        double cand = std::max(below, stage);
        if (cand < best) {
          best = cand;
          best_k = k;
        }
      }
      t[i][j] = best;
      split[i][j] = best_k;
    }
  }

  int best_j = -1;
  double best_t = kInf;
  for (int j = 1; j <= max_used; ++j) {
    if (t[n_layers][j] < best_t) {
      best_t = t[n_layers][j];
      best_j = j;
    }
  }
  if (best_j < 0) {
    throw InfeasibleError("memory pruning leaves no feasible schedule");
  }

  DpResult result;
  result.schedule.micro_batch = b_mu;
  int i = n_layers;
  for (int j = best_j; j >= 1; --j) {
    int k = split[i][j];
    StageAssignment st;
    st.start_idx = k;
    st.end_idx = i - 1;
    st.device_id = device_sequence[j - 1];
    result.schedule.stages.push_back(st);
    i = k;
  }
  std::reverse(result.schedule.stages.begin(), result.schedule.stages.end());
  result.t_max = detail::schedule_t_max(instance, order, result.schedule, cluster);
  return result;
}

/// Exhaustive oracle: every contiguous partition into 1..M stages mapped to
/// device-sequence prefixes. Guarded to small instances.
inline DpResult brute_force_partition(const WorkloadInstance &instance,
                                      const ClusterSpec &cluster,
                                      const ExecutionOrder &order,
                                      const std::vector<DeviceId> &device_sequence,
                                      int b_mu, const DpOptions &options = {}) {
  const int n_layers = static_cast<int>(order.ids.size());
  const int n_devices = static_cast<int>(device_sequence.size());
  if (n_layers == 0) throw Error("brute_force_partition: empty order");
  if (n_devices == 0) throw Error("brute_force_partition: empty device sequence");
  if (n_layers > 12 || n_devices > 4) {
    throw Error("brute_force_partition size guard exceeded (L <= 12, M <= 4)");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  double best_t = kInf;
  Schedule best_schedule;

  // Bitmask over the L-1 interior cut slots; popcount+1 stages.
  const int slots = n_layers - 1;
  for (std::uint32_t mask = 0; mask < (1u << slots); ++mask) {
    int n_stages = __builtin_popcount(mask) + 1;
    if (n_stages > n_devices) continue;

    Schedule schedule;
    schedule.micro_batch = b_mu;
    int start = 0, stage_idx = 0;
    for (int pos = 0; pos < n_layers; ++pos) {
      bool cut_here = pos == n_layers - 1 || (mask & (1u << pos));
      if (cut_here) {
        StageAssignment st;
        st.start_idx = start;
        st.end_idx = pos;
        st.device_id = device_sequence[stage_idx];
        schedule.stages.push_back(st);
        start = pos + 1;
        ++stage_idx;
      }
    }

    if (options.memory_pruning) {
      bool fits = true;
      for (const auto &st : schedule.stages) {
        double mem = 0.0;
        for (int p = st.start_idx; p <= st.end_idx; ++p) {
          mem += static_cast<double>(instance.graph.layer(order.ids[p]).mem_bytes);
        }
        if (mem > static_cast<double>(
                      cluster.device(st.device_id).mem_capacity_bytes)) {
          fits = false;
          break;
        }
      }
      if (!fits) continue;
    }

    double t_max = detail::schedule_t_max(instance, order, schedule, cluster);
    if (t_max < best_t) {
      best_t = t_max;
      best_schedule = std::move(schedule);
    }
  }

  if (best_schedule.stages.empty()) {
    throw InfeasibleError("memory pruning leaves no feasible schedule");
  }
  return DpResult{std::move(best_schedule), best_t};
}

struct BestOrderResult {
  std::vector<DeviceId> device_sequence;
  Schedule schedule;
  double t_max = 0.0;
};

struct DeviceOrderSearch {
  int max_exhaustive_devices = 8;
  int sample_count = 64;  // used when the pool is too large to enumerate
  std::uint64_t seed = 0;
};

/// Runs the DP over device permutations of the cluster's pipeline sequence:
/// exhaustively for small pools, by seeded sampling otherwise. Ties keep the
/// lexicographically smallest sequence.
inline BestOrderResult best_over_device_orders(
    const WorkloadInstance &instance, const ClusterSpec &cluster,
    const ExecutionOrder &order, int b_mu, const DpOptions &options = {},
    const DeviceOrderSearch &search = {}) {
  std::vector<DeviceId> pool = cluster.pipeline_sequence;
  if (pool.empty()) throw Error("cluster has an empty pipeline sequence");

  BestOrderResult best;
  best.t_max = std::numeric_limits<double>::infinity();
  bool found = false;
  auto consider = [&](const std::vector<DeviceId> &seq) {
    DpResult r;
    try {
      r = dp_partition(instance, cluster, order, seq, b_mu, options);
    } catch (const InfeasibleError &) {
      return;
    }
    if (!found || r.t_max < best.t_max ||
        (r.t_max == best.t_max && seq < best.device_sequence)) {
      best.device_sequence = seq;
      best.schedule = std::move(r.schedule);
      best.t_max = r.t_max;
      found = true;
    }
  };

  if (static_cast<int>(pool.size()) <= search.max_exhaustive_devices) {
    std::sort(pool.begin(), pool.end());
    do {
      consider(pool);
    } while (std::next_permutation(pool.begin(), pool.end()));
  } else {
    consider(pool);  // the declared sequence is always a candidate
    std::mt19937_64 rng(search.seed);
    std::vector<DeviceId> seq = pool;
    for (int s = 0; s < search.sample_count; ++s) {
      std::shuffle(seq.begin(), seq.end(), rng);
      consider(seq);
    }
  }
  if (!found) throw InfeasibleError("memory pruning leaves no feasible schedule");
  return best;
}

// ---------------------------------------------------------------------------
// Schedule file format
// ---------------------------------------------------------------------------

struct ScheduleFile {
  ExecutionOrder order;
  Schedule schedule;
  double t_max_s = 0.0;
};

inline nlohmann::json schedule_to_json(const ExecutionOrder &order,
                                       const Schedule &schedule, double t_max) {
  nlohmann::json j;
  j["order"] = order.ids;
  j["stages"] = nlohmann::json::array();
  for (const auto &st : schedule.stages) {
    std::vector<LayerId> layers(order.ids.begin() + st.start_idx,
                                order.ids.begin() + st.end_idx + 1);
    j["stages"].push_back({{"device", st.device_id}, {"layers", layers}});
  }
  j["b_mu"] = schedule.micro_batch;
  j["t_max_s"] = t_max;
  return j;
}

inline ScheduleFile schedule_from_json(const nlohmann::json &j) {
  ScheduleFile file;
  try {
    file.order.ids = j.at("order").get<std::vector<LayerId>>();
    file.schedule.micro_batch = j.at("b_mu").get<int>();
    file.t_max_s = j.at("t_max_s").get<double>();
    int pos = 0;
    for (const auto &sj : j.at("stages")) {
      auto layers = sj.at("layers").get<std::vector<LayerId>>();
      StageAssignment st;
      st.start_idx = pos;
      st.end_idx = pos + static_cast<int>(layers.size()) - 1;
      st.device_id = sj.at("device").get<DeviceId>();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (file.order.ids[static_cast<std::size_t>(pos) + i] != layers[i]) {
          throw IoError("schedule stages do not tile the order");
        }
      }
      pos = st.end_idx + 1;
      file.schedule.stages.push_back(st);
    }
    if (pos != static_cast<int>(file.order.ids.size())) {
      throw IoError("schedule stages do not cover the order");
    }
  } catch (const nlohmann::json::exception &e) {
    throw IoError(std::string("malformed schedule file: ") + e.what());
  }
  return file;
}

inline void save_schedule(const ExecutionOrder &order, const Schedule &schedule,
                          double t_max, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schedule file: " + path);
  out << schedule_to_json(order, schedule, t_max).dump(2) << "\n";
}

inline ScheduleFile load_schedule(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schedule file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw IoError("cannot parse schedule file " + path + ": " + e.what());
  }
  return schedule_from_json(j);
}

}  // namespace fogpipe

#endif  // FOGPIPE_PARTITION_DP_HPP_
