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
#ifndef FOGPIPE_PIPELINE_SIM_HPP_
#define FOGPIPE_PIPELINE_SIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/order_ga.hpp"
#include "fogpipe/partition_dp.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"

namespace fogpipe {

struct TraceEvent {
  std::string resource;
  int batch = 0;
  double start = 0.0;
  double end = 0.0;
};

struct SimReport {
  double makespan = 0.0;
  double steady_interval = 0.0;  // inter-departure of the last two batches
  double throughput_samples_per_s = 0.0;
  std::map<std::string, double> per_resource_busy;
  std::optional<std::vector<TraceEvent>> trace;
};

/// Discrete-event pipeline execution: each stage device and each inter-stage
/// link is a unary FIFO resource. Batch m enters a stage's device only after
/// the device finished batch m-1 and the upstream link delivered batch m.
/// Device service time is the stage's t_comp; link service time is the
/// stage's t_comm plus one uniform jitter sample per transfer when enabled.
///
/// With jitter disabled the steady state is analytic -- the reported interval
/// is the max resource service time and the makespan its closed form -- and
/// the event trace is cross-checked against those values.
inline SimReport simulate(const WorkloadInstance &instance,
                          const ExecutionOrder &order, const Schedule &schedule,
                          const ClusterSpec &cluster, int n_microbatches,
                          std::optional<std::pair<double, double>> jitter_ms,
                          std::uint64_t seed, bool want_trace = false) {
  if (n_microbatches < 2) throw Error("simulate: n_microbatches must be >= 2");
  ScheduleEvaluation eval = evaluate_schedule(instance, order, schedule, cluster);
  const int n_stages = static_cast<int>(schedule.stages.size());
  const int n = n_microbatches;

  bool jitter_on = jitter_ms.has_value();
  if (jitter_on) {
    auto [lo, hi] = *jitter_ms;
    if (lo < 0.0 || lo > hi) throw Error("invalid jitter range");
    if (lo == 0.0 && hi == 0.0) jitter_on = false;
  }
  if (n_stages == 1) jitter_on = false;  // no links to perturb

  // Per-(link, batch) jitter samples drawn up front in a fixed order.
  std::vector<std::vector<double>> jitter_s(
      static_cast<std::size_t>(n_stages), std::vector<double>());
  if (jitter_on) {
    std::mt19937_64 rng(seed);
    auto [lo_ms, hi_ms] = *jitter_ms;
    for (int k = 1; k < n_stages; ++k) {
      auto &samples = jitter_s[static_cast<std::size_t>(k)];
      samples.resize(static_cast<std::size_t>(n));
      if (hi_ms <= lo_ms) {
        std::fill(samples.begin(), samples.end(), lo_ms * 1e-3);
      } else {
        std::uniform_real_distribution<double> dist(lo_ms * 1e-3, hi_ms * 1e-3);
        for (auto &s : samples) s = dist(rng);
      }
    }
  }

  auto dev_name = [&](int k) {
    return "device:" + std::to_string(schedule.stages[static_cast<std::size_t>(k)]
                                          .device_id);
  };
  auto link_name = [&](int k) {
    return "link:" +
           std::to_string(schedule.stages[static_cast<std::size_t>(k - 1)].device_id) +
           "->" +
           std::to_string(schedule.stages[static_cast<std::size_t>(k)].device_id);
  };

  SimReport report;
  if (want_trace) report.trace.emplace();
  std::vector<double> dev_done(static_cast<std::size_t>(n_stages), 0.0);
  std::vector<double> link_done(static_cast<std::size_t>(n_stages), 0.0);
  double sink_prev = 0.0, sink_last = 0.0;

  for (int m = 0; m < n; ++m) {
    for (int k = 0; k < n_stages; ++k) {
      const auto &stage = eval.per_stage[static_cast<std::size_t>(k)];
      double arrival = 0.0;
      if (k > 0) {
        double service = stage.t_comm;
        if (jitter_on) {
          service += jitter_s[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)];
        }
        double start = std::max(link_done[static_cast<std::size_t>(k)],
                                dev_done[static_cast<std::size_t>(k - 1)]);
        link_done[static_cast<std::size_t>(k)] = start + service;
        arrival = link_done[static_cast<std::size_t>(k)];
        report.per_resource_busy[link_name(k)] += service;
        if (want_trace) {
          report.trace->push_back({link_name(k), m, start, start + service});
        }
      }
      double start = std::max(dev_done[static_cast<std::size_t>(k)], arrival);
      dev_done[static_cast<std::size_t>(k)] = start + stage.t_comp;
      report.per_resource_busy[dev_name(k)] += stage.t_comp;
      if (want_trace) {
        report.trace->push_back({dev_name(k), m, start, start + stage.t_comp});
      }
    }
    sink_prev = sink_last;
    sink_last = dev_done[static_cast<std::size_t>(n_stages - 1)];
  }

  report.makespan = sink_last;
  report.steady_interval = sink_last - sink_prev;

  if (!jitter_on) {
    // Closed-form steady state: the bottleneck resource's service time, and
    // fill time plus (n-1) cycles. Snap to it once the trace confirms it.
    double bottleneck = 0.0, fill = 0.0;
    for (const auto &stage : eval.per_stage) {
      bottleneck = std::max(bottleneck, std::max(stage.t_comp, stage.t_comm));
      fill += stage.t_comp + stage.t_comm;
    }
    double makespan_closed = fill + static_cast<double>(n - 1) * bottleneck;
    auto close = [](double a, double b) {
      return std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1e-300});
    };
    if (close(report.steady_interval, bottleneck) &&
        close(report.makespan, makespan_closed)) {
      report.steady_interval = bottleneck;
      report.makespan = makespan_closed;
    }
  }

  if (report.steady_interval > 0.0) {
    report.throughput_samples_per_s =
        static_cast<double>(schedule.micro_batch) / report.steady_interval;
  }
  return report;
}

/// GPipe-style even split: stages of size ceil(L/M) then floor(L/M), earlier
/// stages taking the larger size; trailing devices go unused when L < M.
inline Schedule equal_partition_baseline(const ExecutionOrder &order,
                                         const std::vector<DeviceId> &device_sequence,
                                         int b_mu = 1) {
  const int n_layers = static_cast<int>(order.ids.size());
  const int n_devices = static_cast<int>(device_sequence.size());
  if (n_layers < 1) throw Error("equal_partition_baseline: empty order");
  if (n_devices < 1) throw Error("equal_partition_baseline: no devices");

  Schedule schedule;
  schedule.micro_batch = b_mu;
  int larger = (n_layers + n_devices - 1) / n_devices;
  int smaller = n_layers / n_devices;
  int n_larger = n_layers - smaller * n_devices;
  int pos = 0;
  for (int k = 0; k < n_devices && pos < n_layers; ++k) {
    int size = k < n_larger ? larger : smaller;
    if (size == 0) break;
    StageAssignment st;
    st.start_idx = pos;
    st.end_idx = pos + size - 1;
    st.device_id = device_sequence[static_cast<std::size_t>(k)];
    schedule.stages.push_back(st);
    pos += size;
  }
  return schedule;
}

/// Degenerate one-stage pipeline: B_mu over the device's total compute.
inline double single_device_report(const WorkloadInstance &instance,
                                   const ExecutionOrder &order, DeviceId device,
                                   int b_mu) {
  double total = stage_compute_time(order.ids, device, instance.profiles);
  if (total <= 0.0) throw Error("non-positive cycle time");
  return static_cast<double>(b_mu) / total;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

struct BenchConfig {
  std::vector<std::string> modes{"gadphds", "baseline", "no_order_opt"};
  int reps = 10;
  std::uint64_t seed = 0;
  int b_mu = 16;
  int n_microbatches = 32;
  std::optional<std::pair<double, double>> jitter_ms{{10.0, 30.0}};
  GaParams ga;
};

struct BenchRow {
  std::string cluster;
  std::string mode;
  std::string rep;  // numeric, or "mean" for the per-cell summary row
  std::uint64_t seed = 0;
  double steady_interval_s = 0.0;
  double makespan_s = 0.0;
  double throughput_samples_s = 0.0;
};

/// Runs each scheduling mode reps times per cluster, simulating every
/// schedule under the configured jitter. "gadphds" is the full search,
/// "baseline" the equal split on the canonical order, "no_order_opt" the DP
/// on a seeded random topological order.
inline std::vector<BenchRow> bench_suite(
    const std::vector<WorkloadInstance> &instances,
    const std::vector<std::pair<std::string, ClusterSpec>> &clusters,
    const BenchConfig &config) {
  if (instances.size() != clusters.size()) {
    throw Error("bench_suite: instances and clusters must pair up");
  }
  std::vector<BenchRow> rows;
  std::uint64_t cell = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto &[cluster_name, cluster] = clusters[c];
    const auto &instance = instances[c];
    for (const auto &mode : config.modes) {
      double sum_interval = 0.0, sum_makespan = 0.0, sum_throughput = 0.0;
      for (int rep = 0; rep < config.reps; ++rep) {
        std::uint64_t rep_seed = split_seed(config.seed, cell * 1000 +
                                                             static_cast<std::uint64_t>(rep));
        ExecutionOrder order;
        Schedule schedule;
        if (mode == "gadphds") {
          GaParams ga = config.ga;
          ga.rng_seed = rep_seed;
          GaResult result = run_ga_dphds(instance, cluster, config.b_mu, ga);
          order = result.best.order;
          schedule = result.best.schedule;
        } else if (mode == "baseline") {
          order = canonical_topo_order(instance.graph);
          schedule = equal_partition_baseline(order, cluster.pipeline_sequence,
                                              config.b_mu);
        } else if (mode == "no_order_opt") {
          std::mt19937_64 rng(rep_seed);
          order = random_topo_order(instance.graph, rng);
          schedule = dp_partition(instance, cluster, order,
                                  cluster.pipeline_sequence, config.b_mu)
                         .schedule;
        } else {
          throw Error("bench_suite: unknown mode " + mode);
        }
        SimReport sim = simulate(instance, order, schedule, cluster,
                                 config.n_microbatches, config.jitter_ms,
                                 split_seed(rep_seed, 7));
        rows.push_back({cluster_name, mode, std::to_string(rep), rep_seed,
                        sim.steady_interval, sim.makespan,
                        sim.throughput_samples_per_s});
        sum_interval += sim.steady_interval;
        sum_makespan += sim.makespan;
        sum_throughput += sim.throughput_samples_per_s;
      }
      double r = static_cast<double>(config.reps);
      rows.push_back({cluster_name, mode, "mean", config.seed, sum_interval / r,
                      sum_makespan / r, sum_throughput / r});
      ++cell;
    }
  }
  return rows;
}

inline std::string bench_to_csv(const std::vector<BenchRow> &rows) {
  std::string out =
      "cluster,mode,rep,seed,steady_interval_s,makespan_s,throughput_samples_s\n";
  char buf[256];
  for (const auto &row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%.12g,%.12g,%.12g\n",
                  row.cluster.c_str(), row.mode.c_str(), row.rep.c_str(),
                  static_cast<unsigned long long>(row.seed),
                  row.steady_interval_s, row.makespan_s,
                  row.throughput_samples_s);
    out += buf;
  }
  return out;
}

}  // namespace fogpipe

#endif  // FOGPIPE_PIPELINE_SIM_HPP_
