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
#ifndef FOGPIPE_TIMING_HPP_
#define FOGPIPE_TIMING_HPP_

#include <cmath>
#include <cstdio>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/workload.hpp"

namespace fogpipe {

/// A contiguous run of order positions [start_idx, end_idx] assigned to one
/// device.
struct StageAssignment {
  int start_idx = 0;
  int end_idx = 0;  // inclusive
  DeviceId device_id = 0;
};

struct Schedule {
  std::vector<StageAssignment> stages;
  int micro_batch = 1;  // B_mu
};

struct StageTimes {
  double t_comp = 0.0;
  double t_comm = 0.0;
  double t_exec = 0.0;  // max(t_comp, t_comm)
};

struct ScheduleEvaluation {
  std::vector<StageTimes> per_stage;
  double t_overall = 0.0;  // bottleneck stage time; the steady pipeline cycle
  double sigma = 0.0;      // load-balance stddev over used devices
  double throughput_microbatches_per_s = 0.0;
  double throughput_samples_per_s = 0.0;
};

/// Sum of per-layer processing times for the stage's layers on its device.
inline double stage_compute_time(std::span<const LayerId> stage_layers,
                                 DeviceId device, const ProfileMatrix &profiles) {
  double total = 0.0;
  for (LayerId l : stage_layers) total += profiles.at(l, device);
  return total;
}

/// Transfer time for the cut tensor feeding a stage: the previous stage's last
/// layer output, times the micro-batch, over the effective link bandwidth.
/// Zero when sender and receiver are the same device.
inline double stage_comm_time(const LayerNode &prev_last_layer, int b_mu,
                              const DeviceSpec &sender, const DeviceSpec &receiver) {
  if (sender.device_id == receiver.device_id) return 0.0;
  if (prev_last_layer.output_bytes == 0) return 0.0;
  double bytes = static_cast<double>(prev_last_layer.output_bytes) *
                 static_cast<double>(b_mu);
  return bytes / link_bandwidth(sender, receiver);
}

/// Population standard deviation (divide by N). Exactly zero when all values
/// are equal, so "balanced" never decays to rounding noise.
inline double load_balance_sigma(std::span<const double> exec_times) {
  if (exec_times.empty()) throw Error("sigma of empty list");
  bool all_equal = true;
  for (double t : exec_times) all_equal = all_equal && t == exec_times[0];
  if (all_equal) return 0.0;
  double mean = 0.0;
  for (double t : exec_times) mean += t;
  mean /= static_cast<double>(exec_times.size());
  double ss = 0.0;
  for (double t : exec_times) ss += (t - mean) * (t - mean);
  return std::sqrt(ss / static_cast<double>(exec_times.size()));
}

namespace detail {

inline void validate_schedule(const WorkloadInstance &instance,
                              const ExecutionOrder &order,
                              const Schedule &schedule,
                              const ClusterSpec &cluster) {
  if (schedule.micro_batch < 1) throw Error("invalid schedule: micro_batch < 1");
  if (schedule.stages.empty()) throw Error("invalid schedule: no stages");
  if (!is_topological(instance.graph, order)) {
    throw Error("invalid schedule: order is not topological for the graph");
  }
  int expect = 0;
  std::set<DeviceId> used;
  for (const auto &st : schedule.stages) {
    if (st.start_idx != expect || st.end_idx < st.start_idx) {
      throw Error("invalid schedule: stages must be contiguous and cover the order");
    }
    expect = st.end_idx + 1;
    if (!cluster.has_device(st.device_id)) {
      throw Error("invalid schedule: unknown device " + std::to_string(st.device_id));
    }
    if (!used.insert(st.device_id).second) {
      throw Error("invalid schedule: device " + std::to_string(st.device_id) +
                  " used more than once");
    }
  }
  if (expect != static_cast<int>(order.ids.size())) {
    throw Error("invalid schedule: stages do not cover all layers");
  }
}

}  // namespace detail

/// Analytic pipeline cost model. Per stage: t_comp is the sum of its layers'
/// processing times, t_comm the cut-tensor transfer feeding it (zero for the
/// entry stage), t_exec their max. t_overall is the bottleneck stage's t_exec;
/// sigma is taken over the devices actually holding stages.
inline ScheduleEvaluation evaluate_schedule(const WorkloadInstance &instance,
                                            const ExecutionOrder &order,
                                            const Schedule &schedule,
                                            const ClusterSpec &cluster) {
  detail::validate_schedule(instance, order, schedule, cluster);

  ScheduleEvaluation eval;
  eval.per_stage.reserve(schedule.stages.size());
  for (std::size_t k = 0; k < schedule.stages.size(); ++k) {
    const auto &st = schedule.stages[k];
    StageTimes times;
    std::span<const LayerId> stage_layers(
        order.ids.data() + st.start_idx,
        static_cast<std::size_t>(st.end_idx - st.start_idx + 1));
    times.t_comp = stage_compute_time(stage_layers, st.device_id, instance.profiles);
    if (k > 0) {
      const auto &prev = schedule.stages[k - 1];
      const LayerNode &cut = instance.graph.layer(order.ids[prev.end_idx]);
      times.t_comm = stage_comm_time(cut, schedule.micro_batch,
                                     cluster.device(prev.device_id),
                                     cluster.device(st.device_id));
    }
    times.t_exec = std::max(times.t_comp, times.t_comm);
    eval.per_stage.push_back(times);
  }

  std::vector<double> exec_times;
  exec_times.reserve(eval.per_stage.size());
  for (const auto &s : eval.per_stage) exec_times.push_back(s.t_exec);
  eval.t_overall = *std::max_element(exec_times.begin(), exec_times.end());
  eval.sigma = load_balance_sigma(exec_times);
  if (eval.t_overall > 0.0) {
    eval.throughput_microbatches_per_s = 1.0 / eval.t_overall;
    eval.throughput_samples_per_s = static_cast<double>(schedule.micro_batch) *
                                    eval.throughput_microbatches_per_s;
  }
  return eval;
}

/// CSV rows: one per stage, then a summary row.
inline std::string evaluation_to_csv(const ScheduleEvaluation &eval,
                                     const Schedule &schedule) {
  std::string out = "stage_idx,device,t_comp,t_comm,t_exec\n";
  char buf[256];
  for (std::size_t k = 0; k < eval.per_stage.size(); ++k) {
    const auto &s = eval.per_stage[k];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.12g,%.12g,%.12g\n", k,
                  schedule.stages[k].device_id, s.t_comp, s.t_comm, s.t_exec);
    out += buf;
  }
  out += "t_overall,sigma,throughput_mb_s,throughput_samples_s\n";
  std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", eval.t_overall,
                eval.sigma, eval.throughput_microbatches_per_s,
                eval.throughput_samples_per_s);
  out += buf;
  return out;
}

}  // namespace fogpipe

#endif  // FOGPIPE_TIMING_HPP_
