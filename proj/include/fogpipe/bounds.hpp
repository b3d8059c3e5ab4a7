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
#ifndef FOGPIPE_BOUNDS_HPP_
#define FOGPIPE_BOUNDS_HPP_

#include <algorithm>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"
#include "json.hpp"

namespace fogpipe {

/// Inputs to the communication-aware throughput-gain lower bound: output
/// tensor extremes, the usable-link floor and the worst link, the residual
/// post-scheduling imbalance delta, and the micro-batch size.
struct BoundInputs {
  double o_max_bytes = 0.0;
  double o_avg_bytes = 0.0;
  double b_good_bps = 0.0;
  double b_bad_bps = 0.0;
  double delta_s = 0.01;
  int b_mu = 1;
};

struct BoundReport {
  double alpha = 0.0;  // o_max / o_avg, tensor imbalance ratio
  double beta = 0.0;   // b_good / b_bad, link asymmetry ratio
  double epsilon = 0.0;
  double gamma_lower = 0.0;  // alpha * beta / (1 + epsilon)
};

/// Two epsilon conventions coexist: the stated theorem divides delta by the
/// per-micro-batch transfer time (B_mu * o_avg / b_good), while the published
/// worked arithmetic drops the B_mu factor. Both are exposed; they coincide
/// at B_mu = 1.
enum class BoundMode { kTheorem, kPaperArith };

inline std::string bound_mode_name(BoundMode mode) {
  return mode == BoundMode::kTheorem ? "theorem" : "paper_arith";
}

/// Maximum, mean, and imbalance ratio of layer output sizes.
struct TensorStats {
  double o_max_bytes = 0.0;
  double o_avg_bytes = 0.0;
  double alpha = 0.0;
};

inline TensorStats tensor_stats(const WorkloadInstance &instance) {
  if (instance.graph.layers.empty()) throw Error("tensor_stats: no layers");
  double o_max = 0.0, sum = 0.0;
  for (const auto &l : instance.graph.layers) {
    o_max = std::max(o_max, static_cast<double>(l.output_bytes));
    sum += static_cast<double>(l.output_bytes);
  }
  double o_avg = sum / static_cast<double>(instance.graph.layers.size());
  if (o_avg <= 0.0) throw Error("alpha undefined: all layer outputs are zero");
  return {o_max, o_avg, o_max / o_avg};
}

inline BoundReport throughput_gain_bound(const BoundInputs &inputs,
                                         BoundMode mode) {
  if (inputs.o_avg_bytes <= 0.0 || inputs.o_max_bytes < inputs.o_avg_bytes) {
    throw Error("bound inputs require o_max >= o_avg > 0");
  }
  if (inputs.b_bad_bps <= 0.0 || inputs.b_good_bps < inputs.b_bad_bps) {
    throw Error("bound inputs require b_good >= b_bad > 0");
  }
  if (inputs.delta_s < 0.0) throw Error("bound inputs require delta >= 0");
  if (inputs.b_mu < 1) throw Error("bound inputs require b_mu >= 1");

  BoundReport report;
  report.alpha = inputs.o_max_bytes / inputs.o_avg_bytes;
  report.beta = inputs.b_good_bps / inputs.b_bad_bps;
  double transfer_s = inputs.o_avg_bytes / inputs.b_good_bps;
  if (mode == BoundMode::kTheorem) transfer_s *= static_cast<double>(inputs.b_mu);
  if (inputs.delta_s > 0.0 && transfer_s <= 0.0) {
    throw Error("bound epsilon undefined: zero transfer time");
  }
  report.epsilon = inputs.delta_s == 0.0 ? 0.0 : inputs.delta_s / transfer_s;
  report.gamma_lower = report.alpha * report.beta / (1.0 + report.epsilon);
  return report;
}

/// Good-link selection policy for bandwidth_asymmetry: either the minimum of
/// the upper half of the sorted distinct link bandwidths, or explicit values.
struct UpperHalfMinPolicy {};
struct ExplicitLinksPolicy {
  double b_good_bps = 0.0;
  double b_bad_bps = 0.0;
};
using GoodLinkPolicy = std::variant<UpperHalfMinPolicy, ExplicitLinksPolicy>;

struct BandwidthAsymmetry {
  double b_good_bps = 0.0;
  double b_bad_bps = 0.0;
  double beta = 0.0;
};

inline BandwidthAsymmetry bandwidth_asymmetry(
    const ClusterSpec &cluster, const GoodLinkPolicy &policy = UpperHalfMinPolicy{}) {
  if (auto *explicit_links = std::get_if<ExplicitLinksPolicy>(&policy)) {
    if (explicit_links->b_bad_bps <= 0.0 ||
        explicit_links->b_good_bps < explicit_links->b_bad_bps) {
      throw Error("explicit link values require b_good >= b_bad > 0");
    }
    return {explicit_links->b_good_bps, explicit_links->b_bad_bps,
            explicit_links->b_good_bps / explicit_links->b_bad_bps};
  }
  if (cluster.devices.size() < 2) {
    throw Error("bandwidth_asymmetry requires at least 2 devices");
  }
  std::set<double> links;
  for (const auto &a : cluster.devices) {
    for (const auto &b : cluster.devices) {
      if (a.device_id == b.device_id) continue;
      links.insert(link_bandwidth(a, b));
    }
  }
  std::vector<double> sorted(links.begin(), links.end());
  double b_bad = sorted.front();
  double b_good = sorted[sorted.size() / 2];  // min of the upper half
  return {b_good, b_bad, b_good / b_bad};
}

/// Throughput improvement of an optimized schedule over a baseline, measured
/// as the ratio of bottleneck times.
inline double empirical_gain(const ScheduleEvaluation &eval_opt,
                             const ScheduleEvaluation &eval_base) {
  if (eval_opt.t_overall <= 0.0 || eval_base.t_overall <= 0.0) {
    throw Error("empirical_gain requires positive bottleneck times");
  }
  return eval_base.t_overall / eval_opt.t_overall;
}

inline nlohmann::json bound_report_to_json(const BoundReport &report,
                                           BoundMode mode) {
  return nlohmann::json{{"alpha", report.alpha},
                        {"beta", report.beta},
                        {"epsilon", report.epsilon},
                        {"gamma_lower", report.gamma_lower},
                        {"mode", bound_mode_name(mode)}};
}

}  // namespace fogpipe

#endif  // FOGPIPE_BOUNDS_HPP_
