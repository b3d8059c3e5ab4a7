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
#ifndef FOGPIPE_CLUSTER_HPP_
#define FOGPIPE_CLUSTER_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fogpipe/common.hpp"
#include "fogpipe/workload.hpp"
#include "json.hpp"

namespace fogpipe {

// Decimal units throughout: 1 Gbps = 1.25e8 bytes/s, 1 GB = 1e9 bytes.
constexpr double kBytesPerSecPerGbps = 1.25e8;
constexpr double kBytesPerGb = 1e9;

struct DeviceSpec {
  DeviceId device_id = 0;
  std::string name;
  std::int64_t mem_capacity_bytes = 0;
  double uplink_bps = 0.0;    // bytes/second
  double downlink_bps = 0.0;  // bytes/second
};

/// Heterogeneous device pool plus the device order the stage partitioner
/// consumes. jitter_ms, when present, is the added per-transfer network
/// latency range used by the simulator.
struct ClusterSpec {
  std::vector<DeviceSpec> devices;
  std::vector<DeviceId> pipeline_sequence;
  std::optional<std::pair<double, double>> jitter_ms;

  bool has_device(DeviceId id) const {
    for (const auto &d : devices) {
      if (d.device_id == id) return true;
    }
    return false;
  }

  const DeviceSpec &device(DeviceId id) const {
    for (const auto &d : devices) {
      if (d.device_id == id) return d;
    }
    throw Error("unknown device id " + std::to_string(id));
  }
};

/// Effective sender->receiver bandwidth: capped by the sender's uplink and
/// the receiver's downlink. Same-device transfers are the caller's job to
/// short-circuit to zero communication.
inline double link_bandwidth(const DeviceSpec &sender, const DeviceSpec &receiver) {
  if (sender.device_id == receiver.device_id) {
    throw Error("link_bandwidth requires distinct devices");
  }
  return std::min(sender.uplink_bps, receiver.downlink_bps);
}

inline ClusterSpec scale_bandwidth(const ClusterSpec &cluster, double factor) {
  if (factor <= 0.0) throw Error("bandwidth scale factor must be > 0");
  ClusterSpec scaled = cluster;
  for (auto &d : scaled.devices) {
    d.uplink_bps *= factor;
    d.downlink_bps *= factor;
  }
  return scaled;
}

inline void validate_cluster(const ClusterSpec &cluster) {
  if (cluster.devices.empty()) throw Error("no devices");
  std::set<DeviceId> ids;
  for (const auto &d : cluster.devices) {
    if (!ids.insert(d.device_id).second) {
      throw Error("duplicate device id " + std::to_string(d.device_id));
    }
    if (d.uplink_bps <= 0.0 || d.downlink_bps <= 0.0) {
      throw Error("non-positive bandwidth on device " + std::to_string(d.device_id));
    }
    if (d.mem_capacity_bytes <= 0) {
      throw Error("non-positive memory capacity on device " +
                  std::to_string(d.device_id));
    }
  }
  std::set<DeviceId> seen;
  for (DeviceId id : cluster.pipeline_sequence) {
    if (!ids.count(id)) {
      throw Error("pipeline_sequence references unknown device " +
                  std::to_string(id));
    }
    if (!seen.insert(id).second) {
      throw Error("pipeline_sequence repeats device " + std::to_string(id));
    }
  }
  if (cluster.jitter_ms) {
    auto [lo, hi] = *cluster.jitter_ms;
    if (lo < 0.0 || lo > hi) throw Error("invalid jitter range");
  }
}

/// Returns a copy with pipeline_sequence replaced; used when the search
/// explores device permutations.
inline ClusterSpec with_sequence(const ClusterSpec &cluster,
                                 const std::vector<DeviceId> &sequence) {
  ClusterSpec out = cluster;
  out.pipeline_sequence = sequence;
  validate_cluster(out);
  return out;
}

// ---------------------------------------------------------------------------
// Cluster file format
// ---------------------------------------------------------------------------

inline ClusterSpec cluster_from_json(const nlohmann::json &j) {
  ClusterSpec cluster;
  try {
    for (const auto &dj : j.at("devices")) {
      DeviceSpec dev;
      dev.device_id = dj.at("id").get<DeviceId>();
      dev.name = dj.value("name", "");
      dev.mem_capacity_bytes =
          static_cast<std::int64_t>(dj.at("mem_gb").get<double>() * kBytesPerGb);
      // One bandwidth figure per device: symmetric links, so it populates
      // both directions.
      double bps = dj.at("bandwidth_gbps").get<double>() * kBytesPerSecPerGbps;
      dev.uplink_bps = bps;
      dev.downlink_bps = bps;
      cluster.devices.push_back(dev);
    }
    if (j.contains("pipeline_sequence")) {
      cluster.pipeline_sequence =
          j.at("pipeline_sequence").get<std::vector<DeviceId>>();
    } else {
      for (const auto &d : cluster.devices) {
        cluster.pipeline_sequence.push_back(d.device_id);
      }
    }
    if (j.contains("jitter_ms")) {
      const auto &jit = j.at("jitter_ms");
      cluster.jitter_ms = {jit.at(0).get<double>(), jit.at(1).get<double>()};
    }
  } catch (const nlohmann::json::exception &e) {
    throw IoError(std::string("malformed cluster file: ") + e.what());
  }
  validate_cluster(cluster);
  return cluster;
}

inline ClusterSpec load_cluster(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cluster file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw IoError("cannot parse cluster file " + path + ": " + e.what());
  }
  return cluster_from_json(j);
}

inline nlohmann::json cluster_to_json(const ClusterSpec &cluster) {
  nlohmann::json j;
  j["devices"] = nlohmann::json::array();
  for (const auto &d : cluster.devices) {
    j["devices"].push_back({{"id", d.device_id},
                            {"name", d.name},
                            {"mem_gb", static_cast<double>(d.mem_capacity_bytes) / kBytesPerGb},
                            {"bandwidth_gbps", d.uplink_bps / kBytesPerSecPerGbps}});
  }
  j["pipeline_sequence"] = cluster.pipeline_sequence;
  if (cluster.jitter_ms) {
    j["jitter_ms"] = {cluster.jitter_ms->first, cluster.jitter_ms->second};
  }
  return j;
}

inline void save_cluster(const ClusterSpec &cluster, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write cluster file: " + path);
  out << cluster_to_json(cluster).dump(2) << "\n";
}

}  // namespace fogpipe

#endif  // FOGPIPE_CLUSTER_HPP_
